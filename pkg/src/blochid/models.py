"""Builtin benchmark models (qubit, unit-Bloch-ball coordinates)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lindblad import BlochModel, load_model
from .recon_partial import DEPHASING, RELAXATION, dephasing_model, relaxation_model


@dataclass(frozen=True)
class Builtin:
    name: str
    model: BlochModel
    r0: tuple
    prior: str | None = None
    params: dict | None = None
    horizon: float = 50.0


MODEL1 = BlochModel(
    [[-0.0650, -2.0000, 2.0300],
     [2.0000, -0.0650, -4.0000],
     [-1.9700, 4.0000, -0.0900]],
    [-0.0424, 0.0, 0.0636],
)

# dephasing about (alpha, beta, gamma) with h = (2, 0, 2)
MODEL2_PARAMS = {"hx": 2.0, "hy": 0.0, "hz": 2.0, "alpha": 0.1, "beta": 0.2, "gamma": 0.2}
MODEL2 = dephasing_model(**MODEL2_PARAMS)

# relaxation/dephasing along z with h = (1, 2, 3); the (3,2) and (3,3) entries
# are those of this family (the matrix with A32 = -1, A33 = +0.1 is not
# contractive and its trajectories leave the Bloch ball)
MODEL3_PARAMS = {"gamma_eff": 0.25, "gamma_s": 0.1, "delta_gamma": 0.1 / np.sqrt(2),
                 "hx": 1.0, "hy": 2.0, "hz": 3.0}
MODEL3 = relaxation_model(**MODEL3_PARAMS)
MODEL3_RAW = BlochModel(
    [[-0.25, -3.00, 2.0],
     [3.00, -0.25, -1.0],
     [-2.00, -1.00, 0.1]],
    [0.0, 0.0, 0.1 / np.sqrt(2)],
)

BUILTINS = {
    "Model1": Builtin("Model1", MODEL1, (0.0, 0.0, 1.0), horizon=50.0),
    "Model2": Builtin("Model2", MODEL2, (0.0, 0.0, 1.0), DEPHASING, MODEL2_PARAMS, 50.0),
    "Model3": Builtin("Model3", MODEL3, (0.0, 0.0, 1.0), RELAXATION, MODEL3_PARAMS, 15.0),
    "Model3Raw": Builtin("Model3Raw", MODEL3_RAW, (0.0, 0.0, 1.0), RELAXATION,
                             None, 15.0),
}


def builtin(name: str) -> Builtin:
    key = {k.lower(): k for k in BUILTINS}.get(str(name).lower().replace("_", ""))
    if key is None:
        raise KeyError(f"unknown builtin model {name!r}; choose from {sorted(BUILTINS)}")
    return BUILTINS[key]


def resolve_model(source) -> BlochModel:
    """A builtin name, a JSON path, or a :class:`BlochModel`."""
    if isinstance(source, BlochModel):
        return source
    try:
        return builtin(source).model
    except KeyError:
        return load_model(source)

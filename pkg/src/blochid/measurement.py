"""Stroboscopic sampling with projective shot noise."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ProbabilityOutOfRange

INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0
OBSERVABLES = ("x", "y", "z")


@dataclass(frozen=True)
class MeasurementRecord:
    observable: str | int
    times: np.ndarray
    estimates: np.ndarray
    n_repeats: int | None  # None: exact expectation values
    seed: int | None = None
    horizon: float | None = None

    @property
    def component(self) -> int:
        if isinstance(self.observable, str):
            return OBSERVABLES.index(self.observable)
        return int(self.observable)

    def counts(self):
        """Number of ``+1`` outcomes per time point."""
        if self.n_repeats is None:
            raise ValueError("noiseless record has no counts")
        return np.rint((self.estimates + 1) * self.n_repeats / 2).astype(int)

    def noise_floor(self, fitted=None):
        """Expected RMS shot noise of the per-time estimates."""
        if self.n_repeats is None:
            return 0.0
        r = self.estimates if fitted is None else np.clip(fitted, -1, 1)
        return float(np.sqrt(np.mean(1 - r**2) / self.n_repeats))

    def save(self, stem):
        """Write ``<stem>.csv`` (t,estimate) and ``<stem>.json`` metadata."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        with open(stem.with_suffix(".csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "estimate"])
            for t, e in zip(self.times, self.estimates):
                w.writerow([repr(float(t)), repr(float(e))])
        meta = {
            "observable": self.observable,
            "n_repeats": self.n_repeats,
            "seed": self.seed,
            "T": self.horizon,
        }
        stem.with_suffix(".json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, stem):
        stem = Path(stem)
        if stem.suffix in (".csv", ".json"):
            stem = stem.with_suffix("")
        meta = json.loads(stem.with_suffix(".json").read_text())
        data = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
        return cls(
            meta["observable"], data[:, 0], data[:, 1], meta["n_repeats"],
            seed=meta.get("seed"), horizon=meta.get("T"),
        )


def lds_times(n: int, T: float, shift: float = 0.0) -> np.ndarray:
    """Golden-ratio (Kronecker) low-discrepancy times ``T*frac(k/phi + shift)``, sorted.

    ``shift`` applies a Cranley-Patterson rotation; ``shift=0`` gives the
    plain sequence ``k = 1..n``.
    """
    if n < 1:
        raise ValueError("need at least one sample time")
    if not T > 0:
        raise ValueError("horizon T must be positive")
    k = np.arange(1, n + 1)
    return np.sort(T * np.mod(k * INV_PHI + shift, 1.0))


def sample_record(signal, times, n_repeats, observable, seed=None) -> MeasurementRecord:
    """Binomial shot-noise estimates of a +-1 observable with expectation ``signal(t)``.

    ``signal`` is a callable of the time array or an array of values at
    ``times``.  ``n_repeats=None`` returns the exact expectation values.
    """
    times = np.asarray(times, dtype=float)
    r = np.asarray(signal(times) if callable(signal) else signal, dtype=float).reshape(-1)
    if r.shape != times.shape:
        raise ValueError("signal values do not match the time grid")
    worst = float(np.max(np.abs(r))) if r.size else 0.0
    if worst > 1 + 1e-6:
        raise ProbabilityOutOfRange(f"|r(t)| reaches {worst:.6g} > 1")
    r = np.clip(r, -1.0, 1.0)
    if n_repeats is None:
        return MeasurementRecord(observable, times, r.copy(), None, seed)
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    rng = np.random.default_rng(seed)
    m = rng.binomial(n_repeats, (1 + r) / 2)
    return MeasurementRecord(observable, times, 2 * m / n_repeats - 1, int(n_repeats), seed)


def derive_seed(base: int, *keys: int) -> int:
    """Independent child seed for ``(base, keys...)``."""
    ss = np.random.SeedSequence([int(base), *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))

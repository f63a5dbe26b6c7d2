"""Recover ``(A, c)`` from a jointly fitted full Bloch-vector signal.

In the generic case each damped pair ``e^{-g t}(a cos wt + b sin wt)`` yields the
eigenvector pair ``(a -+ i b)/2`` for ``-g +- i w`` and each exponential
``a e^{-d t}`` an eigenvector ``a`` for ``-d``; then ``A = S D S^{-1}`` and
``c = -A a_0``.  Non-diagonalisable qubit generators (five Jordan cases) are
handled by :func:`reconstruct_jordan`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CaseMismatch, ConjugacyViolation, SingularS
from .estimation import SignalModel
from .lindblad import BlochModel
from .propagation import propagate

COND_MAX = 1e6
SINGULAR_RCOND = 1e-12
IMAG_TOL = 1e-9

FULL = "Full"
PARTIAL = "PartialMissingEigenvector"
GAUGE = "GaugeOrbit"


@dataclass(frozen=True)
class ReconstructionResult:
    model: BlochModel | None
    identifiable: str
    residual: float
    case_label: str
    # recoverable invariant subspace (columns) and A's action on it, for partial cases
    subspace: np.ndarray | None = None
    subspace_action: np.ndarray | None = None
    steady_state: np.ndarray | None = None
    notes: tuple = field(default=())

    def to_json(self):
        return {
            "A": None if self.model is None else self.model.A.tolist(),
            "c": None if self.model is None else self.model.c.tolist(),
            "identifiable": self.identifiable,
            "residual": self.residual,
            "case_label": self.case_label,
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2)


def relative_error(estimate: BlochModel, truth: BlochModel) -> float:
    """``(|A^ - A|_F + |c^ - c|) / (|A|_F + |c|)``."""
    num = np.linalg.norm(estimate.A - truth.A) + np.linalg.norm(estimate.c - truth.c)
    den = np.linalg.norm(truth.A) + np.linalg.norm(truth.c)
    return float(num / den)


def _groups(signal: SignalModel):
    """Split terms into constant, pairs ``{(g, w): {power: (cos, sin)}}`` and reals."""
    a0 = np.zeros(signal.n_channels)
    pairs, reals = {}, {}
    for k, term in enumerate(signal.terms):
        vec = signal.coeffs[k]
        if term.kind == "constant":
            if term.power:
                raise CaseMismatch("polynomial constant terms are not part of any Bloch signal")
            a0 = a0 + vec
        elif term.kind == "exponential":
            reals.setdefault(float(term.decay), {})[term.power] = vec
        else:
            slot = pairs.setdefault((float(term.decay), float(term.omega)), {})
            cos, sin = slot.get(term.power, (None, None))
            if term.kind == "damped_cos":
                cos = vec
            else:
                sin = vec
            slot[term.power] = (cos, sin)
    for key, slot in pairs.items():
        for p, (cos, sin) in slot.items():
            if cos is None or sin is None:
                raise ConjugacyViolation(f"pair at {key} lacks its cos or sin partner")
    return a0, pairs, reals


def _horizon(signal):
    rates = [t.decay for t in signal.terms if t.kind != "constant" and t.decay > 0]
    if not rates:
        return 10.0
    return float(np.clip(5.0 / min(rates), 1.0, 100.0))


def model_residual(model: BlochModel, signal: SignalModel, r0=None) -> float:
    """Relative RMS misfit between the re-simulated model and the signal."""
    t = np.linspace(0.0, _horizon(signal), 400)
    ref = signal.evaluate(t)
    start = ref[:, 0] if r0 is None else np.asarray(r0, dtype=float)
    sim = propagate(model, start, t).values
    return float(np.sqrt(np.mean((sim - ref) ** 2)) / max(np.sqrt(np.mean(ref**2)), 1e-300))


def _assemble(S, Lam, a0):
    d = S.shape[0]
    s = np.linalg.svd(S, compute_uv=False)
    if s[-1] <= SINGULAR_RCOND * s[0]:
        raise SingularS("eigenvector matrix is singular: the initial state has no overlap "
                        "with some eigenvector")
    M = S @ Lam @ np.linalg.inv(S)
    scale = max(np.max(np.abs(M)), 1e-300)
    if np.max(np.abs(M.imag)) > IMAG_TOL * max(scale, 1.0):
        raise ConjugacyViolation(f"S D S^-1 has imaginary part {np.max(np.abs(M.imag)):.3e}")
    A = M.real
    return BlochModel(A, -A @ a0), float(s[0] / s[-1])


def reconstruct_full(signal: SignalModel, r0=None) -> ReconstructionResult:
    """Generic (diagonalisable) reconstruction from a full-state signal."""
    a0, pairs, reals = _groups(signal)
    d = signal.n_channels
    if any(p for slot in pairs.values() for p in slot) or any(p for slot in reals.values() for p in slot):
        raise CaseMismatch("signal has polynomial envelopes; use reconstruct_jordan")
    cols, lam = [], []
    for (g, w), slot in pairs.items():
        cos, sin = slot[0]
        v = 0.5 * (cos - 1j * sin)
        cols += [v, v.conj()]
        lam += [complex(-g, w), complex(-g, -w)]
    for g, slot in reals.items():
        cols.append(slot[0].astype(complex))
        lam.append(complex(-g, 0.0))
    if len(cols) != d:
        raise SingularS(f"signal determines {len(cols)} of {d} eigenvectors")
    S = np.column_stack(cols)
    model, cond = _assemble(S, np.diag(lam), a0)
    flag = FULL if cond < COND_MAX else PARTIAL
    return ReconstructionResult(model, flag, model_residual(model, signal, r0), "Generic",
                                steady_state=a0)


def infer_case(signal: SignalModel) -> str:
    """Label the eigenstructure a qubit signal implies (never guesses hidden structure)."""
    a0, pairs, reals = _groups(signal)
    if pairs:
        if any(p for slot in pairs.values() for p in slot):
            return "NonGeneric"
        return "Generic" if 2 * len(pairs) + len(reals) == signal.n_channels else "Partial"
    shapes = sorted((tuple(sorted(slot)) for slot in reals.values()), key=len, reverse=True)
    if signal.n_channels != 3:
        return "Generic" if all(s == (0,) for s in shapes) and len(shapes) == signal.n_channels \
            else "NonGeneric"
    table = {
        ((0, 1), (0,)): "Case1",
        ((0,), (0,)): "Case2",
        ((0, 1, 2),): "Case3",
        ((0, 1),): "Case4",
        ((0,),): "Case5",
        ((0,), (0,), (0,)): "Generic",
    }
    return table.get(tuple(shapes), "Unknown")


def reconstruct_jordan(signal: SignalModel, case: str, r0=None) -> ReconstructionResult:
    """Qubit reconstruction for the non-diagonalisable (and degenerate) cases.

    Cases 1, 3 and 5 determine ``A`` completely; for Cases 2 and 4 one
    eigenvector is invisible and only an invariant subspace is returned.
    """
    if signal.n_channels != 3:
        raise CaseMismatch("Jordan-case reconstruction is defined for qubits (d = 3)")
    found = infer_case(signal)
    if found != case:
        raise CaseMismatch(f"signal term structure corresponds to {found}, not {case}")
    a0, _, reals = _groups(signal)
    keys = sorted(reals, key=lambda g: -len(reals[g]))

    if case == "Case1":
        g1, g2 = keys
        S = np.column_stack([reals[g1][1], reals[g1][0], reals[g2][0]])
        J = np.array([[-g1, 1, 0], [0, -g1, 0], [0, 0, -g2]], dtype=complex)
    elif case == "Case3":
        (g,) = keys
        S = np.column_stack([2 * reals[g][2], reals[g][1], reals[g][0]])
        J = np.array([[-g, 1, 0], [0, -g, 1], [0, 0, -g]], dtype=complex)
    elif case == "Case5":
        (g,) = keys
        A = -g * np.eye(3)
        model = BlochModel(A, -A @ a0)
        return ReconstructionResult(model, FULL, model_residual(model, signal, r0), case,
                                    steady_state=a0,
                                    notes=("valid only under the assertion A = gamma*I",))
    elif case == "Case2":
        g1, g2 = sorted(keys)
        Q = np.column_stack([reals[g1][0], reals[g2][0]])
        M = np.diag([-g1, -g2])
        return _partial(Q, M, a0, case)
    elif case == "Case4":
        (g,) = keys
        Q = np.column_stack([reals[g][1], reals[g][0]])
        M = np.array([[-g, 1.0], [0.0, -g]])
        return _partial(Q, M, a0, case)
    else:
        raise CaseMismatch(f"unknown case label {case!r}")

    model, cond = _assemble(S.astype(complex), J, a0)
    flag = FULL if cond < COND_MAX else PARTIAL
    return ReconstructionResult(model, flag, model_residual(model, signal, r0), case,
                                steady_state=a0)


def _partial(Q, M, a0, case):
    return ReconstructionResult(
        None, PARTIAL, float("nan"), case, subspace=Q, subspace_action=M, steady_state=a0,
        notes=("one eigenvector has no overlap with the signal; a second initial state "
               "would be needed",),
    )


def reconstruct(signal: SignalModel, r0=None) -> ReconstructionResult:
    """Dispatch on the term structure of the signal."""
    case = infer_case(signal)
    if case == "Generic":
        return reconstruct_full(signal, r0)
    if case in ("Case1", "Case2", "Case3", "Case4", "Case5") and signal.n_channels == 3:
        if case == "Case5":
            # a single exponential is also what a generic A gives when the
            # initial state overlaps one eigenvector only
            a0, _, reals = _groups(signal)
            (g,) = reals
            Q = reals[g][0][:, None]
            return _partial(Q, np.array([[-g]]), a0, case)
        return reconstruct_jordan(signal, case, r0)
    a0, pairs, reals = _groups(signal)
    cols, acts = [], []
    for (g, w), slot in pairs.items():
        cos, sin = slot[0]
        cols += [cos, sin]
        acts.append(np.array([[-g, -w], [w, -g]]))
    for g, slot in reals.items():
        cols.append(slot[0])
        acts.append(np.array([[-g]]))
    Q = np.column_stack(cols) if cols else np.zeros((signal.n_channels, 0))
    M = np.zeros((Q.shape[1], Q.shape[1]))
    i = 0
    for blk in acts:
        k = blk.shape[0]
        M[i:i + k, i:i + k] = blk
        i += k
    return _partial(Q, M, a0, case)

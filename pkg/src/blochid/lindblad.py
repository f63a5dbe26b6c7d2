"""Lindblad-form generators and their affine Bloch-equation representation.

Coordinates are taken with respect to an orthonormal Hermitian basis
``sigma_1..sigma_{N^2}`` (``Tr(sigma_m sigma_n) = delta_mn``) whose last element
is ``I/sqrt(N)``.  The reduced Bloch vector ``r_n = Tr(sigma_n rho)`` then obeys

    dr/dt = A r + c

For a qubit this "normalized" frame differs from the usual Pauli frame
(``r = <sigma_x,y,z>``, unit ball) by a factor ``sqrt(2)`` in ``r`` and ``c``;
``A`` is the same in both.  See :func:`to_pauli_frame`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, Inconsistent, NonHermitianF

HERMITIAN_TOL = 1e-12
PHYSICAL_TOL = -1e-10

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class BasisSet:
    """Orthonormal Hermitian operator basis with ``I/sqrt(N)`` last."""

    matrices: np.ndarray  # (N^2, N, N)

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    def __len__(self):
        return self.matrices.shape[0]

    def validate(self, tol=1e-12):
        n = self.dim
        m = self.matrices
        if m.shape != (n * n, n, n):
            raise DimensionMismatch(f"basis must hold {n * n} matrices of size {n}x{n}")
        gram = np.einsum("aij,bji->ab", m, m)
        if not np.allclose(gram, np.eye(n * n), atol=tol):
            raise ValueError("basis is not orthonormal under Tr(XY)")
        if not np.allclose(m, np.conj(np.swapaxes(m, 1, 2)), atol=tol):
            raise ValueError("basis elements must be Hermitian")
        if not np.allclose(m[-1], np.eye(n) / np.sqrt(n), atol=tol):
            raise ValueError("last basis element must be I/sqrt(N)")


def gell_mann_basis(n: int) -> BasisSet:
    """Generalized Gell-Mann matrices normalized to ``Tr(s_m s_n) = delta_mn``.

    Order: for each pair ``j < k`` the symmetric then antisymmetric element,
    followed by the ``n-1`` diagonal elements and finally ``I/sqrt(n)``.  For
    ``n = 2`` this is ``(sigma_x, sigma_y, sigma_z, I)/sqrt(2)``.
    """
    if n < 2:
        raise ValueError("Hilbert space dimension must be >= 2")
    mats = []
    for j in range(n):
        for k in range(j + 1, n):
            s = np.zeros((n, n), dtype=complex)
            s[j, k] = s[k, j] = 1 / np.sqrt(2)
            a = np.zeros((n, n), dtype=complex)
            a[j, k] = -1j / np.sqrt(2)
            a[k, j] = 1j / np.sqrt(2)
            mats += [s, a]
    for l in range(1, n):
        d = np.zeros((n, n), dtype=complex)
        d[np.arange(l), np.arange(l)] = 1
        d[l, l] = -l
        mats.append(d / np.sqrt(l * (l + 1)))
    mats.append(np.eye(n, dtype=complex) / np.sqrt(n))
    return BasisSet(np.array(mats))


@dataclass(frozen=True)
class LindbladSpec:
    """Hamiltonian and GKS coefficients of a Markovian master equation.

    ``h`` holds the coefficients of ``H`` on the trace-zero basis elements
    (``H = sum_n h_n sigma_n + h0 sigma_{N^2}``) and ``f[m, n]`` multiplies
    ``F_n rho F_m^dag - {F_m^dag F_n, rho}/2`` with ``F_m = sigma_m``.
    """

    dim: int
    h: np.ndarray
    f: np.ndarray
    h0: float = 0.0

    def __post_init__(self):
        d = self.dim**2 - 1
        h = np.asarray(self.h, dtype=float).reshape(-1)
        f = np.asarray(self.f, dtype=complex)
        if h.shape != (d,):
            raise DimensionMismatch(f"h must have length {d}, got {h.shape}")
        if f.shape != (d, d):
            raise DimensionMismatch(f"f must be {d}x{d}, got {f.shape}")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "f", f)

    @property
    def f_re(self):
        return self.f.real

    @property
    def f_im(self):
        return self.f.imag


@dataclass(frozen=True)
class BlochModel:
    """Affine generator ``dr/dt = A r + c``."""

    A: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        c = np.array(self.c, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got shape {A.shape}")
        if c.shape != (A.shape[0],):
            raise DimensionMismatch(f"c must have length {A.shape[0]}, got {c.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(c))):
            raise ValueError("A and c must be finite")
        A.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def rhs(self, r):
        return self.A @ r + self.c


@dataclass(frozen=True)
class SteadyState:
    """Particular fixed point plus a basis of ``null(A)`` (columns)."""

    point: np.ndarray
    kernel: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def unique(self) -> bool:
        return self.kernel.shape[1] == 0


def _check_hermitian(f):
    err = np.max(np.abs(f - f.conj().T)) if f.size else 0.0
    if err > HERMITIAN_TOL:
        raise NonHermitianF(f"f deviates from Hermitian by {err:.3e}")


def unreduced_generator(spec: LindbladSpec, basis: BasisSet | None = None) -> np.ndarray:
    """Real ``N^2 x N^2`` matrix ``L + D`` acting on the full coordinate vector."""
    basis = basis if basis is not None else gell_mann_basis(spec.dim)
    if len(basis) != spec.dim**2 or basis.dim != spec.dim:
        raise DimensionMismatch(
            f"basis has {len(basis)} elements of size {basis.dim}, spec needs {spec.dim**2}"
        )
    _check_hermitian(spec.f)
    s = basis.matrices
    F = s[:-1]
    H = np.einsum("n,nij->ij", spec.h, F) + spec.h0 * s[-1]

    comm = np.einsum("mij,njk->mnik", s, s) - np.einsum("nij,mjk->mnik", s, s)
    anti = np.einsum("mij,njk->mnik", s, s) + np.einsum("nij,mjk->mnik", s, s)
    L = np.einsum("ij,mnji->mn", 1j * H, comm)

    Fd = np.conj(np.swapaxes(F, 1, 2))
    # Tr(F_p^dag s_m F_q s_n)
    sandwich = np.einsum("pij,mjk,qkl,nli->pqmn", Fd, s, F, s, optimize=True)
    FdF = np.einsum("pij,qjk->pqik", Fd, F)
    anti_term = np.einsum("pqij,mnji->pqmn", FdF, anti, optimize=True)
    D = np.einsum("pq,pqmn->mn", spec.f, sandwich - 0.5 * anti_term)

    G = L + D
    if np.max(np.abs(G.imag)) > 1e-10 * max(1.0, np.max(np.abs(G))):
        raise NonHermitianF("generator has a non-negligible imaginary part")
    G = G.real
    # trace preservation: d/dt Tr(rho) = 0
    assert np.max(np.abs(G[-1])) <= 1e-10 * max(1.0, np.max(np.abs(G))), "trace row nonzero"
    return G


def build_bloch(spec: LindbladSpec, basis: BasisSet | None = None) -> BlochModel:
    """Compile a Lindblad spec into ``(A, c)`` in the normalized frame."""
    G = unreduced_generator(spec, basis)
    d = spec.dim**2 - 1
    return BlochModel(G[:d, :d], G[:d, d] / np.sqrt(spec.dim))


def is_physical(spec: LindbladSpec) -> tuple[bool, float]:
    """Positivity of the GKS matrix; returns ``(ok, smallest eigenvalue)``."""
    _check_hermitian(spec.f)
    lam_min = float(np.linalg.eigvalsh(0.5 * (spec.f + spec.f.conj().T))[0])
    return lam_min >= PHYSICAL_TOL, lam_min


def steady_state(model: BlochModel, tol: float = 1e-10) -> SteadyState:
    A, c = model.A, model.c
    scale = max(1.0, np.linalg.norm(A, 2), np.linalg.norm(c))
    kernel = scipy.linalg.null_space(A, rcond=1e-12) if A.size else np.zeros((0, 0))
    if kernel.shape[1] == 0:
        point = np.linalg.solve(A, -c)
    else:
        point = np.linalg.lstsq(A, -c, rcond=1e-12)[0]
        point = point - kernel @ (kernel.T @ point)
    res = np.linalg.norm(A @ point + c)
    if res > tol * scale:
        raise Inconsistent(f"c is not in the range of A (residual {res:.3e})")
    return SteadyState(point, kernel)


def embed_qubit_model(A, c) -> BlochModel:
    """Wrap a raw 3x3 Bloch matrix and 3-vector without any physicality check."""
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    if A.shape != (3, 3) or c.shape != (3,):
        raise DimensionMismatch(f"expected shapes (3, 3) and (3,), got {A.shape} and {c.shape}")
    return BlochModel(A, c)


def to_pauli_frame(model: BlochModel) -> BlochModel:
    """Rescale a normalized-frame qubit model to ``<sigma>`` coordinates."""
    if model.dim != 3:
        raise DimensionMismatch("Pauli frame is defined for qubits only")
    return BlochModel(model.A, np.sqrt(2) * model.c)


# -- qubit constructors ------------------------------------------------------

def qubit_spec(h_pauli, f, h0=0.0) -> LindbladSpec:
    """Qubit spec from ``H = h0 I + h . sigma`` (unnormalized Pauli matrices).

    ``f`` is given with respect to ``F_n = sigma_n / sqrt(2)``.
    """
    h = np.sqrt(2) * np.asarray(h_pauli, dtype=float)
    return LindbladSpec(2, h, np.asarray(f, dtype=complex), h0=np.sqrt(2) * h0)


def jump_operator_f(ops, basis: BasisSet | None = None) -> np.ndarray:
    """GKS matrix of ``sum_k D[V_k]`` for explicit jump operators ``V_k``.

    With ``V_k = sum_n v_kn F_n`` the dissipator equals ``f_mn = sum_k conj(v_km) v_kn``.
    Identity components of ``V_k`` are dropped.
    """
    ops = [np.asarray(v, dtype=complex) for v in ops]
    n = ops[0].shape[0]
    basis = basis if basis is not None else gell_mann_basis(n)
    F = basis.matrices[:-1]
    d = n * n - 1
    f = np.zeros((d, d), dtype=complex)
    for v in ops:
        coef = np.einsum("nij,ji->n", F, v)  # Tr(F_n V), F_n Hermitian
        f += np.outer(coef.conj(), coef)
    return f


def dephasing_spec(hx, hy, hz, alpha, beta, gamma) -> LindbladSpec:
    """``H = (h . sigma)/2`` with one dephasing operator ``V = (a sx + b sy + g sz)/sqrt(2)``."""
    V = (alpha * PAULI_X + beta * PAULI_Y + gamma * PAULI_Z) / np.sqrt(2)
    return qubit_spec(0.5 * np.array([hx, hy, hz]), jump_operator_f([V]))


def relaxation_spec(hx, hy, hz, dephasing, gamma1, gamma2) -> LindbladSpec:
    """``H = (h . sigma)/2``, ``V1 = sqrt(G) sz``, ``V2 = sqrt(g1)|0><1|``, ``V3 = sqrt(g2)|1><0|``."""
    lower = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
    ops = [np.sqrt(dephasing) * PAULI_Z, np.sqrt(gamma1) * lower, np.sqrt(gamma2) * lower.T]
    return qubit_spec(0.5 * np.array([hx, hy, hz]), jump_operator_f(ops))


def qubit_closed_form(h_pauli, f) -> BlochModel:
    """Explicit qubit Bloch operators for ``H = h . sigma`` and ``F_n = sigma_n/sqrt(2)``."""
    hx, hy, hz = h_pauli
    R = np.asarray(f).real
    I = np.asarray(f).imag
    A = np.array(
        [
            [-(R[1, 1] + R[2, 2]), R[0, 1] - 2 * hz, R[0, 2] + 2 * hy],
            [R[0, 1] + 2 * hz, -(R[0, 0] + R[2, 2]), R[1, 2] - 2 * hx],
            [R[0, 2] - 2 * hy, R[1, 2] + 2 * hx, -(R[0, 0] + R[1, 1])],
        ]
    )
    c = np.sqrt(2) * np.array([I[1, 2], -I[0, 2], I[0, 1]])
    return BlochModel(A, c)


# -- JSON --------------------------------------------------------------------

def spec_to_json(spec: LindbladSpec) -> dict:
    return {
        "dim": spec.dim,
        "h": spec.h.tolist(),
        "h0": spec.h0,
        "f_re": spec.f.real.tolist(),
        "f_im": spec.f.imag.tolist(),
    }


def spec_from_json(data: dict) -> LindbladSpec:
    f = np.asarray(data["f_re"], dtype=float) + 1j * np.asarray(data.get("f_im", 0.0), dtype=float)
    return LindbladSpec(int(data["dim"]), data["h"], f, h0=float(data.get("h0", 0.0)))


def model_to_json(model: BlochModel) -> dict:
    return {"A": model.A.tolist(), "c": model.c.tolist()}


def model_from_json(data: dict) -> BlochModel:
    return BlochModel(data["A"], data["c"])


def load_model(path) -> BlochModel:
    """Read either a raw ``{A, c}`` file or a Lindblad spec file (compiled)."""
    data = json.loads(Path(path).read_text())
    if "A" in data:
        return model_from_json(data)
    return build_bloch(spec_from_json(data))

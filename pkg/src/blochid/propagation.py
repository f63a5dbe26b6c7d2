"""Exact trajectories of ``dr/dt = A r + c`` and their closed-form signal expansion."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path

import numpy as np
import scipy.linalg

from .lindblad import BlochModel, steady_state

# cluster diameter allowed for k coalescing eigenvalues, relative to ||A||;
# a perturbed k-dimensional Jordan block splits by ~eps**(1/k)
CLUSTER_BASE = 1e-12
XI_TOL = 1e-9
GENERIC_COND_MAX = 1e8

CASE_LABELS = ("Generic", "Case1", "Case2", "Case3", "Case4", "Case5")


@dataclass(frozen=True)
class JordanBlock:
    eigenvalue: complex
    chain: np.ndarray  # (d, k); chain[:, 0] is a proper eigenvector

    @property
    def size(self) -> int:
        return self.chain.shape[1]


@dataclass(frozen=True)
class EigenCluster:
    """Eigenvalues treated as one degenerate eigenvalue, with its Jordan blocks."""

    eigenvalue: complex
    blocks: tuple

    @property
    def multiplicity(self) -> int:
        return sum(b.size for b in self.blocks)

    @property
    def index(self) -> int:
        """Size of the largest Jordan block."""
        return max(b.size for b in self.blocks)


@dataclass(frozen=True)
class EigenStructure:
    A: np.ndarray
    clusters: tuple
    S: np.ndarray
    J: np.ndarray
    classification: str
    pairs: tuple = ()  # (decay gamma, omega > 0, v_plus) for eigenvalues -gamma +- i omega
    reals: tuple = ()  # (decay delta, x) for eigenvalue -delta

    @property
    def eigenvalues(self):
        return np.array([cl.eigenvalue for cl in self.clusters])

    @property
    def jordan(self):
        return [b for cl in self.clusters for b in cl.blocks if b.size > 1]

    @property
    def block_sizes(self):
        return [b.size for cl in self.clusters for b in cl.blocks]


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    values: np.ndarray  # (d, T)

    def to_csv(self, path):
        d = self.values.shape[0]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"r{i + 1}" for i in range(d)])
            for k, t in enumerate(self.times):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in self.values[:, k]])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        return cls(data[:, 0], data[:, 1:].T.copy())


# -- eigenstructure ----------------------------------------------------------

def _diameter(vals):
    return max((abs(a - b) for a in vals for b in vals), default=0.0)


def _linkage(vals, idx, tol):
    groups = []
    for i in idx:
        hits = [g for g in groups if any(abs(vals[i] - vals[j]) <= tol for j in g)]
        merged = [i]
        for g in hits:
            merged += g
            groups.remove(g)
        groups.append(merged)
    return groups


def _cluster(vals, idx, scale, max_size):
    if max_size <= 1:
        return [[i] for i in idx]
    out = []
    for g in _linkage(vals, idx, CLUSTER_BASE ** (1 / max_size) * scale):
        if len(g) == 1 or _diameter(vals[g]) <= CLUSTER_BASE ** (1 / len(g)) * scale:
            out.append(sorted(g))
        else:
            out.extend(_cluster(vals, g, scale, len(g) - 1))
    return out


def _numrank(M, tol):
    if M.size == 0:
        return 0
    return int(np.sum(np.linalg.svd(M, compute_uv=False) > tol))


def _nilpotent_chains(N, tol):
    """Jordan chains of a (numerically) nilpotent ``m x m`` matrix."""
    m = N.shape[0]
    powers = [np.eye(m, dtype=complex)]
    for _ in range(m):
        powers.append(powers[-1] @ N)
    kdim = [m - _numrank(P, tol**k if k else 0.0) for k, P in enumerate(powers)]
    kdim = [0] + [min(max(x, 0), m) for x in kdim[1:]]
    for k in range(1, m + 1):
        kdim[k] = max(kdim[k], kdim[k - 1])
    kdim[m] = m
    kmax = next(k for k in range(1, m + 1) if kdim[k] == m)

    def kernel(k):
        if k == 0:
            return np.zeros((m, 0), dtype=complex)
        _, s, vh = np.linalg.svd(powers[k])
        return vh[m - kdim[k]:].conj().T

    chains = []  # list of (length, top vector)
    for k in range(kmax, 0, -1):
        need = (kdim[k] - kdim[k - 1]) - sum(1 for L, _ in chains if L >= k)
        if need <= 0:
            continue
        existing = [np.linalg.matrix_power(N, L - k) @ v for L, v in chains if L >= k]
        M = np.column_stack([kernel(k - 1)] + [e[:, None] for e in existing]) if (
            k > 1 or existing) else np.zeros((m, 0), dtype=complex)
        cand = kernel(k)
        if M.shape[1]:
            Q, _ = np.linalg.qr(M)
            cand = cand - Q @ (Q.conj().T @ cand)
        u, s, _ = np.linalg.svd(cand, full_matrices=False)
        for j in range(need):
            chains.append((k, u[:, j]))
    out = []
    for L, v in chains:
        cols = [np.linalg.matrix_power(N, L - 1 - j) @ v for j in range(L)]
        out.append(np.column_stack(cols))
    return out


def eigenstructure(model: BlochModel | np.ndarray) -> EigenStructure:
    """Clustered eigen-decomposition with Jordan chains and a case label."""
    A = model.A if isinstance(model, BlochModel) else np.asarray(model, dtype=float)
    d = A.shape[0]
    scale = max(np.linalg.norm(A, 2), 1e-300)
    lam, vecs = np.linalg.eig(A)
    groups = _cluster(lam, list(range(d)), scale, d)

    clusters = []
    for g in groups:
        m = len(g)
        if m == 1:
            mu = complex(lam[g[0]])
            v = vecs[:, g[0]].astype(complex)
            clusters.append(EigenCluster(mu, (JordanBlock(mu, v[:, None]),)))
            continue
        mu = complex(np.mean(lam[g]))
        if abs(mu.imag) <= CLUSTER_BASE ** (1 / m) * scale:
            mu = complex(mu.real, 0.0)
        Nfull = A - mu * np.eye(d)
        P = np.linalg.matrix_power(Nfull, m)
        _, _, vh = np.linalg.svd(P)
        V = vh[d - m:].conj().T  # orthonormal basis of the generalized eigenspace
        if mu.imag == 0.0:
            V = _realify(V)
        Nloc = V.conj().T @ Nfull @ V
        tol = 1e-6 * max(scale, abs(mu), 1e-300)
        blocks = tuple(JordanBlock(mu, V @ ch) for ch in _nilpotent_chains(Nloc, tol))
        clusters.append(EigenCluster(mu, blocks))

    clusters.sort(key=lambda cl: (-cl.eigenvalue.real, -cl.eigenvalue.imag))
    cols, diag, sup = [], [], []
    for cl in clusters:
        for b in cl.blocks:
            for j in range(b.size):
                cols.append(b.chain[:, j])
                diag.append(cl.eigenvalue)
                sup.append(1.0 if j < b.size - 1 else 0.0)
    S = np.column_stack(cols)
    J = np.diag(np.array(diag, dtype=complex)) + np.diag(np.array(sup[:-1], dtype=complex), 1)

    pairs, reals = [], []
    for cl in clusters:
        if cl.multiplicity != 1:
            continue
        mu, v = cl.eigenvalue, cl.blocks[0].chain[:, 0]
        if mu.imag > 0:
            pairs.append((-mu.real, mu.imag, v))
        elif mu.imag == 0:
            reals.append((-mu.real, v.real))

    return EigenStructure(
        A=A, clusters=tuple(clusters), S=S, J=J,
        classification=_classify(clusters, d), pairs=tuple(pairs), reals=tuple(reals),
    )


def _realify(V):
    """Real orthonormal basis for a subspace known to be closed under conjugation."""
    X = np.hstack([V.real, V.imag])
    u, s, _ = np.linalg.svd(X, full_matrices=False)
    return u[:, : V.shape[1]].astype(complex)


def _classify(clusters, d):
    if all(cl.multiplicity == 1 for cl in clusters):
        return "Generic"
    if d != 3:
        return "NonGeneric"
    mult = sorted(cl.multiplicity for cl in clusters)
    big = max(clusters, key=lambda cl: cl.multiplicity)
    sizes = sorted((b.size for b in big.blocks), reverse=True)
    if mult == [1, 2]:
        return "Case1" if sizes == [2] else "Case2"
    return {(3,): "Case3", (2, 1): "Case4", (1, 1, 1): "Case5"}[tuple(sizes)]


# -- propagation -------------------------------------------------------------

def propagate(model: BlochModel, r0, times, structure: EigenStructure | None = None) -> Trajectory:
    """``r(t) = r_ss + expm(tA)(r0 - r_ss)`` at each requested time."""
    times = np.asarray(times, dtype=float).reshape(-1)
    if not np.all(np.isfinite(times)) or np.any(times < 0):
        raise ValueError("times must be finite and non-negative")
    r0 = np.asarray(r0, dtype=float)
    rss = steady_state(model).point
    delta = r0 - rss
    es = structure if structure is not None else eigenstructure(model)
    if es.classification == "Generic" and np.linalg.cond(es.S) < GENERIC_COND_MAX:
        lam = np.diag(es.J)
        w = np.linalg.solve(es.S, delta.astype(complex))
        vals = (es.S @ (np.exp(np.outer(lam, times)) * w[:, None])).real
    else:
        E = scipy.linalg.expm(times[:, None, None] * model.A[None])
        vals = np.einsum("tij,j->it", E, delta)
    return Trajectory(times, rss[:, None] + vals)


# -- closed-form signal ------------------------------------------------------

@dataclass(frozen=True)
class SignalTerm:
    """``t^power e^{-decay t} [cos_vec cos(omega t) + sin_vec sin(omega t)]``."""

    decay: float
    omega: float
    power: int
    cos_vec: np.ndarray
    sin_vec: np.ndarray

    def evaluate(self, times):
        t = np.asarray(times, dtype=float)
        env = t**self.power * np.exp(-self.decay * t)
        out = np.outer(self.cos_vec, env * np.cos(self.omega * t))
        if self.omega:
            out += np.outer(self.sin_vec, env * np.sin(self.omega * t))
        return out


@dataclass(frozen=True)
class SignalForm:
    a0: np.ndarray
    terms: tuple
    xi: tuple = field(default=())  # (eigenvalue, 0 or 1) per cluster

    def evaluate(self, times):
        t = np.asarray(times, dtype=float)
        out = np.repeat(self.a0[:, None], t.size, axis=1).astype(float)
        for term in self.terms:
            out += term.evaluate(t)
        return out


def signal_form(structure: EigenStructure, r0, r_ss) -> SignalForm:
    """Expand ``r(t)`` into constant, (poly-)damped sinusoid and exponential terms."""
    A = structure.A
    d = A.shape[0]
    r0 = np.asarray(r0, dtype=float)
    r_ss = np.asarray(r_ss, dtype=float)
    delta = r0 - r_ss
    norm = np.linalg.norm(delta)
    w = np.linalg.solve(structure.S, delta.astype(complex))

    terms, xi = [], []
    col = 0
    for cl in structure.clusters:
        m = cl.multiplicity
        u = structure.S[:, col:col + m] @ w[col:col + m]
        col += m
        mu = cl.eigenvalue
        flag = 0 if np.linalg.norm(u) < XI_TOL * max(norm, 1e-300) or norm == 0 else 1
        xi.append((mu, flag))
        if not flag or mu.imag < 0:
            continue
        N = A - mu * np.eye(d)
        v = u.copy()
        for j in range(cl.index):
            vec = v / factorial(j)
            if mu.imag > 0:
                terms.append(SignalTerm(-mu.real, mu.imag, j, 2 * vec.real, -2 * vec.imag))
            else:
                terms.append(SignalTerm(-mu.real, 0.0, j, vec.real, np.zeros(d)))
            v = N @ v
    return SignalForm(r_ss.copy(), tuple(terms), tuple(xi))


def trajectory_signal_form(model: BlochModel, r0) -> SignalForm:
    es = eigenstructure(model)
    return signal_form(es, r0, steady_state(model).point)


def save_trajectory(traj: Trajectory, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    traj.to_csv(path)

"""Identification from partial state information via Laplace-domain coefficient matching.

Three routes are provided:

* :func:`laplace_point_identify` -- exact recovery of ``(A, c)`` from the
  Laplace transform sampled at ``d + 1`` real points (a verification path).
* :func:`solve_model` -- least-squares matching of the rational-function
  coefficients of one (or more) measured traces against a parametric prior.
* :func:`reconstruct_two_trace` -- the same with two jointly fitted traces
  sharing a denominator.

The structural side is computed numerically for any candidate model: with
``adj(sI - A) = sum_k M_k s^(d-k)`` (Faddeev-LeVerrier) the trace ``R_i(s)``
is ``e_i^T adj(sI - A)(s r0 + c) / (s det(sI - A))``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import AmbiguousSolution, NoConvergence, SingularC, UnsupportedPrior
from .estimation import SignalModel, laplace_of
from .lindblad import BlochModel
from .measurement import OBSERVABLES

SINGULAR_C_COND = 1e12
CONVERGENCE_TOL = 0.05
SYMMETRY_TOL = 1e-9
N_PERTURBED = 16
PERTURB = 0.2

GENERIC = "GenericQubit"
DEPHASING = "DephasingGeneralBasis"
RELAXATION = "RelaxationDephasingZ"
PRIOR_ALIASES = {
    "generic": GENERIC, GENERIC: GENERIC,
    "dephasing": DEPHASING, DEPHASING: DEPHASING,
    "relaxation": RELAXATION, RELAXATION: RELAXATION,
}


# -- exact d+1 point identification ---------------------------------------------

def laplace_resolvent(model: BlochModel, r0):
    """``s -> R(s) = (sI - A)^-1 (r0 + c/s)`` for real or complex ``s``."""
    A, c = model.A, model.c
    r0 = np.asarray(r0, dtype=float)
    eye = np.eye(A.shape[0])

    def R(s):
        return np.linalg.solve(s * eye - A, r0 + c / s)

    return R


def laplace_point_identify(model_oracle, s_points, r0) -> BlochModel:
    """Solve ``D = T C`` for ``T = [A | c]`` from ``d + 1`` Laplace samples.

    Column ``k`` of ``C`` is ``(R(s_k), 1/s_k)`` and of ``D`` is
    ``s_k R(s_k) - r0``.
    """
    r0 = np.asarray(r0, dtype=float)
    s_points = np.asarray(s_points, dtype=float)
    d = r0.size
    if s_points.size != d + 1:
        raise ValueError(f"need exactly {d + 1} Laplace points, got {s_points.size}")
    if np.any(s_points == 0):
        raise SingularC("s = 0 is a pole of every Laplace trace")
    Cm = np.empty((d + 1, d + 1))
    Dm = np.empty((d, d + 1))
    for k, s in enumerate(s_points):
        R = np.asarray(model_oracle(s), dtype=float)
        Cm[:d, k] = R
        Cm[d, k] = 1.0 / s
        Dm[:, k] = s * R - r0
    if np.unique(s_points).size < s_points.size:
        raise SingularC("repeated Laplace points make C rank deficient")
    if np.max(np.abs(Dm)) <= 1e-14 * max(np.max(np.abs(Cm)), 1.0):
        # frozen dynamics: every sample is r0/s and the minimum-norm solution is T = 0
        return BlochModel(np.zeros((d, d)), np.zeros(d))
    cond = np.linalg.cond(Cm)
    if not np.isfinite(cond) or cond > SINGULAR_C_COND:
        raise SingularC(f"C is singular to working precision (cond {cond:.3e})")
    T = np.linalg.solve(Cm.T, Dm.T).T
    return BlochModel(T[:, :d], T[:, d])


# -- structural coefficients ------------------------------------------------------

def _adjugate_terms(A):
    """``M_1..M_d`` and characteristic coefficients with ``adj(sI-A) = sum M_k s^(d-k)``."""
    d = A.shape[0]
    Ms, coeffs = [], [1.0]
    M = np.zeros_like(A)
    c_prev = 1.0
    for k in range(1, d + 1):
        M = A @ M + c_prev * np.eye(d)
        Ms.append(M)
        c_prev = -np.trace(A @ M) / k
        coeffs.append(c_prev)
    # det(sI - A) = s^d + coeffs[1] s^(d-1) + ... + coeffs[d]
    return Ms, np.array(coeffs)


def structural_coefficients(A, c, r0, traces=(2,)):
    """Model-side ``C`` (rows per trace, ascending ``C_0..C_d``) and ``D_1..D_d``.

    ``R_i(s) = (C_0 + ... + C_d s^d) / (s^(d+1) + D_d s^d + ... + D_1 s)``.
    """
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    r0 = np.asarray(r0, dtype=float)
    d = A.shape[0]
    Ms, ch = _adjugate_terms(A)
    num = np.zeros((d, d + 1))
    for k, M in enumerate(Ms, start=1):
        # M_k multiplies s^(d-k); (s r0 + c) splits it across two powers
        num[:, d - k + 1] += M @ r0
        num[:, d - k] += M @ c
    D = ch[::-1][:-1]  # ascending D_1..D_d (coefficient of s^1..s^d)
    idx = [OBSERVABLES.index(t) if isinstance(t, str) else int(t) for t in traces]
    return num[idx], D


# -- priors -------------------------------------------------------------------

def dephasing_model(hx, hy, hz, alpha, beta, gamma) -> BlochModel:
    a, b, g = alpha, beta, gamma
    A = np.array([
        [-(b * b + g * g), -hz + a * b, hy + a * g],
        [hz + a * b, -(a * a + g * g), -hx + b * g],
        [-hy + a * g, hx + b * g, -(a * a + b * b)],
    ])
    return BlochModel(A, np.zeros(3))


def relaxation_model(gamma_eff, gamma_s, delta_gamma, hx, hy, hz) -> BlochModel:
    A = np.array([
        [-gamma_eff, -hz, hy],
        [hz, -gamma_eff, -hx],
        [-hy, hx, -gamma_s],
    ])
    return BlochModel(A, np.array([0.0, 0.0, delta_gamma]))


PARAMS = {
    DEPHASING: ("hx", "hy", "hz", "alpha", "beta", "gamma"),
    RELAXATION: ("gamma_eff", "gamma_s", "delta_gamma", "hx", "hy", "hz"),
}
BUILDERS = {DEPHASING: dephasing_model, RELAXATION: relaxation_model}

# every sign pattern of the parameters is tested numerically as a symmetry of
# the system at hand; the canonical image makes these non-negative, in order
CANONICAL_ORDER = {
    DEPHASING: ("hz", "hx", "gamma", "beta", "alpha", "hy"),
    RELAXATION: ("hz", "hx", "hy", "delta_gamma", "gamma_s", "gamma_eff"),
}
_SIGN_PATTERNS = np.array(list(itertools.product((1.0, -1.0), repeat=6)))[1:]


def prior_model(prior: str, params) -> BlochModel:
    prior = resolve_prior(prior)
    if prior == GENERIC:
        p = np.asarray(params, dtype=float)
        return BlochModel(p[:9].reshape(3, 3), p[9:12])
    names = PARAMS[prior]
    if isinstance(params, dict):
        params = [params[n] for n in names]
    return BUILDERS[prior](*map(float, params))


def resolve_prior(prior: str) -> str:
    try:
        return PRIOR_ALIASES[prior]
    except KeyError:
        raise UnsupportedPrior(f"unknown prior {prior!r}") from None


def identifiable_combinations(prior: str, params: dict) -> dict:
    """Quantities invariant under the z-rotation gauge."""
    prior = resolve_prior(prior)
    p = params
    hperp = float(np.hypot(p["hx"], p["hy"]))
    if prior == DEPHASING:
        return {
            "h_z": abs(p["hz"]),
            "h_perp": hperp,
            "h_perp2": hperp**2,
            "alpha2+beta2": p["alpha"] ** 2 + p["beta"] ** 2,
            "gamma": abs(p["gamma"]),
        }
    return {
        "gamma_eff": p["gamma_eff"],
        "gamma_s": p["gamma_s"],
        "delta_gamma": p["delta_gamma"],
        "h_z": abs(p["hz"]),
        "h_perp": hperp,
        "h_perp2": hperp**2,
    }


# -- coefficient system ----------------------------------------------------------

@dataclass(frozen=True)
class CoefficientSystem:
    observed_C: np.ndarray  # (n_traces, 4) ascending C_0..C_3
    observed_D: np.ndarray  # D_1..D_3
    prior: str
    initial_state: np.ndarray
    traces: tuple = ("z",)

    @property
    def n_equations(self):
        return self.observed_C.size + self.observed_D.size

    @property
    def observed(self):
        return np.concatenate([self.observed_C.ravel(), self.observed_D])

    def structural(self, model: BlochModel):
        C, D = structural_coefficients(model.A, model.c, self.initial_state, self.traces)
        return np.concatenate([C.ravel(), D])

    def residual(self, model: BlochModel):
        return self.structural(model) - self.observed

    @property
    def z_gauge(self) -> bool:
        """Signals are invariant under rotations about z."""
        r0 = self.initial_state
        return bool(abs(r0[0]) < 1e-12 and abs(r0[1]) < 1e-12 and set(self.traces) == {"z"})

    @classmethod
    def from_coefficients(cls, C, D, prior, r0, traces=("z",)):
        C = np.atleast_2d(np.asarray(C, dtype=float))
        return cls(C, np.asarray(D, dtype=float), resolve_prior(prior),
                   np.asarray(r0, dtype=float), tuple(traces))


def _traces_of(signal: SignalModel, traces):
    if traces is None:
        traces = signal.channels
    return tuple(traces)


def build_coefficient_system(signal: SignalModel, prior, r0, traces=None) -> CoefficientSystem:
    """Observed ``(C, D)`` of the fitted trace(s) paired with a structural prior.

    The observed side always has the qubit degree (``C_0..C_3``, ``D_1..D_3``);
    signals with fewer terms are zero-padded.
    """
    prior = resolve_prior(prior)
    r0 = np.asarray(r0, dtype=float)
    if r0.size != 3:
        raise UnsupportedPrior("coefficient matching priors are defined for qubits only")
    traces = _traces_of(signal, traces)
    sub = signal.select(traces)
    rs = laplace_of(sub)
    deg = rs.denominator.size - 1
    if deg > 4:
        raise UnsupportedPrior(f"signal has a degree-{deg} denominator; qubit priors allow 4")
    pad = 4 - deg
    C = np.zeros((len(traces), 4))
    # multiplying numerator and denominator by s^pad keeps R(s) unchanged
    C[:, pad:pad + rs.numerators.shape[1]] = rs.numerators
    den = np.concatenate([np.zeros(pad), rs.denominator])
    D = den[1:4]
    if prior == GENERIC:
        # the leading numerator coefficient of each trace is fixed by r0
        n_eq = C.size - len(traces) + D.size
        raise UnsupportedPrior(
            f"generic qubit from traces {traces}: {n_eq} equations, 12 unknowns; "
            "the system does not determine A and c"
        )
    return CoefficientSystem(C, D, prior, r0, traces)


# -- solving --------------------------------------------------------------------

@dataclass(frozen=True)
class PriorSolution:
    prior: str
    params: dict
    model: BlochModel
    residual: float  # relative: |structural - observed| / |observed|
    gauge: dict
    identified: dict
    equivalents: tuple = field(default=())  # symmetry images (models)
    alternatives: tuple = field(default=())  # distinct near-optimal solutions (params, residual)

    @property
    def identifiable_flag(self):
        return "GaugeOrbit" if self.gauge.get("fixed") else "Full"

    def to_json(self):
        return {
            "prior": self.prior,
            "params": self.params,
            "A": self.model.A.tolist(),
            "c": self.model.c.tolist(),
            "residual": self.residual,
            "identifiable": self.identifiable_flag,
            "gauge": self.gauge,
            "identified": self.identified,
            "alternatives": [{"params": p, "residual": r} for p, r in self.alternatives],
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2)


def _fibonacci_sphere(n):
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    phi = np.pi * (1 + 5**0.5) * k
    rho = np.sqrt(1 - z * z)
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def _observed_rates(system):
    """Decay ``gamma``, frequency ``omega`` and ``delta`` implied by ``D``."""
    D1, D2, D3 = system.observed_D
    roots = np.roots([1.0, D3, D2, D1])
    cplx = [r for r in roots if abs(r.imag) > 1e-12]
    if cplx:
        g, w = -cplx[0].real, abs(cplx[0].imag)
        dl = -float(np.real(min(roots, key=lambda r: abs(r.imag))))
    else:
        rr = np.sort(-roots.real)
        g, w, dl = rr[0], 0.0, rr[-1]
    return float(g), float(w), float(dl)


def _analytic_dephasing(system):
    """Exact solutions of the z-trace/z-preparation system with ``h_y = 0``."""
    C0, C1, C2, _ = system.observed_C[0]
    D1, D2, D3 = system.observed_D
    g2 = max(C2 - D3 / 2, 0.0)
    S = max(D3 - C2, 0.0)
    hz2 = max(C1 - g2 * D3 / 2, 0.0)
    hx2 = max(D2 - hz2 - S * S - g2 * (2 * S + g2), 0.0)
    g, hz, hx = np.sqrt(g2), np.sqrt(hz2), np.sqrt(hx2)
    out = []
    qa, qb, qc = hx2, 2 * hx * hz * g, D1 - hz2 * S - hx2 * (S + g2)
    if qa > 1e-300:
        disc = qb * qb - 4 * qa * qc
        roots = [(-qb + sgn * np.sqrt(max(disc, 0.0))) / (2 * qa) for sgn in (1, -1)]
    else:
        roots = [np.sqrt(S)]
    for a in roots:
        if abs(a) <= np.sqrt(S) * (1 + 1e-6) + 1e-12:
            b = np.sqrt(max(S - a * a, 0.0))
            out.append(np.array([hx, 0.0, hz, a, b, g]))
    if not out:
        out.append(np.array([hx, 0.0, hz, np.sqrt(S / 2), np.sqrt(S / 2), g]))
    return out


def _analytic_relaxation(system):
    """Exact solutions of the z-trace/z-preparation relaxation system with ``h_y = 0``."""
    C0, C1, C2, _ = system.observed_C[0]
    D1, D2, D3 = system.observed_D
    # (C1 - 2 G C2 + 4 G^2)(C2 - 2 G) = C0, a cubic in G = Gamma_eff
    cubic = np.polysub(np.polymul([4.0, -2 * C2, C1], [-2.0, C2]), [C0])
    out = []
    for G in np.roots(cubic):
        if abs(G.imag) > 1e-8 * max(1.0, abs(G)):
            continue
        G = float(G.real)
        dg = C2 - 2 * G
        Pz = C1 - 2 * G * dg
        gs = D3 - 2 * G
        hp2 = D2 - Pz - 2 * G * gs
        hz2 = Pz - G * G
        p = np.array([G, gs, dg, np.sqrt(max(hp2, 0.0)), 0.0, np.sqrt(max(hz2, 0.0))])
        miss = abs(gs * Pz + hp2 * G - D1)
        out.append((miss, p))
    out.sort(key=lambda x: x[0])
    return [p for _, p in out]


def _heuristic_seeds(system, rng):
    g, w, dl = _observed_rates(system)
    hmag = max(w, 1e-3)
    dirs = _fibonacci_sphere(12)
    seeds = []
    if system.prior == DEPHASING:
        rate = np.sqrt(max(system.observed_D[2] / 2, 1e-8))
        for h in dirs[::2]:
            for v in _fibonacci_sphere(5):
                seeds.append(np.concatenate([hmag * h, rate * v]))
    else:
        dg0 = 0.0
        if abs(system.observed_C[0, 0]) > 0:
            dg0 = system.observed_C[0, 0] / max(g * g + hmag * hmag, 1e-12)
        for h in dirs:
            for dg in (dg0, 0.0):
                seeds.append(np.array([g, dl, dg, *(hmag * h)]))
    return seeds


def _free_mask(prior, gauge):
    names = PARAMS[prior]
    return np.array([not (gauge and n == "hy") for n in names])


def _canonical(system, p, scale):
    """Images of ``p`` under sign flips that leave the observed coefficients unchanged,
    with the canonical one first."""
    names = PARAMS[system.prior]
    obs_scale = max(np.linalg.norm(system.observed), 1.0)
    base = system.structural(prior_model(system.prior, p))
    images, verified = [p.copy()], []
    for signs in _SIGN_PATTERNS:
        q = p * signs
        if any(np.array_equal(q, r) for r in images):
            continue
        if np.linalg.norm(system.structural(prior_model(system.prior, q)) - base) \
                <= SYMMETRY_TOL * obs_scale * max(scale, 1.0):
            verified.append(tuple(n for n, sg in zip(names, signs) if sg < 0))
            images.append(q)
    order = [names.index(n) for n in CANONICAL_ORDER[system.prior]]
    tol = 1e-12 * max(scale, 1.0)

    def key(q):
        return tuple(-(1 if q[i] > tol else 0 if abs(q[i]) <= tol else -1) for i in order)

    images.sort(key=key)
    return images[0], images, verified


def solve_model(system: CoefficientSystem, raise_ambiguous: bool = False, seed: int = 0) -> PriorSolution:
    """Least-squares coefficient matching, multi-started from analytic and heuristic seeds.

    Raises
    ------
    NoConvergence
        Every start ends with relative residual above the convergence threshold.
    AmbiguousSolution
        Only with ``raise_ambiguous``: distinct parameter sets match equally well.
    """
    prior = system.prior
    if prior == GENERIC:
        raise UnsupportedPrior(
            f"{system.n_equations} equations, 12 unknowns: a generic qubit is not determined")
    names = PARAMS[prior]
    gauge = system.z_gauge
    free = _free_mask(prior, gauge)
    obs = system.observed
    # with nothing observed the absolute residual is used
    obs_norm = float(np.linalg.norm(obs)) or 1.0
    rng = np.random.default_rng(seed)

    analytic = []
    if gauge and np.allclose(system.initial_state, [0, 0, 1]):
        analytic = (_analytic_dephasing if prior == DEPHASING else _analytic_relaxation)(system)
    seeds = []
    for p in analytic:
        seeds.append(p)
        for _ in range(N_PERTURBED):
            seeds.append(p * (1 + PERTURB * rng.uniform(-1, 1, p.size)))
    seeds += _heuristic_seeds(system, rng)
    seeds.append(np.zeros(len(names)))

    def full(x):
        p = np.zeros(len(names))
        p[free] = x
        return p

    def fun(x):
        return system.residual(prior_model(prior, full(x)))

    results = []
    for p0 in seeds:
        p0 = np.where(free, p0, 0.0)
        try:
            sol = optimize.least_squares(fun, p0[free], method="lm", xtol=1e-15, ftol=1e-15,
                                         gtol=1e-15, max_nfev=2000)
        except (ValueError, np.linalg.LinAlgError):
            continue  # the iteration ran off to non-finite parameters
        results.append((float(np.linalg.norm(sol.fun) / obs_norm), full(sol.x)))
    if not results:
        raise NoConvergence("every start diverged")
    results.sort(key=lambda r: r[0])
    best_res, best = results[0]
    if not np.isfinite(best_res) or best_res > CONVERGENCE_TOL:
        raise NoConvergence(
            f"no start reached relative residual {CONVERGENCE_TOL:g} (best {best_res:.3e})")

    scale = float(np.max(np.abs(best))) if best.size else 1.0
    canon, images, verified = _canonical(system, best, scale)
    model = prior_model(prior, canon)
    params = dict(zip(names, map(float, canon)))

    # distinct near-optimal solutions, modulo the verified symmetries and gauge
    def signature(q):
        if gauge:
            inv = identifiable_combinations(prior, dict(zip(names, q)))
            return np.array([inv[k] for k in sorted(inv)])
        return q

    def same(u, v):
        return np.allclose(u, v, rtol=1e-4, atol=1e-6 * max(scale, 1.0))

    alternatives, seen = [], [signature(canon)]
    limit = max(2.0 * best_res, 1e-8)
    for res, p in results[1:]:
        if res > limit:
            break
        q, _, _ = _canonical(system, p, scale)
        sig = signature(q)
        if not any(same(sig, s) for s in seen):
            seen.append(sig)
            alternatives.append((dict(zip(names, map(float, q))), res))
    if alternatives and raise_ambiguous:
        raise AmbiguousSolution(
            f"{len(alternatives) + 1} distinct parameter sets match within twice the best residual",
            [(params, best_res)] + alternatives,
        )

    gauge_report = {
        "fixed": gauge,
        "convention": "h_y = 0, h_x >= 0" if gauge else None,
        "unidentified": ["absolute azimuth about z"] if gauge else [],
        "sign_symmetries": [
            ",".join(f"{n}->-{n}" for n in flip) for flip in verified if flip
        ],
    }
    if gauge:
        identified = identifiable_combinations(prior, params)
        if prior == DEPHASING:
            identified["relative_azimuth"] = float(np.arctan2(canon[4], canon[3]))
    else:
        identified = dict(params)
    equivalents = tuple(prior_model(prior, q) for q in images)
    return PriorSolution(prior, params, model, best_res, gauge_report, identified,
                         equivalents, tuple(alternatives))


def solve_signal(signal: SignalModel, prior, r0, traces=None, **kw) -> PriorSolution:
    """``build_coefficient_system`` followed by ``solve_model``."""
    return solve_model(build_coefficient_system(signal, prior, r0, traces), **kw)


def reconstruct_two_trace(signal: SignalModel, prior, r0, traces=None, **kw) -> PriorSolution:
    """Match both numerators and the shared denominator of two jointly fitted traces."""
    traces = _traces_of(signal, traces)
    if len(traces) != 2:
        raise ValueError(f"two traces are required, got {traces}")
    return solve_model(build_coefficient_system(signal, prior, r0, traces), **kw)


# -- error metric modulo symmetries ------------------------------------------------

def _rot_z(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def aligned_error(solution: PriorSolution, truth: BlochModel) -> float:
    """Relative error minimised over the solution's symmetry images and, when the
    z-rotation gauge was fixed, over the azimuth (including reflections)."""
    from .recon_full import relative_error

    cands = solution.equivalents or (solution.model,)
    if not solution.gauge.get("fixed"):
        return min(relative_error(m, truth) for m in cands)
    best = np.inf
    refl = np.diag([1.0, -1.0, 1.0])
    for m in cands:
        for P in (np.eye(3), refl):
            A0, c0 = P @ m.A @ P, P @ m.c

            def err(phi):
                R = _rot_z(phi)
                return relative_error(BlochModel(R @ A0 @ R.T, R @ c0), truth)

            grid = np.linspace(0, 2 * np.pi, 73)
            k = int(np.argmin([err(x) for x in grid]))
            r = optimize.minimize_scalar(err, bounds=(grid[max(k - 1, 0)], grid[min(k + 1, 72)]),
                                         method="bounded", options={"xatol": 1e-10})
            best = min(best, float(r.fun), err(grid[k]))
    return best

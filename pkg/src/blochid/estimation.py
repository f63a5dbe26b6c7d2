"""Damped-sinusoid / exponential signal models: fitting, evaluation, Laplace form.

Signals are modelled as linear combinations of the basis functions

    1,  t^m e^{-g t} cos(w t),  t^m e^{-g t} sin(w t),  t^m e^{-d t}

with nonlinear parameters (decay rates ``g, d`` and angular frequencies ``w``)
shared by all jointly fitted channels.  Linear coefficients are obtained by
orthogonal projection; nonlinear parameters maximize the Student-t marginal
likelihood obtained by integrating out the coefficients and the noise level
(Bretthorst).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import optimize

from .errors import FitDegenerate, FitFailed, UnsupportedBasis
from .measurement import OBSERVABLES, MeasurementRecord

KINDS = ("constant", "damped_cos", "damped_sin", "exponential")
DEGENERATE_RCOND = 1e-10
VANISH_RATIO = 1e-8
FAIL_FACTOR = 10.0


@dataclass(frozen=True)
class BasisTerm:
    kind: str
    decay: float = 0.0
    omega: float = 0.0
    power: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.ones_like(t) * (t**self.power if self.power else 1.0)
        env = np.exp(-self.decay * t)
        if self.power:
            env = env * t**self.power
        if self.kind == "damped_cos":
            return env * np.cos(self.omega * t)
        if self.kind == "damped_sin":
            return env * np.sin(self.omega * t)
        return env


@dataclass(frozen=True)
class SignalTemplate:
    """Shape of a generic signal: ``pairs`` damped sinusoids, ``exponentials`` decays."""

    pairs: int = 1
    exponentials: int = 1
    constant: bool = True

    @property
    def n_nonlinear(self):
        return 2 * self.pairs + self.exponentials

    @property
    def n_linear(self):
        return int(self.constant) + 2 * self.pairs + self.exponentials

    def terms(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = [BasisTerm("constant")] if self.constant else []
        for n in range(self.pairs):
            g, w = theta[2 * n], theta[2 * n + 1]
            out += [BasisTerm("damped_cos", g, w), BasisTerm("damped_sin", g, w)]
        for n in range(self.exponentials):
            out.append(BasisTerm("exponential", theta[2 * self.pairs + n]))
        return tuple(out)


@dataclass(frozen=True)
class SignalModel:
    terms: tuple
    coeffs: np.ndarray  # (n_terms, n_channels)
    channels: tuple = ("z",)
    log_likelihood: float = float("nan")
    residual_rms: tuple = field(default=())

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.shape[0] != len(self.terms):
            raise ValueError("one coefficient row per basis term is required")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def n_channels(self):
        return self.coeffs.shape[1]

    def design(self, times):
        return np.column_stack([term.evaluate(times) for term in self.terms])

    def evaluate(self, times):
        """Values at ``times``, shape ``(n_channels, len(times))``."""
        return (self.design(np.asarray(times, dtype=float)) @ self.coeffs).T

    def channel(self, label):
        return self.channels.index(label)

    def select(self, labels):
        idx = [self.channel(lab) for lab in labels]
        return SignalModel(self.terms, self.coeffs[:, idx], tuple(labels), self.log_likelihood)

    @property
    def constant(self):
        for k, term in enumerate(self.terms):
            if term.kind == "constant" and term.power == 0:
                return self.coeffs[k]
        return np.zeros(self.n_channels)

    def to_json(self):
        return {
            "basis": [
                {"kind": t.kind, "gamma": t.decay, "omega": t.omega, "power": t.power}
                for t in self.terms
            ],
            "coeffs": self.coeffs.tolist(),
            "channels": list(self.channels),
            "loglik": None if np.isnan(self.log_likelihood) else self.log_likelihood,
        }

    @classmethod
    def from_json(cls, data):
        terms = [
            BasisTerm(b["kind"], b.get("gamma", 0.0), b.get("omega", 0.0), b.get("power", 0))
            for b in data["basis"]
        ]
        ll = data.get("loglik")
        return cls(terms, np.asarray(data["coeffs"], dtype=float),
                   tuple(data.get("channels", OBSERVABLES)), float("nan") if ll is None else ll)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def evaluate_signal(model: SignalModel, times):
    return model.evaluate(times)


def signal_model_from_form(form, channels=OBSERVABLES) -> SignalModel:
    """Exact :class:`SignalModel` of a closed-form trajectory expansion."""
    terms, rows = [BasisTerm("constant")], [form.a0]
    for term in form.terms:
        if term.omega:
            terms += [BasisTerm("damped_cos", term.decay, term.omega, term.power),
                      BasisTerm("damped_sin", term.decay, term.omega, term.power)]
            rows += [term.cos_vec, term.sin_vec]
        else:
            terms.append(BasisTerm("exponential", term.decay, 0.0, term.power))
            rows.append(term.cos_vec)
    return SignalModel(terms, np.array(rows), tuple(channels)[: len(form.a0)])


# -- fitting -------------------------------------------------------------------

@dataclass
class _Channel:
    times: np.ndarray
    data: np.ndarray
    record: MeasurementRecord

    @property
    def energy(self):
        return float(self.data @ self.data)


def _project(G, y):
    coef, *_ = np.linalg.lstsq(G, y, rcond=None)
    res = y - G @ coef
    return coef, res


def _time_groups(channels):
    """Indices of channels sharing one time grid (one design matrix per group)."""
    groups = []
    for i, ch in enumerate(channels):
        for g in groups:
            if channels[g[0]].times is ch.times or np.array_equal(channels[g[0]].times, ch.times):
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def _channel_fits(terms, channels, groups=None):
    """Per-channel ``(coef, residual)`` for the given basis terms."""
    out = [None] * len(channels)
    for g in groups or _time_groups(channels):
        t = channels[g[0]].times
        G = np.column_stack([term.evaluate(t) for term in terms])
        Y = np.column_stack([channels[i].data for i in g])
        coef, res = _project(G, Y)
        for j, i in enumerate(g):
            out[i] = (coef[:, j], res[:, j])
    return out


def _loglik(template, theta, channels, groups=None):
    """Marginal log-likelihood summed over channels, plus per-channel fits."""
    terms = template.terms(theta)
    m = len(terms)
    total, fits = 0.0, []
    for ch, (coef, res) in zip(channels, _channel_fits(terms, channels, groups)):
        rss = float(res @ res)
        fits.append((coef, rss))
        if ch.energy > 0:
            total += 0.5 * (m - ch.times.size) * np.log(max(rss, 1e-300) / ch.energy)
    return total, fits


def _periodogram(channels, omegas):
    power = np.zeros_like(omegas)
    for ch in channels:
        y = ch.data - ch.data.mean()
        ph = np.exp(-1j * np.outer(omegas, ch.times))
        power += np.abs(ph @ y) ** 2
    return power


def _peaks(power, omegas, k):
    interior = np.flatnonzero((power[1:-1] >= power[:-2]) & (power[1:-1] >= power[2:])) + 1
    order = interior[np.argsort(power[interior])[::-1]]
    return [float(omegas[i]) for i in order[:k]]


def _bounds(template, T, n):
    rate_max = 10 * n / (2 * T)
    omega_max = np.pi * n / T
    lo, hi = [], []
    for _ in range(template.pairs):
        lo += [0.0, 1e-9]
        hi += [rate_max, omega_max]
    lo += [0.0] * template.exponentials
    hi += [rate_max] * template.exponentials
    return np.array(lo), np.array(hi)


def _starts(template, channels, T, n, n_starts):
    lo, hi = _bounds(template, T, n)
    omega_max = hi[1] if template.pairs else np.pi * n / T
    rates = np.geomspace(0.02 / T, min(20.0 / T, hi[0] if hi.size else 20.0 / T), 10)
    if template.pairs:
        step = 2 * np.pi / (5 * T)
        omegas = np.arange(step, omega_max, step)
        peaks = _peaks(_periodogram(channels, omegas), omegas, template.pairs + 2)
        if len(peaks) < template.pairs:
            peaks += list(np.linspace(step, omega_max / 2, template.pairs - len(peaks) + 1)[1:])
        omega_sets = [sorted(peaks[: template.pairs])]
        for alt in peaks[template.pairs:]:
            omega_sets.append(sorted(peaks[: template.pairs - 1] + [alt]))
    else:
        omega_sets = [[]]

    grid = []
    g_rates = rates if template.pairs else [0.0]
    d_rates = rates if template.exponentials else [0.0]
    for ws in omega_sets:
        for g in g_rates:
            for dr in d_rates:
                theta = []
                for w in ws:
                    theta += [g, w]
                theta += [dr * (1 + 0.05 * j) for j in range(template.exponentials)]
                grid.append(np.array(theta))
    groups = _time_groups(channels)
    scored = sorted(grid, key=lambda th: -_loglik(template, th, channels, groups)[0])
    return scored[:n_starts]


def _vp_residual(template, channels, weights, groups=None):
    def fun(theta):
        fits = _channel_fits(template.terms(theta), channels, groups)
        return np.concatenate([w * res for w, (_, res) in zip(weights, fits)])

    return fun


def _as_channels(records):
    if isinstance(records, MeasurementRecord):
        records = [records]
    return [_Channel(np.asarray(r.times, float), np.asarray(r.estimates, float), r) for r in records]


def _label(record):
    obs = record.observable
    return obs if isinstance(obs, str) else OBSERVABLES[int(obs)] if int(obs) < 3 else str(obs)


def fit_signal(records, template: SignalTemplate = SignalTemplate(), n_starts: int = 8) -> SignalModel:
    """Jointly fit one or more records to a shared-nonlinear-parameter template.

    Raises
    ------
    FitDegenerate
        Basis functions are collinear at the optimum.
    FitFailed
        The best fit leaves residuals above ten times the shot-noise floor.
    """
    channels = _as_channels(records)
    n = min(ch.times.size for ch in channels)
    m = template.n_linear
    if n < 2 * (m + template.n_nonlinear):
        raise ValueError(f"{n} samples are too few for {m + template.n_nonlinear} parameters")
    T = max(float(ch.times.max()) for ch in channels)
    if not T > 0:
        raise ValueError("records must span a positive time interval")

    if template.n_nonlinear == 0:
        best = np.zeros(0)
    else:
        lo, hi = _bounds(template, T, n)
        groups = _time_groups(channels)
        objective = lambda th: -_loglik(template, th, channels, groups)[0]
        results = []
        for th0 in _starts(template, channels, T, n, n_starts):
            th0 = np.clip(th0, lo, hi)
            res = optimize.minimize(
                objective, th0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                options={"xatol": 1e-8, "fatol": 1e-6, "maxiter": 600, "adaptive": True},
            )
            results.append((res.fun, res.x))
        results.sort(key=lambda r: r[0])
        best = results[0][1]

        _, fits = _loglik(template, best, channels)
        sig = [np.sqrt(max(rss, 1e-300) / max(ch.times.size - m, 1)) for ch, (_, rss) in
               zip(channels, fits)]
        scale = max(np.sqrt(ch.energy / ch.times.size) for ch in channels)
        weights = [1.0 / max(s, 1e-14 * max(scale, 1e-300)) for s in sig]
        polished = optimize.least_squares(
            _vp_residual(template, channels, weights, groups), best, bounds=(lo, hi),
            method="trf", x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=500,
        )
        if objective(polished.x) <= objective(best):
            best = polished.x

    loglik, fits = _loglik(template, best, channels)
    terms = template.terms(best)
    _check_degenerate(terms, channels, best)

    coeffs = np.column_stack([coef for coef, _ in fits])
    model = SignalModel(terms, coeffs, tuple(_label(ch.record) for ch in channels), loglik)
    rms = []
    for ch, (coef, rss) in zip(channels, fits):
        r = float(np.sqrt(rss / ch.times.size))
        rms.append(r)
        fitted = np.column_stack([t.evaluate(ch.times) for t in terms]) @ coef
        floor = ch.record.noise_floor(fitted)
        if floor == 0.0:
            floor = 1e-6 * max(np.sqrt(ch.energy / ch.times.size), 1e-12)
        if r > FAIL_FACTOR * floor:
            raise FitFailed(
                f"channel {_label(ch.record)}: residual RMS {r:.3e} exceeds {FAIL_FACTOR:g}x "
                f"noise floor {floor:.3e}"
            )
    return SignalModel(model.terms, model.coeffs, model.channels, loglik, tuple(rms))


def _check_degenerate(terms, channels, theta):
    t = np.concatenate([ch.times for ch in channels])
    G = np.column_stack([term.evaluate(t) for term in terms])
    norms = np.linalg.norm(G, axis=0)
    weak = np.flatnonzero(norms <= VANISH_RATIO * max(norms.max(), 1e-300))
    if weak.size:
        # typically a damped pair pushed to omega ~ 0: its sine column dies out
        # and the cosine column is a plain exponential
        raise FitDegenerate(
            "basis function vanishes on the sample times",
            {"theta": theta.tolist(), "terms": [terms[k].kind for k in weak]},
        )
    s = np.linalg.svd(G / norms, compute_uv=False)
    if s[-1] < DEGENERATE_RCOND * s[0]:
        raise FitDegenerate(
            "collinear basis functions at the optimum (e.g. exponential merging with the "
            "damped pair); a single merged exponential would describe the data",
            {"theta": theta.tolist(), "rcond": float(s[-1] / s[0])},
        )


# -- Laplace domain ------------------------------------------------------------

@dataclass(frozen=True)
class RationalSignal:
    """``num[c](s) / den(s)`` with ascending coefficient arrays."""

    numerators: np.ndarray  # (n_channels, len(den) - 1)
    denominator: np.ndarray

    @property
    def C(self):
        return self.numerators

    @property
    def D(self):
        """``D_1 .. D_{n-1}`` (``D_0 = 0`` and the monic leading term dropped)."""
        return self.denominator[1:-1]

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        return np.array([P.polyval(s, num) for num in self.numerators]) / P.polyval(
            s, self.denominator)


def laplace_of(model: SignalModel) -> RationalSignal:
    """Laplace transform recombined over the common denominator ``s * prod(factors)``."""
    factors = {}  # key -> ascending polynomial
    parts = []  # (term index, numerator, factor key)
    for k, term in enumerate(model.terms):
        if term.power:
            raise UnsupportedBasis("polynomial envelopes (Jordan terms) have no generic Laplace form")
        g, w = term.decay, term.omega
        if term.kind == "constant":
            parts.append((k, np.array([1.0]), None))
            continue
        if term.kind in ("damped_cos", "damped_sin"):
            key = ("q", g, w)
            factors[key] = np.array([g * g + w * w, 2 * g, 1.0])
            num = np.array([g, 1.0]) if term.kind == "damped_cos" else np.array([w])
        else:
            key = ("l", g)
            factors[key] = np.array([g, 1.0])
            num = np.array([1.0])
        parts.append((k, num, key))

    den = np.array([0.0, 1.0])  # s
    for poly in factors.values():
        den = P.polymul(den, poly)
    nums = np.zeros((model.n_channels, den.size - 1))
    for k, num, key in parts:
        other = np.array([1.0])
        for key2, poly in factors.items():
            if key2 != key:
                other = P.polymul(other, poly)
        if key is not None:
            other = P.polymul(other, [0.0, 1.0])
        full = P.polymul(num, other)
        for c in range(model.n_channels):
            nums[c, : full.size] += model.coeffs[k, c] * full
    return RationalSignal(nums, den)


def qubit_laplace_coefficients(a0, a1, a2, a3, gamma, omega, delta):
    """Closed-form ``(C0, C1, C2, C3), (D1, D2, D3)`` of the generic qubit signal."""
    g2w2 = gamma**2 + omega**2
    C = np.array([
        a0 * delta * g2w2,
        a0 * (gamma**2 + 2 * gamma * delta + omega**2) + a1 * delta * gamma
        + a2 * delta * omega + a3 * g2w2,
        a0 * (delta + 2 * gamma) + a1 * (gamma + delta) + a2 * omega + 2 * a3 * gamma,
        a0 + a1 + a3,
    ])
    D = np.array([delta * g2w2, 2 * gamma * delta + g2w2, 2 * gamma + delta])
    return C, D

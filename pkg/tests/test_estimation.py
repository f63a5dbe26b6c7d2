import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blochid.errors import FitDegenerate, FitFailed, UnsupportedBasis
from blochid.estimation import (
    BasisTerm, SignalModel, SignalTemplate, evaluate_signal, fit_signal, laplace_of,
    qubit_laplace_coefficients, signal_model_from_form,
)
from blochid.measurement import derive_seed, lds_times, sample_record
from blochid.models import MODEL1
from blochid.propagation import eigenstructure, propagate, trajectory_signal_form


def standard_signal(a0, a1, a2, a3, gamma, omega, delta):
    terms = [BasisTerm("constant"), BasisTerm("damped_cos", gamma, omega),
             BasisTerm("damped_sin", gamma, omega), BasisTerm("exponential", delta)]
    return SignalModel(terms, [a0, a1, a2, a3])


@pytest.fixture(scope="module")
def model1_truth():
    es = eigenstructure(MODEL1)
    (gamma, omega, _), = es.pairs
    (delta, _), = es.reals
    return gamma, omega, delta


def test_noiseless_model1_z_trace(model1_truth):
    t = lds_times(1000, 50)
    rec = sample_record(propagate(MODEL1, [0, 0, 1.0], t).values[2], t, None, "z")
    fit = fit_signal(rec)
    got = (fit.terms[1].decay, fit.terms[1].omega, fit.terms[3].decay)
    assert np.allclose(got, model1_truth, rtol=1e-6)
    grid = np.linspace(0, 50, 777)
    assert np.max(np.abs(fit.evaluate(grid)[0] - propagate(MODEL1, [0, 0, 1.0], grid).values[2])) < 1e-6


def test_constant_record():
    t = np.linspace(0, 1, 50)
    fit = fit_signal(sample_record(np.full(50, 0.5), t, None, "z"), SignalTemplate(0, 0, True))
    assert fit.coeffs[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_evaluate_examples():
    only_const = SignalModel([BasisTerm("constant")], [1.0])
    assert np.all(evaluate_signal(only_const, [0, 1, 5]) == 1)
    cos = SignalModel([BasisTerm("damped_cos", 0.1, 2.0)], [1.0])
    assert evaluate_signal(cos, [0.0])[0, 0] == 1.0


def test_projection_optimality():
    t = lds_times(500, 50)
    traj = propagate(MODEL1, [0, 0, 1.0], t)
    recs = [sample_record(traj.values[j], t, 1000, o, seed=j) for j, o in enumerate("xyz")]
    fit = fit_signal(recs)
    G = fit.design(t)
    for j, rec in enumerate(recs):
        res = rec.estimates - G @ fit.coeffs[:, j]
        assert np.max(np.abs(G.T @ res)) < 1e-9 * np.linalg.norm(rec.estimates) * np.sqrt(t.size)
        # accepted fits sit at the shot-noise level
        assert fit.residual_rms[j] <= 3 * rec.noise_floor()


def test_joint_fit_shares_nonlinear_parameters(model1_truth):
    t = lds_times(1000, 50)
    traj = propagate(MODEL1, [0, 0, 1.0], t)
    recs = [sample_record(traj.values[j], t, None, o) for j, o in enumerate("xyz")]
    fit = fit_signal(recs)
    assert fit.coeffs.shape == (4, 3) and fit.channels == ("x", "y", "z")
    form = signal_model_from_form(trajectory_signal_form(MODEL1, [0, 0, 1.0]))
    grid = np.linspace(0, 50, 300)
    assert np.max(np.abs(fit.evaluate(grid) - form.evaluate(grid))) < 1e-6


def test_nonlinear_error_shrinks_with_repetitions(model1_truth):
    gamma, omega, delta = model1_truth
    t = lds_times(300, 50)
    z = propagate(MODEL1, [0, 0, 1.0], t).values[2]
    medians = []
    for n_e in (100, 1000, 10000):
        errs = []
        for k in range(20):
            fit = fit_signal(sample_record(z, t, n_e, "z", seed=derive_seed(n_e, k)))
            got = np.array([fit.terms[1].decay, fit.terms[1].omega, fit.terms[3].decay])
            errs.append(np.linalg.norm(got - [gamma, omega, delta]) / np.linalg.norm([gamma, omega, delta]))
        medians.append(np.median(errs))
    assert medians[0] >= medians[1] >= medians[2]


def test_fit_failed_for_wrong_template():
    t = lds_times(400, 30)
    y = 0.4 * np.cos(2 * t) * np.exp(-0.1 * t) + 0.4 * np.cos(3.3 * t)
    with pytest.raises(FitFailed):
        fit_signal(sample_record(y, t, None, "z"))


def test_fit_degenerate_when_pair_collapses():
    t = lds_times(400, 30)
    y = 0.5 * np.exp(-0.2 * t) + 0.1
    with pytest.raises(FitDegenerate) as info:
        fit_signal(sample_record(y, t, None, "z"))
    assert "theta" in info.value.details


def test_too_few_samples():
    with pytest.raises(ValueError):
        fit_signal(sample_record(np.zeros(5), np.arange(5.0), None, "z"))


def test_json_round_trip(tmp_path):
    m = standard_signal(0.1, 0.2, -0.3, 0.4, 0.05, 2.0, 0.2)
    m.save(tmp_path / "s.json")
    back = SignalModel.load(tmp_path / "s.json")
    assert back.terms == m.terms and np.array_equal(back.coeffs, m.coeffs)


# -- Laplace -------------------------------------------------------------------------

def test_laplace_worked_example():
    rs = laplace_of(standard_signal(1, 0, 0, 0, 1, 2, 3))
    assert np.allclose(rs.C[0], [15, 11, 5, 1])
    assert np.allclose(rs.D, [15, 11, 5])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4),
       st.floats(0.01, 3), st.floats(0.1, 10), st.floats(0.01, 3))
def test_laplace_matches_closed_form(a, gamma, omega, delta):
    rs = laplace_of(standard_signal(*a, gamma, omega, delta))
    C, D = qubit_laplace_coefficients(*a, gamma, omega, delta)
    assert np.allclose(rs.C[0], C, atol=1e-12, rtol=1e-12)
    assert np.allclose(rs.D, D, atol=1e-12, rtol=1e-12)
    # and the rational function equals the term-wise transform
    s = 0.7 + 0.3j
    direct = (a[0] / s + (a[1] * (s + gamma) + a[2] * omega) / ((s + gamma) ** 2 + omega**2)
              + a[3] / (s + delta))
    assert np.isclose(rs(s)[0], direct, rtol=1e-10)


def test_pure_exponential_and_zero():
    rs = laplace_of(standard_signal(0, 0, 0, 1, 0.5, 2, 3))
    s = 1.3
    assert np.isclose(rs(s)[0].real, 1 / (s + 3))
    assert np.allclose(laplace_of(standard_signal(0, 0, 0, 0, 0.5, 2, 3)).C, 0)


def test_laplace_rejects_polynomial_terms():
    m = SignalModel([BasisTerm("exponential", 0.3, 0, 1)], [1.0])
    with pytest.raises(UnsupportedBasis):
        laplace_of(m)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blochid.errors import AmbiguousSolution, NoConvergence, SingularC, UnsupportedPrior
from blochid.estimation import laplace_of, signal_model_from_form
from blochid.lindblad import BlochModel
from blochid.models import MODEL1, MODEL2, MODEL3, MODEL3_RAW
from blochid.propagation import propagate, trajectory_signal_form
from blochid.recon_partial import (
    CoefficientSystem, aligned_error, build_coefficient_system, dephasing_model,
    identifiable_combinations, laplace_point_identify, laplace_resolvent, reconstruct_two_trace,
    relaxation_model, solve_model, solve_signal, structural_coefficients,
)

from conftest import random_physical_qubit, random_unit

Z = np.array([0.0, 0.0, 1.0])
X = np.array([1.0, 0.0, 0.0])
ZERO = BlochModel(np.zeros((3, 3)), np.zeros(3))


def exact_signal(model, r0):
    return signal_model_from_form(trajectory_signal_form(model, r0))


# -- d+1 point identification ---------------------------------------------------

@pytest.mark.parametrize("model", [MODEL1, MODEL2, MODEL3], ids=["m1", "m2", "m3"])
def test_laplace_points_recover_model(model):
    r0 = np.array([0.3, -0.2, 0.9])
    est = laplace_point_identify(laplace_resolvent(model, r0), [0.5, 1.0, 1.5, 2.0], r0)
    assert np.max(np.abs(est.A - model.A)) < 1e-10
    assert np.max(np.abs(est.c - model.c)) < 1e-10


def test_laplace_points_frozen_dynamics():
    est = laplace_point_identify(laplace_resolvent(ZERO, Z), [0.5, 1.0, 1.5, 2.0], Z)
    assert np.all(est.A == 0) and np.all(est.c == 0)


def test_laplace_points_singular():
    R = laplace_resolvent(MODEL1, Z)
    with pytest.raises(SingularC):
        laplace_point_identify(R, [1.0, 1.0, 2.0, 3.0], Z)
    with pytest.raises(SingularC):
        laplace_point_identify(R, [0.0, 1.0, 2.0, 3.0], Z)
    with pytest.raises(ValueError):
        laplace_point_identify(R, [1.0, 2.0], Z)


# -- structural coefficients ----------------------------------------------------------

def generic_z_coefficients(A, c, r):
    """Hand-expanded numerator and denominator of the z trace of a generic qubit."""
    a = lambda m, n: A[m - 1, n - 1]
    C0 = ((a(2, 1) * a(3, 2) - a(2, 2) * a(3, 1)) * c[0] + (a(1, 2) * a(3, 1) - a(1, 1) * a(3, 2)) * c[1]
          + (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) * c[2])
    C1 = (a(3, 1) * c[0] + a(3, 2) * c[1] - (a(1, 1) + a(2, 2)) * c[2]
          + (a(3, 2) * a(2, 1) - a(3, 1) * a(2, 2)) * r[0] + (a(3, 1) * a(1, 2) - a(3, 2) * a(1, 1)) * r[1]
          + (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) * r[2])
    C2 = c[2] + a(3, 1) * r[0] + a(3, 2) * r[1] - (a(1, 1) + a(2, 2)) * r[2]
    D1 = (a(1, 3) * a(3, 1) * a(2, 2) - a(1, 2) * a(2, 3) * a(3, 1) - a(1, 3) * a(2, 1) * a(3, 2)
          + a(1, 1) * a(2, 3) * a(3, 2) + a(1, 2) * a(2, 1) * a(3, 3) - a(1, 1) * a(2, 2) * a(3, 3))
    D2 = (-a(1, 2) * a(2, 1) - a(1, 3) * a(3, 1) - a(2, 3) * a(3, 2) + a(2, 2) * a(3, 3)
          + a(1, 1) * (a(2, 2) + a(3, 3)))
    D3 = -a(1, 1) - a(2, 2) - a(3, 3)
    return np.array([C0, C1, C2, r[2]]), np.array([D1, D2, D3])


def test_structural_matches_hand_expansion(rng):
    for _ in range(100):
        A, c, r = rng.normal(size=(3, 3)), rng.normal(size=3), rng.normal(size=3)
        C, D = structural_coefficients(A, c, r, traces=("z",))
        C_ref, D_ref = generic_z_coefficients(A, c, r)
        assert np.allclose(C[0], C_ref, atol=1e-12) and np.allclose(D, D_ref, atol=1e-12)


def test_structural_matches_fitted_side(rng):
    for _ in range(100):
        model = random_physical_qubit(rng)
        r0 = random_unit(rng)
        C, D = structural_coefficients(model.A, model.c, r0, traces=("x", "y", "z"))
        rs = laplace_of(exact_signal(model, r0))
        assert np.allclose(rs.C, C, atol=1e-9) and np.allclose(rs.D, D, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_dephasing_z_formulas(p):
    hx, hy, hz, a, b, g = p
    model = dephasing_model(*p)
    C, D = structural_coefficients(model.A, model.c, Z)
    s2 = a * a + b * b
    expected_C = [0, hz**2 + g * g * (s2 + g * g), s2 + 2 * g * g, 1]
    expected_D = [
        hz**2 * s2 + hy**2 * (a * a + g * g) + hx**2 * (b * b + g * g)
        - 2 * hx * hz * a * g - 2 * hx * hy * a * b - 2 * hz * hy * b * g,
        hx**2 + hy**2 + hz**2 + s2**2 + g * g * (2 * s2 + g * g),
        2 * (s2 + g * g),
    ]
    assert np.allclose(C[0], expected_C, atol=1e-9)
    assert np.allclose(D, expected_D, atol=1e-9)
    # the rate-sum relation between D3 and C2
    assert np.isclose(D[2], 2 * (C[0, 2] - g * g), atol=1e-9)


def test_model2_worked_values():
    C, D = structural_coefficients(MODEL2.A, MODEL2.c, Z)
    assert np.isclose(C[0, 2], 0.13) and np.isclose(D[2], 0.18)
    assert np.isclose(D[2], -np.trace(MODEL2.A))


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2), st.floats(0, 2), st.floats(-1, 1), st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_relaxation_formulas(G, gs, dg, h):
    hx, hy, hz = h
    model = relaxation_model(G, gs, dg, hx, hy, hz)
    C, D = structural_coefficients(model.A, model.c, Z)
    assert np.allclose(C[0, :3], [(G * G + hz**2) * dg, 2 * G * dg + G * G + hz**2, dg + 2 * G], atol=1e-9)
    # D2 with the sign that the sum of principal minors gives
    assert np.allclose(D, [gs * (hz**2 + G * G) + (hx**2 + hy**2) * G,
                           G * G + 2 * G * gs + hx**2 + hy**2 + hz**2,
                           2 * G + gs], atol=1e-9)
    Cx, Dx = structural_coefficients(model.A, model.c, X)
    assert np.allclose(Dx, D)
    assert np.isclose(Cx[0, 2], dg - hy, atol=1e-9)
    assert np.isclose(Cx[0, 1], 2 * G * dg + hx * hz - hy * G, atol=1e-9)


def test_model3_rate_sum():
    for model in (MODEL3, MODEL3_RAW):
        _, D = structural_coefficients(model.A, model.c, Z)
        assert np.isclose(D[2], -np.trace(model.A))
    _, D = structural_coefficients(MODEL3_RAW.A, MODEL3_RAW.c, Z)
    assert np.isclose(D[2], 0.4)
    _, D = structural_coefficients(MODEL3.A, MODEL3.c, Z)
    assert np.isclose(D[2], 2 * 0.25 + 0.1)


# -- gauge symmetry --------------------------------------------------------------------

def rotate_dephasing(p, phi):
    hx, hy, hz, a, b, g = p
    c, s = np.cos(phi), np.sin(phi)
    return (c * hx - s * hy, s * hx + c * hy, hz, c * a - s * b, s * a + c * b, g)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3),
       st.lists(st.floats(-0.4, 0.4), min_size=3, max_size=3), st.floats(0, 2 * np.pi))
def test_z_trace_invariant_under_z_rotation(h, rates, phi):
    p = (*h, *rates)
    t = np.linspace(0, 30, 200)
    z1 = propagate(dephasing_model(*p), Z, t).values[2]
    z2 = propagate(dephasing_model(*rotate_dephasing(p, phi)), Z, t).values[2]
    assert np.max(np.abs(z1 - z2)) < 1e-12


def test_identified_combinations_are_gauge_invariant():
    rng = np.random.default_rng(4)
    for _ in range(3):
        p = (*rng.uniform(0.5, 2, 3), *rng.uniform(0.05, 0.3, 3))
        truth = identifiable_combinations("dephasing", dict(zip(("hx", "hy", "hz", "alpha", "beta", "gamma"), p)))
        for phi in (0.0, 1.1):
            model = dephasing_model(*rotate_dephasing(p, phi))
            sol = solve_signal(exact_signal(model, Z), "dephasing", Z, ("z",))
            for key in ("h_z", "h_perp2", "alpha2+beta2", "gamma"):
                assert sol.identified[key] == pytest.approx(truth[key], abs=1e-6)


# -- solving --------------------------------------------------------------------------

def test_model2_single_trace():
    sol = solve_signal(exact_signal(MODEL2, Z), "dephasing", Z, ("z",))
    ident = sol.identified
    assert ident["h_z"] == pytest.approx(2, abs=1e-6)
    assert ident["h_perp"] == pytest.approx(2, abs=1e-6)
    assert ident["gamma"] == pytest.approx(0.2, abs=1e-6)
    assert ident["alpha2+beta2"] == pytest.approx(0.05, abs=1e-6)
    assert abs(ident["relative_azimuth"]) == pytest.approx(np.arctan2(0.2, 0.1), abs=1e-6)
    assert sol.gauge["fixed"] and sol.params["hy"] == 0.0
    assert "absolute azimuth about z" in sol.gauge["unidentified"]
    assert sol.identifiable_flag == "GaugeOrbit"
    assert aligned_error(sol, MODEL2) < 1e-8


def test_model3_single_trace():
    sol = solve_signal(exact_signal(MODEL3, Z), "relaxation", Z, ("z",))
    ident = sol.identified
    assert ident["gamma_eff"] == pytest.approx(0.25, abs=1e-6)
    assert ident["gamma_s"] == pytest.approx(0.1, abs=1e-6)
    assert ident["delta_gamma"] == pytest.approx(0.1 / np.sqrt(2), abs=1e-6)
    assert ident["h_z"] == pytest.approx(3, abs=1e-6)
    assert ident["h_perp2"] == pytest.approx(5, abs=1e-6)
    assert aligned_error(sol, MODEL3) < 1e-8


@pytest.mark.parametrize("traces", [("x", "y"), ("y", "z"), ("x", "z")])
def test_model3_two_traces(traces):
    sol = reconstruct_two_trace(exact_signal(MODEL3, Z), "relaxation", Z, traces)
    assert not sol.gauge["fixed"] and sol.identifiable_flag == "Full"
    assert aligned_error(sol, MODEL3) < 1e-8


def test_x_start_reports_alternatives():
    sol = solve_signal(exact_signal(MODEL3, X), "relaxation", X, ("z",))
    assert not sol.gauge["fixed"]
    assert sol.alternatives and all(res < 1e-8 for _, res in sol.alternatives)
    # the truth is one of the exact solutions
    cands = [sol.params] + [p for p, _ in sol.alternatives]
    errs = [np.linalg.norm(relaxation_model(**p).A - MODEL3.A) for p in cands]
    assert min(errs) < 1e-6
    with pytest.raises(AmbiguousSolution) as info:
        solve_signal(exact_signal(MODEL3, X), "relaxation", X, ("z",), raise_ambiguous=True)
    assert len(info.value.candidates) == len(cands)


def test_zero_dynamics():
    frozen = CoefficientSystem.from_coefficients([0, 0, 0, 1], [0, 0, 0], "relaxation", Z)
    assert all(v == 0 for v in solve_model(frozen).params.values())
    empty = CoefficientSystem.from_coefficients([0, 0, 0, 0], [0, 0, 0], "dephasing", [0, 0, 0])
    assert all(v == 0 for v in solve_model(empty).params.values())
    for prior in ("dephasing", "relaxation"):
        sol = reconstruct_two_trace(exact_signal(ZERO, Z), prior, Z, ("x", "z"))
        assert max(abs(v) for v in sol.params.values()) < 1e-12


def test_unsupported_generic_prior():
    with pytest.raises(UnsupportedPrior, match="6 equations, 12 unknowns"):
        build_coefficient_system(exact_signal(MODEL1, Z), "generic", Z, ("z",))


def test_no_convergence_on_unreachable_coefficients():
    # a dephasing generator always has a non-negative rate sum D3
    system = CoefficientSystem.from_coefficients([0, 0.5, 0.3, 1], [1, 2, -5], "dephasing", Z)
    with pytest.raises(NoConvergence):
        solve_model(system)


def test_solution_json():
    import json
    sol = solve_signal(exact_signal(MODEL2, Z), "dephasing", Z, ("z",))
    data = json.loads(sol.dumps())
    assert data["identifiable"] == "GaugeOrbit" and data["gauge"]["fixed"]
    assert np.allclose(data["A"], sol.model.A)

import numpy as np
import pytest

from blochid.bench import ExperimentConfig, run_experiment
from blochid.errors import CaseMismatch, ConjugacyViolation, SingularS
from blochid.estimation import BasisTerm, SignalModel, signal_model_from_form
from blochid.lindblad import BlochModel
from blochid.models import MODEL1
from blochid.propagation import eigenstructure, trajectory_signal_form
from blochid.recon_full import (
    FULL, PARTIAL, infer_case, reconstruct, reconstruct_full, reconstruct_jordan, relative_error,
)

from conftest import jordan_model, random_physical_qubit, random_unit, well_conditioned


def exact_signal(model, r0):
    return signal_model_from_form(trajectory_signal_form(model, r0))


def test_model1_noiseless():
    res = reconstruct_full(exact_signal(MODEL1, [0, 0, 1.0]), [0, 0, 1.0])
    assert res.identifiable == FULL and res.case_label == "Generic"
    assert relative_error(res.model, MODEL1) < 1e-8
    assert res.residual < 1e-8


def test_diagonal_generator():
    truth = BlochModel(np.diag([-1.0, -2.0, -3.0]), np.zeros(3))
    r0 = np.ones(3) / np.sqrt(3)
    res = reconstruct_full(exact_signal(truth, r0), r0)
    assert np.allclose(res.model.A, truth.A, atol=1e-12)
    assert np.allclose(res.model.c, 0, atol=1e-12)


def test_eigenvector_start_is_singular():
    es = eigenstructure(MODEL1)
    _, x = es.reals[0]
    rss = -np.linalg.solve(MODEL1.A, MODEL1.c)
    signal = exact_signal(MODEL1, rss + 0.2 * x / np.linalg.norm(x))
    with pytest.raises(SingularS):
        reconstruct_full(signal)
    # the dispatcher degrades to the visible invariant subspace instead
    res = reconstruct(signal)
    assert res.identifiable == PARTIAL and res.model is None
    Q, M = res.subspace, res.subspace_action
    assert np.allclose(MODEL1.A @ Q, Q @ M, atol=1e-10)


def test_partial_pair_subspace_is_invariant():
    # start in the plane of the oscillating eigenvectors only
    rss = -np.linalg.solve(MODEL1.A, MODEL1.c)
    _, _, v = eigenstructure(MODEL1).pairs[0]
    signal = exact_signal(MODEL1, rss + 0.2 * v.real / np.linalg.norm(v))
    res = reconstruct(signal)
    assert res.identifiable == PARTIAL and res.subspace.shape == (3, 2)
    assert np.allclose(MODEL1.A @ res.subspace, res.subspace @ res.subspace_action, atol=1e-10)


def test_random_round_trip():
    rng = np.random.default_rng(99)
    for _ in range(100):
        truth = random_physical_qubit(rng)
        r0 = random_unit(rng)
        res = reconstruct(exact_signal(truth, r0), r0)
        assert res.identifiable == FULL
        assert relative_error(res.model, truth) < 1e-8


def test_broken_conjugate_pair():
    signal = SignalModel([BasisTerm("constant"), BasisTerm("damped_cos", 0.1, 1.0)],
                         np.array([[0, 0, 0.1], [1.0, 0, 0]]))
    with pytest.raises(ConjugacyViolation):
        reconstruct_full(signal)


# -- Jordan cases ---------------------------------------------------------------------

J = {
    "Case1": np.array([[-0.3, 1, 0], [0, -0.3, 0], [0, 0, -0.7]]),
    "Case2": np.diag([-0.3, -0.3, -0.7]),
    "Case3": np.array([[-0.4, 1, 0], [0, -0.4, 1], [0, 0, -0.4]]),
    "Case4": np.array([[-0.4, 1, 0], [0, -0.4, 0], [0, 0, -0.4]]),
    "Case5": -0.4 * np.eye(3),
}


@pytest.mark.parametrize("case", ["Case1", "Case3", "Case5"])
def test_jordan_full_cases_exact(case):
    rng = np.random.default_rng(5)
    for _ in range(10):
        truth = jordan_model(J[case], well_conditioned(rng), 0.2 * random_unit(rng))
        r0 = random_unit(rng)
        signal = exact_signal(truth, r0)
        assert infer_case(signal) == case
        res = reconstruct_jordan(signal, case, r0)
        assert res.identifiable == FULL and res.case_label == case
        assert relative_error(res.model, truth) < 1e-8


@pytest.mark.parametrize("case", ["Case2", "Case4"])
def test_jordan_partial_cases(case):
    rng = np.random.default_rng(6)
    for _ in range(10):
        truth = jordan_model(J[case], well_conditioned(rng), 0.2 * random_unit(rng))
        r0 = random_unit(rng)
        signal = exact_signal(truth, r0)
        res = reconstruct(signal, r0)
        assert res.identifiable == PARTIAL and res.model is None and res.case_label == case
        Q, M = res.subspace, res.subspace_action
        assert Q.shape == (3, 2) and np.linalg.matrix_rank(Q) == 2
        assert np.allclose(truth.A @ Q, Q @ M, atol=1e-10)
        assert np.allclose(res.steady_state, -np.linalg.lstsq(truth.A, truth.c, rcond=None)[0])


def test_case_mismatch():
    rng = np.random.default_rng(8)
    truth = jordan_model(J["Case1"], well_conditioned(rng), [0, 0, 0.1])
    signal = exact_signal(truth, [1.0, 0, 0])
    with pytest.raises(CaseMismatch):
        reconstruct_jordan(signal, "Case3")
    with pytest.raises(CaseMismatch):
        reconstruct_full(signal)


# -- noise -----------------------------------------------------------------------------

def test_error_shrinks_with_repetitions():
    base = dict(model="Model1", N=500, trials=10, seed=21)
    coarse = run_experiment(ExperimentConfig(N_e=1000, **base))
    fine = run_experiment(ExperimentConfig(N_e=5000, **base))
    assert not coarse.failures and not fine.failures
    assert fine.median < coarse.median

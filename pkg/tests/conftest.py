import numpy as np
import pytest

from blochid.lindblad import BlochModel, build_bloch, qubit_spec, to_pauli_frame


def random_f(rng, d=3, scale=0.1):
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    f = G @ G.conj().T
    return scale * f / np.trace(f).real


def random_physical_qubit(rng, h_scale=1.0, rate=0.1):
    """Pauli-frame (A, c) of a random Hamiltonian plus random GKS dissipator."""
    h = h_scale * rng.normal(size=3)
    return to_pauli_frame(build_bloch(qubit_spec(h, random_f(rng, scale=rate))))


def random_unit(rng, d=3):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def jordan_model(J, S, r_ss):
    """``A = S J S^-1`` with steady state ``r_ss``."""
    A = (S @ J @ np.linalg.inv(S)).real
    return BlochModel(A, -A @ np.asarray(r_ss, dtype=float))


def well_conditioned(rng, d=3, eps=0.3):
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return Q @ (np.eye(d) + eps * rng.uniform(-1, 1, size=(d, d)) / d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

"""Hilbert-space primitives: signatures, operators, states, tensor algebra."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavity_purification.states import (
    DensityState,
    Operator,
    PureState,
    SignatureError,
    SpaceSignature,
    StateValidationError,
    TruncationError,
    annihilation,
    basis,
    coherent_state,
    creation,
    default_n_max,
    embed,
    fidelity_pure,
    fock,
    identity,
    maximally_mixed,
    number,
    partial_trace,
    phi_plus,
    pm_product,
    poisson_tail,
    psi_plus,
    sigma_lower,
    sigma_raise,
    sigma_x,
    sigma_y,
    sigma_z,
    tensor,
    trace_distance,
    trace_norm,
)


def random_density(rng, dims, rank=None):
    d = int(np.prod(dims))
    rank = rank or d
    x = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = x @ x.conj().T
    return DensityState(SpaceSignature(tuple(dims)), m / np.trace(m))


def random_ket(rng, dims):
    d = int(np.prod(dims))
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return PureState(SpaceSignature(tuple(dims)), v / np.linalg.norm(v))


class TestSignature:
    def test_total_and_n_max(self):
        sig = SpaceSignature((2, 2, 6))
        assert sig.total == 24
        assert sig.n_max == 5
        assert sig.concat(SpaceSignature((3,))).dims == (2, 2, 6, 3)

    def test_rejects_bad_dims(self):
        with pytest.raises((SignatureError, ValueError)):
            SpaceSignature((2, 0))


class TestOperators:
    def test_pauli_algebra(self):
        x, y, z = sigma_x().matrix, sigma_y().matrix, sigma_z().matrix
        assert np.allclose(x @ y, 1j * z)
        assert np.allclose(sigma_lower().matrix + sigma_raise().matrix, x)

    def test_lowering_convention(self):
        # sigma = |g><e| with g = 0
        assert np.allclose(sigma_lower().matrix @ basis(2, 1).amplitudes, basis(2, 0).amplitudes)

    def test_ladder_commutator_below_cutoff(self):
        n_max = 8
        a, ad = annihilation(n_max).matrix, creation(n_max).matrix
        comm = a @ ad - ad @ a
        assert np.allclose(np.diag(comm)[:-1], 1.0)
        assert np.allclose(ad @ a, number(n_max).matrix)

    def test_matrix_is_read_only(self):
        op = sigma_x()
        with pytest.raises(ValueError):
            op.matrix[0, 0] = 3

    def test_signature_mismatch(self):
        with pytest.raises(SignatureError):
            sigma_x() @ identity((2, 2))

    def test_n_max_too_small(self):
        with pytest.raises(ValueError):
            annihilation(0)

    def test_embed_matches_kron(self):
        sig = SpaceSignature((2, 2, 4))
        lifted = embed(annihilation(3), 2, sig)
        assert np.allclose(lifted.matrix, np.kron(np.eye(4), annihilation(3).matrix))


class TestStates:
    def test_pure_norm_invariant(self):
        with pytest.raises(StateValidationError):
            PureState(SpaceSignature((2,)), np.array([1.0, 1.0]))

    def test_density_invariants(self):
        sig = SpaceSignature((2,))
        with pytest.raises(StateValidationError):
            DensityState(sig, np.array([[1.2, 0], [0, -0.2]]))
        with pytest.raises(StateValidationError):
            DensityState(sig, np.array([[0.5, 1.0], [0.0, 0.5]]))
        with pytest.raises(StateValidationError):
            DensityState(sig, np.eye(2))

    def test_bell_states(self):
        # |+-> basis: |+> = (|g> + |e>)/sqrt2
        s = 1 / math.sqrt(2)
        assert np.allclose(psi_plus().amplitudes, [s, 0, 0, -s])
        assert np.allclose(phi_plus().amplitudes, [s, 0, 0, s])
        ket = pm_product(1, -1).amplitudes
        assert np.allclose(ket, 0.5 * np.array([1, -1, 1, -1]))

    def test_maximally_mixed(self):
        rho = maximally_mixed((2, 2))
        assert rho.purity() == pytest.approx(0.25)


class TestCoherentStates:
    def test_overlap_oracle(self):
        # |<a|b>|^2 = exp(-|a - b|^2)
        a, b = 0.7 + 0.2j, -0.4j
        n_max = default_n_max(1.0)
        ov = coherent_state(a, n_max).overlap(coherent_state(b, n_max))
        assert abs(ov) ** 2 == pytest.approx(math.exp(-abs(a - b) ** 2), abs=1e-12)

    def test_mean_photon_number(self):
        alpha = 1.3j
        psi = coherent_state(alpha, default_n_max(abs(alpha)))
        assert number(psi.signature.n_max).expect(psi).real == pytest.approx(abs(alpha) ** 2, abs=1e-10)

    def test_truncation_rule_bounds_tail(self):
        for amp in (0.0, 0.5, 1.0, 2.0, 3.0):
            assert poisson_tail(amp, default_n_max(amp)) < 1e-10

    def test_truncation_error(self):
        with pytest.raises(TruncationError):
            coherent_state(3.0, 5)

    def test_fock(self):
        assert np.allclose(fock(2, 4).amplitudes, [0, 0, 1, 0, 0])


class TestAlgebra:
    def test_tensor_dims_and_kind(self):
        t = tensor(sigma_x(), identity(2), identity(3))
        assert t.signature.dims == (2, 2, 3)
        with pytest.raises(TypeError):
            tensor(sigma_x(), basis(2, 0))

    def test_partial_trace_of_product(self, rng):
        a, b = random_density(rng, (2,)), random_density(rng, (3,))
        ab = tensor(a, b)
        assert np.allclose(partial_trace(ab, [0]).matrix, a.matrix)
        assert np.allclose(partial_trace(ab, [1]).matrix, b.matrix)

    def test_partial_trace_bell(self):
        red = partial_trace(psi_plus(), [0])
        assert np.allclose(red.matrix, np.eye(2) / 2)

    def test_fidelity_and_distance(self):
        rho = psi_plus().to_density()
        assert fidelity_pure(psi_plus(), rho) == pytest.approx(1.0)
        assert fidelity_pure(phi_plus(), rho) == pytest.approx(0.0, abs=1e-15)
        assert trace_distance(rho, phi_plus().to_density()) == pytest.approx(1.0)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), keep=st.sampled_from([(0,), (1,), (2,), (0, 2), (1, 2)]))
    def test_partial_trace_preserves_trace_and_positivity(self, seed, keep):
        rho = random_density(np.random.default_rng(seed), (2, 2, 3))
        red = partial_trace(rho, keep)
        assert np.trace(red.matrix).real == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(red.matrix).min() > -1e-12

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_trace_distance_is_a_bounded_metric(self, seed):
        r = np.random.default_rng(seed)
        a, b, c = (random_density(r, (2, 2), rank=2) for _ in range(3))
        dab = trace_distance(a, b)
        assert 0 <= dab <= 1 + 1e-12
        assert dab == pytest.approx(trace_distance(b, a))
        assert dab <= trace_distance(a, c) + trace_distance(c, b) + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_pure_fidelity_matches_overlap(self, seed):
        r = np.random.default_rng(seed)
        a, b = random_ket(r, (2, 2)), random_ket(r, (2, 2))
        assert fidelity_pure(a, b.to_density()) == pytest.approx(abs(a.overlap(b)) ** 2, abs=1e-12)

    def test_trace_norm_oracle(self):
        assert trace_norm(np.diag([0.5, -0.25, 0.0])) == pytest.approx(0.75)

    def test_operator_expectation_hermitian(self, rng):
        rho = random_density(rng, (2, 2))
        op = tensor(sigma_z(), sigma_x())
        assert op.is_hermitian()
        assert abs(op.expect(rho).imag) < 1e-12
        assert isinstance(op, Operator)

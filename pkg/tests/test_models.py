"""Hamiltonians, the Lindblad generator and regime checks."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavity_purification.models import (
    EffectiveParams,
    FullModelParams,
    LindbladGenerator,
    build_effective_hamiltonian,
    build_full_hamiltonian,
    build_interaction_hamiltonian,
    check_regimes,
    collective_coupling,
    driven_cavity_hamiltonian,
    full_hamiltonian_source,
    lindblad_rhs,
    rotating_frame_energies,
    stark_counterterm,
    two_atom_signature,
)
from cavity_purification.states import (
    SignatureError,
    SpaceSignature,
    annihilation,
    coherent_state,
    embed,
    phi_plus,
    psi_plus,
    identity,
    sigma_x,
    tensor,
)


def liouvillian(H, a, kappa):
    """Row-major vectorized generator: vec(A X B) = (A kron B^T) vec(X)."""
    d = H.shape[0]
    eye = np.eye(d)
    n = a.conj().T @ a
    return (-1j * (np.kron(H, eye) - np.kron(eye, H.T))
            + kappa * (np.kron(a, a.conj()) - 0.5 * np.kron(n, eye) - 0.5 * np.kron(eye, n.T)))


class TestEffectiveParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            EffectiveParams(g_eff=-1.0)
        with pytest.raises(ValueError):
            EffectiveParams(g_eff=1.0, kappa=0.0)
        with pytest.raises(ValueError):
            EffectiveParams(g_eff=1.0, coupling_signs=(1, 2))

    def test_zero_coupling_allowed(self):
        assert EffectiveParams(g_eff=0.0).couplings == (0.0, 0.0)

    def test_couplings_and_variant(self):
        p = EffectiveParams(g_eff=0.5, coupling_signs=(1, -1), delta_g=0.1)
        assert p.couplings == (0.5, pytest.approx(-0.6))
        assert p.variant
        assert p.alpha_tilde == 0.5j


class TestInteractionHamiltonian:
    def test_hermitian(self):
        for signs in ((1, 1), (1, -1)):
            H = build_interaction_hamiltonian(EffectiveParams(0.7, coupling_signs=signs), 6)
            assert H.is_hermitian()

    def test_matches_operator_form(self):
        # -(g/2)(a + a^dag)(sigma_x1 + sigma_x2)
        n_max, g = 5, 0.8
        sig = two_atom_signature(n_max)
        a = embed(annihilation(n_max), 2, sig)
        sx = tensor(sigma_x(), identity(2), identity(n_max + 1)) + tensor(identity(2), sigma_x(), identity(n_max + 1))
        expected = -0.5 * g * ((a + a.dag()) @ sx).matrix
        assert np.allclose(build_interaction_hamiltonian(EffectiveParams(g), n_max).matrix, expected)

    def test_variant_sign_convention(self):
        # alternating signs give -(g/2)(a + a^dag)(sigma_x1 - sigma_x2)
        cc = collective_coupling(EffectiveParams(1.0, coupling_signs=(1, -1))).matrix
        sx1 = tensor(sigma_x(), identity(2)).matrix
        sx2 = tensor(identity(2), sigma_x()).matrix
        assert np.allclose(cc, sx1 - sx2)

    @pytest.mark.parametrize("signs,target", [((1, 1), psi_plus), ((1, -1), phi_plus)])
    def test_dark_state_annihilated(self, signs, target, rng):
        n_max = 6
        H = build_interaction_hamiltonian(EffectiveParams(1.3, coupling_signs=signs), n_max)
        for _ in range(5):
            v = rng.normal(size=n_max + 1) + 1j * rng.normal(size=n_max + 1)
            ket = np.kron(target().amplitudes, v / np.linalg.norm(v))
            assert np.linalg.norm(H.matrix @ ket) < 1e-12

    def test_effective_hamiltonian_hermitian(self):
        H = build_effective_hamiltonian(EffectiveParams(0.4, omega_eff_drive=2.0), 5)
        assert H.is_hermitian()

    def test_driven_cavity(self):
        H = driven_cavity_hamiltonian(0.3, 4)
        a = annihilation(4).matrix
        assert np.allclose(H.matrix, 0.3 * (a + a.T))


class TestLindblad:
    @pytest.mark.parametrize("kappa", [0.0, 1.0, 2.5])
    def test_matches_vectorized_liouvillian(self, kappa, rng):
        n_max = 3
        p = EffectiveParams(0.6)
        H = build_interaction_hamiltonian(p, n_max)
        a = embed(annihilation(n_max), 2, two_atom_signature(n_max)).matrix
        d = H.dim
        x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = x @ x.conj().T
        rho /= np.trace(rho)
        expected = (liouvillian(np.asarray(H.matrix), a, kappa) @ rho.reshape(-1)).reshape(d, d)
        gen = LindbladGenerator(H, kappa)
        assert np.allclose(gen(rho), expected, atol=1e-12)
        assert np.allclose(gen(rho, hermitian=True), expected, atol=1e-12)

    def test_adjoint_action(self, rng):
        n_max = 2
        H = build_interaction_hamiltonian(EffectiveParams(0.9), n_max)
        matvec, rmatvec = LindbladGenerator(H, 1.3).as_superoperator_action()
        d = H.dim
        u = rng.normal(size=d * d) + 1j * rng.normal(size=d * d)
        v = rng.normal(size=d * d) + 1j * rng.normal(size=d * d)
        assert np.vdot(v, matvec(u)) == pytest.approx(np.vdot(rmatvec(v), u), abs=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), kappa=st.floats(0.0, 3.0), g=st.floats(0.0, 2.0))
    def test_trace_preserving_and_hermitian(self, seed, kappa, g):
        n_max = 3
        H = build_interaction_hamiltonian(EffectiveParams(g), n_max)
        r = np.random.default_rng(seed)
        d = H.dim
        x = r.normal(size=(d, d)) + 1j * r.normal(size=(d, d))
        rho = x @ x.conj().T
        out = lindblad_rhs(H, kappa, rho / np.trace(rho))
        assert abs(np.trace(out)) < 1e-12
        assert np.allclose(out, out.conj().T, atol=1e-12)

    def test_coherent_steady_state_of_driven_cavity(self):
        # d rho/dt = 0 for |beta>, beta = -2 i drive / kappa
        drive, kappa, n_max = 0.4, 1.0, 20
        beta = -2j * drive / kappa
        H = driven_cavity_hamiltonian(drive, n_max)
        psi = coherent_state(beta, n_max)
        rho = np.outer(psi.amplitudes, psi.amplitudes.conj())
        assert H.signature == SpaceSignature((n_max + 1,))
        assert np.linalg.norm(lindblad_rhs(H, kappa, rho)) < 1e-9

    def test_signature_mismatch(self):
        H = build_interaction_hamiltonian(EffectiveParams(1.0), 3)
        with pytest.raises(SignatureError):
            lindblad_rhs(H, 1.0, np.eye(4) / 4)

    def test_negative_kappa(self):
        with pytest.raises(ValueError):
            LindbladGenerator(build_interaction_hamiltonian(EffectiveParams(1.0), 2), -1.0)


def small_full(**kw):
    base = dict(Delta=1.0, DeltaP=0.5, g=0.05, Omega=0.05, Omega1p=0.025, Omega2p=0.025,
                omega_e=3.0, omega_f=5.0)
    base.update(kw)
    return FullModelParams.resonant(**base)


class TestFullModel:
    def test_resonance_and_effective_couplings(self):
        p = small_full()
        assert p.two_photon_detuning == pytest.approx(0.0)
        eff = p.effective(kappa=1.0)
        assert eff.g_eff == pytest.approx(0.05 * 0.05 / 1.0)
        assert eff.omega_eff_drive == pytest.approx(0.025**2 / 0.5)
        assert p.variant_effective().g_eff == pytest.approx(0.025 * 0.05)

    def test_equal_detunings_rejected(self):
        with pytest.raises(ValueError):
            small_full(DeltaP=1.0)

    def test_hermitian_at_all_times(self):
        p, n_max = small_full(), 3
        for t in (0.0, 0.37, 12.5):
            assert build_full_hamiltonian(p, n_max, t).is_hermitian()
        with pytest.raises(ValueError):
            build_full_hamiltonian(p, n_max, -1.0)

    @staticmethod
    def _rotated(p, n_max, t):
        src = full_hamiltonian_source(p, n_max)
        r = rotating_frame_energies(p, n_max)
        u = np.exp(1j * r * t)
        return (u[:, None] * np.asarray(src.at(t).matrix) * u.conj()[None, :]) - np.diag(r)

    def test_rotating_frame_removes_time_dependence(self):
        # exp(iRt) H(t) exp(-iRt) - R is static for the Omega laser and the cavity
        p = small_full(Omega1p=0.0, Omega2p=0.0)
        ref = self._rotated(p, 2, 0.0)
        for t in (0.9, 4.2):
            assert np.allclose(self._rotated(p, 2, t), ref, atol=1e-12)

    def test_primed_lasers_rotate_at_detuning_difference(self):
        # the primed couplings keep a phase exp(+-i (Delta - Delta') t)
        p = small_full()
        period = 2 * math.pi / abs(p.Delta - p.DeltaP)
        h0 = self._rotated(p, 2, 0.3)
        assert np.allclose(self._rotated(p, 2, 0.3 + period), h0, atol=1e-10)
        assert not np.allclose(self._rotated(p, 2, 0.3 + period / 2), h0, atol=1e-6)

    def test_apply_matches_matrix(self, rng):
        p, n_max = small_full(), 2
        src = full_hamiltonian_source(p, n_max)
        v = rng.normal(size=src.dim) + 0j
        assert np.allclose(src.apply(1.7, v), src.at(1.7).matrix @ v)

    def test_stark_counterterm_values(self):
        p, n_max = small_full(), 3
        diag = np.real(np.diag(stark_counterterm(p, n_max).matrix)).reshape(3, 3, n_max + 1)
        g_shift = 0.05**2 / 1.0 + 0.025**2 / 0.5
        e_shift = 0.025**2 / 0.5
        # |g g, n>: both atoms shifted
        assert diag[0, 0, 2] == pytest.approx(2 * g_shift)
        # |e g, n>: n-dependent cavity light shift on the excited atom
        assert diag[1, 0, 2] == pytest.approx(e_shift + 2 * 0.05**2 + g_shift)
        assert not np.any(stark_counterterm(small_full(g=0.0, Omega=0.0, Omega1p=0.0, Omega2p=0.0), 2).matrix)


class TestRegimes:
    def test_ratios_scale_with_couplings(self):
        small = check_regimes(small_full())
        big = check_regimes(small_full(g=0.5, Omega=0.5, Omega1p=0.25, Omega2p=0.25))
        assert small.max_ratio() == pytest.approx(0.05)
        assert big.max_ratio() == pytest.approx(0.5)
        assert all(e.passed for e in small.by_condition("adiabatic"))
        assert not big.passed

    def test_strictness_threshold(self):
        rep = check_regimes(small_full(), strictness=0.01)
        assert not any(e.passed for e in rep.by_condition("adiabatic"))

    def test_strong_driving_ratio(self):
        rep = check_regimes(small_full(Omega1p=0.25, Omega2p=0.25))
        (entry,) = rep.by_condition("strong_driving")
        assert entry.value == pytest.approx((0.05 * 0.05) / (0.25**2 / 0.5))
        assert math.isfinite(entry.value)

    def test_variant_condition_reported_both_ways(self):
        rep = check_regimes(small_full())
        a, b = rep.ambiguous
        assert a.value * b.value == pytest.approx(1.0)
        assert {e.condition for e in rep.ambiguous} == {"variant_strong_driving"}
        # one reading always fails, so it cannot decide the verdict
        assert rep.passed == all(e.passed for e in rep.entries if e not in rep.ambiguous)

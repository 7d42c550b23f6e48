import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from openchain.errors import ConfigError, DimensionError
from openchain.model import (
    ChainParams,
    SingleSiteParams,
    SpdmMatrix,
    TransportRegime,
    drift,
    drift_single,
    eigenfrequencies,
    from_quadratures,
    hamiltonian,
    quadratures,
    transport_regime,
)

from strategies import complex_states, finite, non_negative, positive


def bare(L=2, **kw):
    base = dict(L=L, J=0.0, omega=0.0, g=0.0, gamma1=0.0, gammaL=0.0, D1=0.0, DL=0.0)
    base.update(kw)
    return ChainParams(**base)


class TestParams:
    def test_defaults_follow_figure_setup(self):
        p = ChainParams()
        assert (p.L, p.J, p.omega, p.gamma1, p.gammaL, p.D1, p.DL, p.nbar) == (5, 1, 1, 0.5, 0.5, 0.5, 0.25, 10)
        assert p.hbar_eff == pytest.approx(0.1)

    def test_single_site_chain_rejected(self):
        with pytest.raises(ConfigError):
            ChainParams(L=1)

    @pytest.mark.parametrize("key", ["J", "gamma1", "gammaL", "D1", "DL"])
    def test_negative_coefficients_rejected(self, key):
        with pytest.raises(ConfigError) as info:
            ChainParams(**{key: -0.1})
        assert info.value.key == key

    def test_interaction_sets_g(self):
        assert ChainParams.from_interaction(0.2, nbar=10).g == pytest.approx(2.0)

    def test_inconsistent_interaction(self):
        with pytest.raises(ConfigError):
            ChainParams(g=1.0, U=0.2, nbar=10)

    def test_single_site_validation(self):
        with pytest.raises(ConfigError):
            SingleSiteParams(gamma=-1)
        with pytest.raises(ConfigError):
            SingleSiteParams(D=-1)


class TestDrift:
    def test_phase_rotation(self):
        assert np.allclose(drift([1, 0], bare(omega=1.0)), [-1j, 0])

    def test_hopping_only(self):
        assert np.allclose(drift([1, 0], bare(J=1.0)), [0, 0.5j])

    def test_nonlinear_frequency(self):
        out = drift([math.sqrt(2), 0], bare(g=2.0))
        assert out[0] == pytest.approx(-4 * math.sqrt(2) * 1j)

    def test_friction(self):
        assert drift([2, 0], bare(gamma1=0.5))[0] == pytest.approx(-0.5)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            drift([1, 0, 0], bare())

    @pytest.mark.parametrize(
        "kw, a, expected",
        [
            (dict(omega=1, g=0, gamma=0), 1, -1j),
            (dict(omega=0, g=0, gamma=0.5), 2, -0.5),
            (dict(omega=1, g=1, gamma=0), 1, -2j),
        ],
    )
    def test_single_site(self, kw, a, expected):
        assert drift_single(a, SingleSiteParams(**kw)) == pytest.approx(expected)

    def test_drift_does_not_mutate(self):
        a = np.array([1 + 1j, 0.5, -0.2j])
        before = a.copy()
        drift(a, ChainParams(L=3, g=1.0))
        assert np.array_equal(a, before)

    @given(complex_states(), positive, finite, non_negative)
    def test_total_action_conserved_without_friction(self, a, J, omega, g):
        p = bare(L=len(a), J=J, omega=omega, g=g)
        rate = 2 * np.sum((np.conj(a) * drift(a, p)).real)
        assert abs(rate) <= 1e-12 * (1 + np.sum(np.abs(a) ** 2)) ** 2 * (1 + J + abs(omega) + g)

    @given(complex_states(), positive, finite, non_negative)
    def test_energy_conserved_along_drift(self, a, J, omega, g):
        p = bare(L=len(a), J=J, omega=omega, g=g)
        v = drift(a, p)
        eps = 1e-6
        dH = (hamiltonian(a + eps * v, p) - hamiltonian(a - eps * v, p)) / (2 * eps)
        scale = np.sum(np.abs(v) ** 2) + 1
        assert abs(dH) <= 1e-6 * scale * (1 + g * np.sum(np.abs(a) ** 2))

    @given(complex_states(), positive, non_negative, st.floats(-2, 2))
    def test_omega_shift_is_a_phase(self, a, J, g, delta):
        p0 = bare(L=len(a), J=J, g=g)
        p1 = bare(L=len(a), J=J, g=g, omega=delta)
        assert np.allclose(drift(a, p1) - drift(a, p0), -1j * delta * a)


class TestHamiltonian:
    def test_onsite(self):
        assert hamiltonian([1, 0], bare(omega=1.0, g=2.0)) == pytest.approx(2.0)

    def test_hopping(self):
        assert hamiltonian([1, 1], bare(J=1.0)) == pytest.approx(-1.0)

    def test_vacuum(self):
        assert hamiltonian([0, 0], ChainParams(L=2)) == 0

    def test_dimension(self):
        with pytest.raises(DimensionError):
            hamiltonian([1], ChainParams(L=2))

    @given(complex_states(), st.floats(0, 2 * math.pi))
    def test_global_phase_invariance(self, a, phi):
        p = ChainParams(L=len(a), g=1.3, J=0.7)
        assert hamiltonian(a * np.exp(1j * phi), p) == pytest.approx(hamiltonian(a, p), abs=1e-9)


@given(complex_states())
def test_quadrature_roundtrip(a):
    q, p = quadratures(a)
    assert np.allclose(from_quadratures(q, p), a)
    assert np.allclose((q**2 + p**2) / 2, np.abs(a) ** 2)


class TestEigenfrequencies:
    def test_four_sites(self):
        assert np.allclose(eigenfrequencies(ChainParams(L=4, J=1)), [0, 1, 0, -1], atol=1e-15)

    def test_two_sites(self):
        assert np.allclose(eigenfrequencies(ChainParams(L=2, J=1)), [1, -1])

    def test_zero_hopping(self):
        assert np.all(eigenfrequencies(ChainParams(L=7, J=0)) == 0)

    @given(st.integers(2, 60), positive)
    def test_band(self, L, J):
        w = eigenfrequencies(ChainParams(L=L, J=J))
        assert np.all(np.abs(w) <= J + 1e-12)
        if L % 2 == 0:
            assert np.allclose(np.sort(w), np.sort(-w))


class TestRegime:
    def test_linear_is_ballistic(self):
        assert transport_regime([5, 5, 5], ChainParams(L=3, g=0)) is TransportRegime.BALLISTIC

    def test_diffusive(self):
        assert transport_regime([0.75] * 5, ChainParams(L=5, g=2)) is TransportRegime.DIFFUSIVE

    def test_mixed(self):
        assert transport_regime([0.75, 0.75, 0.3], ChainParams(L=3, g=2)) is TransportRegime.MIXED

    def test_all_below(self):
        assert transport_regime([0.1, 0.2], ChainParams(L=2, g=2)) is TransportRegime.BALLISTIC

    def test_length(self):
        with pytest.raises(DimensionError):
            transport_regime([1, 1], ChainParams(L=3, g=2))


def test_spdm_views():
    rho = SpdmMatrix(np.array([[1.0, 0.1j], [-0.1j, 0.5]]))
    assert np.allclose(rho.actions, [1.0, 0.5])
    assert np.allclose(rho.bond_currents(2.0), [0.2])
    assert np.all(rho.standard_errors == 0)

"""Potential catalog, Lindblad parameters and constructors."""

import math

import numpy as np
import pytest

from qsdlab.errors import ModelError, NonPositiveHbar, NonPositiveMass, NonPositiveParameter, UnknownTag
from qsdlab.hilbert import Grid
from qsdlab.model import (
    DoubleWell,
    Free,
    Harmonic,
    InvertedHarmonic,
    Potential,
    QBMParams,
    Quartic,
    Tabulated,
    from_qbm,
    standard,
    validity_ratio,
)


class TestPotentials:
    def test_catalog_lookup(self):
        assert isinstance(Potential.from_tag("free"), Free)
        assert Potential.from_tag("harmonic", omega=2.0).omega == 2.0
        with pytest.raises(UnknownTag, match="unknown potential"):
            Potential.from_tag("morse")
        with pytest.raises(ModelError, match="bad parameters"):
            Potential.from_tag("quartic", omega=1.0)

    def test_harmonic_and_inverted(self):
        x = np.array([-1.0, 0.0, 2.0])
        h, inv = Harmonic(2.0, 0.5), InvertedHarmonic(2.0, 0.5)
        np.testing.assert_allclose(h.value(x), [1.0, 0.0, 4.0])
        np.testing.assert_allclose(inv.d1(x), -h.d1(x))
        assert h.is_quadratic and inv.is_quadratic
        np.testing.assert_allclose(inv.d2(x), -2.0)
        with pytest.raises(NonPositiveParameter):
            Harmonic(0.0)

    def test_double_well_minima_and_barrier(self):
        dw = DoubleWell(v0=3.0, separation=4.0)
        np.testing.assert_allclose(dw.value(np.array([-2.0, 0.0, 2.0])), [0.0, 3.0, 0.0])
        np.testing.assert_allclose(dw.d1(np.array([-2.0, 2.0])), 0.0, atol=1e-12)
        assert not dw.is_quadratic

    @pytest.mark.parametrize("pot", [Quartic(0.7), DoubleWell(1.5, 3.0)])
    def test_derivatives_are_consistent(self, pot):
        x = np.linspace(-2.0, 2.0, 9)
        h = 1e-5
        np.testing.assert_allclose(pot.d1(x), (pot.value(x + h) - pot.value(x - h)) / (2 * h), rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(pot.d2(x), (pot.d1(x + h) - pot.d1(x - h)) / (2 * h), rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(pot.d3(x), (pot.d2(x + h) - pot.d2(x - h)) / (2 * h), rtol=1e-6, atol=1e-6)

    def test_tabulated_reproduces_quadratic_nodes(self):
        nodes = np.linspace(-3.0, 3.0, 13)
        tab = Tabulated(tuple(nodes), tuple(0.5 * nodes**2))
        assert tab.value(np.array([1.25]))[0] == pytest.approx(0.78125, abs=5e-3)
        assert tab.d1(np.array([1.0]))[0] == pytest.approx(1.0, abs=2e-2)
        with pytest.raises(ModelError, match="strictly increasing"):
            Tabulated((0.0, 2.0, 1.0, 3.0), (0.0, 0.0, 0.0, 0.0))
        with pytest.raises(ModelError, match="at least 4"):
            Tabulated((0.0, 1.0), (0.0, 1.0))


class TestConstructors:
    def test_standard_sets_c(self):
        model = standard(2.0, 0.25, m=1.5, hbar=0.5)
        assert model.c == pytest.approx(0.5 * 0.5 * 2.0 * 0.25)
        assert model.is_standard
        assert isinstance(model.potential, Free)

    def test_standard_absorbs_negative_a(self):
        model = standard(-1.0, 0.5)
        assert (model.a, model.b) == (1.0, -0.5)

    @pytest.mark.parametrize(
        "kwargs, exc",
        [({"m": 0.0}, NonPositiveMass), ({"hbar": -1.0}, NonPositiveHbar)],
    )
    def test_standard_rejects_nonpositive(self, kwargs, exc):
        with pytest.raises(exc):
            standard(1.0, 0.0, **kwargs)

    def test_qbm_mapping(self):
        q = QBMParams(gamma=0.1, kT=10.0, m=2.0, hbar=1.0)
        model = from_qbm(q, Harmonic(1.0, 2.0))
        assert q.diffusion == pytest.approx(1.0 / (8 * 2.0 * 0.1 * 10.0))
        assert model.a**2 == pytest.approx(4 * 2.0 * 0.1 * 10.0)
        assert model.hab == pytest.approx(0.1)
        assert model.c == pytest.approx(0.05)
        assert model.qbm is q
        assert model.describe()["qbm"]["kT"] == 10.0

    def test_qbm_requires_dissipation(self):
        with pytest.raises(NonPositiveParameter):
            from_qbm(QBMParams(gamma=0.0, kT=1.0))
        assert math.isinf(QBMParams(gamma=0.0, kT=1.0).diffusion)
        with pytest.raises(NonPositiveParameter):
            QBMParams(gamma=0.1, kT=0.0)

    def test_with_theta_rotates_lindblad_phase(self):
        model = standard(1.0, 0.0).with_theta(math.pi / 2)
        assert model.phase == pytest.approx(1j)

    def test_discretize_checks_hbar(self):
        with pytest.raises(ModelError, match="hbar"):
            standard(1.0, 0.0, hbar=2.0).discretize(Grid(16, -1.0, 1.0, 1.0))


class TestDiscreteModel:
    def test_l_and_l_dagger_are_adjoint(self):
        grid = Grid(64, -8.0, 8.0)
        dm = standard(0.7, 0.3, theta=0.4).discretize(grid)
        rng = np.random.default_rng(3)
        x = np.exp(-grid.x**2) * (rng.standard_normal(64) + 1j * rng.standard_normal(64))
        y = np.exp(-(grid.x**2)) * (rng.standard_normal(64) + 1j * rng.standard_normal(64))
        assert np.vdot(y, dm.apply_l(x)) == pytest.approx(np.vdot(dm.apply_l_dagger(y), x), rel=1e-10)

    def test_batched_axes_agree(self):
        grid = Grid(32, -6.0, 6.0)
        dm = standard(1.0, 0.5, potential=Harmonic()).discretize(grid)
        rng = np.random.default_rng(0)
        block = rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32))
        np.testing.assert_allclose(dm.apply_h(block, axis=0), dm.apply_h(block.T, axis=-1).T, atol=1e-10)


def test_validity_ratio():
    quartic = standard(1.0, 0.0, potential=Quartic(1.0))
    # ½ Δx² |6x| / |x³| at x = 2 with Δx² = 0.1
    assert validity_ratio(quartic, 2.0, 0.1) == pytest.approx(0.5 * 0.1 * 12.0 / 8.0)
    assert validity_ratio(standard(1.0, 0.0, potential=Harmonic()), 1.0, 0.5) == 0.0
    with pytest.raises(ValueError):
        validity_ratio(quartic, 0.0, -1.0)

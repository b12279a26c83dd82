"""Phase-space cells, quasi-projectors and the two-slice decoherence functional."""

import math

import numpy as np
import pytest

from qsdlab.errors import CellTooSmall, GridTooLarge
from qsdlab.gaussian import coherent_state
from qsdlab.hilbert import Grid
from qsdlab.histories import (
    PhaseSpaceCell,
    build_projector,
    completeness_defect,
    decoherence_functional_2,
    epsilon_vs_area,
    tile_cells,
)
from qsdlab.master import pure_density


@pytest.fixture
def halves():
    """Left and right half of the relevant phase space on the small grid."""
    return tile_cells([-8.0, 0.0, 8.0], [-6.0, 6.0])


@pytest.fixture
def rho0(small_grid, free_params):
    return pure_density(coherent_state(small_grid, free_params, 0.0, 0.0))


class TestCell:
    def test_area_in_planck_units(self):
        cell = PhaseSpaceCell((0.0, 2.0 * math.pi), (0.0, 4.0))
        assert cell.area == pytest.approx(4.0)
        assert cell.center == pytest.approx((math.pi, 2.0))
        assert cell.contains(0.0, 0.0) and not cell.contains(2.0 * math.pi, 0.0)
        assert cell.label() == "[0,6.28319)x[0,4)"

    def test_hbar_scales_area(self):
        cell = PhaseSpaceCell((0.0, 2.0 * math.pi), (0.0, 4.0), hbar=0.5)
        assert cell.area == pytest.approx(8.0)

    def test_ranges_must_increase(self):
        with pytest.raises(ValueError, match="increasing"):
            PhaseSpaceCell((1.0, 1.0), (0.0, 1.0))

    def test_tiling_is_q_major(self):
        cells = tile_cells([0, 1, 2], [0, 1, 2, 3])
        assert len(cells) == 6
        assert cells[0].q_range == (0, 1) and cells[0].p_range == (0, 1)
        assert cells[1].p_range == (1, 2)
        assert cells[3].q_range == (1, 2)


class TestProjector:
    def test_small_cell_rejected(self, small_grid, free_params):
        with pytest.raises(CellTooSmall, match="below"):
            build_projector(PhaseSpaceCell((0.0, 1.0), (0.0, 1.0)), free_params, small_grid)

    def test_min_area_override(self, small_grid, free_params):
        proj = build_projector(PhaseSpaceCell((0.0, 1.0), (0.0, 1.0)), free_params, small_grid, min_area=0.1)
        assert proj.matrix.shape == (32, 32)

    def test_quasi_projector_properties(self, small_grid, free_params):
        proj = build_projector(PhaseSpaceCell((-4.0, 4.0), (-4.0, 4.0)), free_params, small_grid)
        assert proj.hermiticity_defect < 1e-14
        lo, hi = proj.eigenvalue_bounds()
        assert lo > -1e-10 and hi < 1.0 + 1e-3
        # not an exact projector
        assert proj.idempotence_defect() > 1e-6
        psi = coherent_state(small_grid, free_params, 0.0, 0.0)
        assert proj.weight(psi) > 0.98

    def test_completeness_on_the_state_support(self, small_grid, free_params, halves, rho0):
        projectors = [build_projector(c, free_params, small_grid) for c in halves]
        assert completeness_defect(projectors, rho0) < 0.05


class TestDecoherenceFunctional:
    def test_structure_and_sum_rule(self, free_model, free_params, small_grid, halves, rho0):
        projectors = [build_projector(c, free_params, small_grid) for c in halves]
        d = decoherence_functional_2(free_model, rho0, projectors, 0.05, 0.1)
        assert d.values.shape == (2, 2, 2, 2)
        assert d.hermiticity_defect < 1e-10
        assert d.matrix().sum().real == pytest.approx(1.0, abs=0.05)
        assert d.probabilities().sum() == pytest.approx(d.twice_projected_trace, rel=1e-8)
        assert np.all(d.probabilities() > -1e-10)
        assert d.epsilon() >= 0.0
        assert d.modal_history() in {(0, 0), (0, 1), (1, 0), (1, 1)}

    def test_rejects_large_grid(self, free_model, free_params, halves):
        grid = Grid(128, -20.0, 20.0)
        rho = pure_density(coherent_state(grid, free_params, 0.0, 0.0))
        projectors = [build_projector(c, free_params, grid) for c in halves]
        with pytest.raises(GridTooLarge):
            decoherence_functional_2(free_model, rho, projectors, 0.1, 0.2)

    def test_time_order(self, free_model, free_params, small_grid, halves, rho0):
        projectors = [build_projector(c, free_params, small_grid) for c in halves]
        with pytest.raises(ValueError, match="t1 <= t2"):
            decoherence_functional_2(free_model, rho0, projectors, 0.2, 0.1)

    def test_epsilon_by_tiling(self, free_model, free_params, halves, rho0):
        eps = epsilon_vs_area(free_model, rho0, free_params, {halves[0].area: halves}, 0.0, 0.05)
        assert list(eps) == [halves[0].area]
        assert eps[halves[0].area] >= 0.0

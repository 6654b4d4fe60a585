import math

import numpy as np
import pytest

from benchconc import abm, sweep
from benchconc.abm import SimConfig


def synthetic(rows, gammas, betas=None):
    betas = betas or tuple(0.01 * i for i in range(len(rows)))
    grid = sweep.SweepGrid(betas, gammas, replicates=1)
    mean = np.array(rows, dtype=float)
    return sweep.PhaseDiagram(grid, mean, np.zeros_like(mean))


SMALL = SimConfig(steps=2000)


def test_grid_validation():
    with pytest.raises(ValueError):
        sweep.SweepGrid((0.0, 0.0), (1e-4,))
    with pytest.raises(ValueError):
        sweep.SweepGrid((0.0,), (1e-3, 1e-4))
    with pytest.raises(ValueError):
        sweep.SweepGrid((), (1e-4,))
    with pytest.raises(ValueError):
        sweep.SweepGrid((0.0,), (1e-4,), replicates=0)
    with pytest.raises(ValueError):
        sweep.SweepGrid((-0.1,), (1e-4,))
    with pytest.raises(ValueError):
        sweep.SweepGrid((0.0,), (2.0,))


def test_default_grid_shape():
    g = sweep.default_grid()
    assert g.shape == (11, 25) and g.replicates == 16
    assert g.beta_values[0] == 0 and g.beta_values[-1] == pytest.approx(0.05)
    assert g.gamma_values[0] == pytest.approx(1e-6) and g.gamma_values[-1] == pytest.approx(2e-3)
    z = sweep.default_grid(include_gamma_zero=True)
    assert z.gamma_values[0] == 0 and z.shape == (11, 26)


def test_cell_seeds_distinct_and_stable():
    g = sweep.SweepGrid((0.0, 0.01), (1e-4, 1e-3), replicates=3)
    seeds = {g.cell_seed(i, j, r) for i in range(2) for j in range(2) for r in range(3)}
    assert len(seeds) == 12
    assert g.cell_seed(1, 0, 2) == sweep.SweepGrid((0.0, 0.01), (1e-4, 1e-3)).cell_seed(1, 0, 2)
    cfg = g.cell_config(1, 1, 0)
    assert (cfg.overfit_beta, cfg.entry_gamma) == (0.01, 1e-3)


def test_monopoly_cell():
    grid = sweep.SweepGrid((0.0,), (0.0,), replicates=1, base_config=SMALL)
    d = sweep.run_sweep(grid)
    assert d.mean_hhi.tolist() == [[1.0]] and d.stderr_hhi.tolist() == [[0.0]]
    assert len(sweep.tipping_contour(d)) == 0


def test_run_sweep_matches_direct_runs_and_jobs():
    grid = sweep.SweepGrid((0.0, 0.03), (1e-4, 1e-3, 5e-3), replicates=3, base_config=SMALL)
    d1 = sweep.run_sweep(grid, jobs=1)
    d4 = sweep.run_sweep(grid, jobs=4)
    assert np.array_equal(d1.mean_hhi, d4.mean_hhi)
    assert np.array_equal(d1.stderr_hhi, d4.stderr_hhi)
    vals = [abm.steady_state_hhi(abm.run(grid.cell_config(1, 2, r))) for r in range(3)]
    assert d1.mean_hhi[1, 2] == np.mean(vals)
    assert d1.stderr_hhi[1, 2] == pytest.approx(np.std(vals, ddof=1) / math.sqrt(3))
    assert np.all((d1.mean_hhi > 0) & (d1.mean_hhi <= 1))


def test_rows_nonincreasing_in_gamma():
    grid = sweep.SweepGrid((0.02, 0.05), (1e-5, 1e-4, 1e-3, 5e-3), replicates=8)
    d = sweep.run_sweep(grid)
    for row, err in zip(d.mean_hhi, d.stderr_hhi):
        for j in range(len(row) - 1):
            assert row[j + 1] <= row[j] + 2 * max(err[j], err[j + 1])


def test_doubling_replicates_is_consistent():
    base = dict(beta_values=(0.02,), gamma_values=(1e-4, 3e-4, 1e-3))
    d8 = sweep.run_sweep(sweep.SweepGrid(**base, replicates=8))
    d16 = sweep.run_sweep(sweep.SweepGrid(**base, replicates=16))
    assert np.any(d8.stderr_hhi > 0)
    assert np.all(np.abs(d16.mean_hhi - d8.mean_hhi) <= 3 * d8.stderr_hhi)


def test_failing_cell_is_identified(monkeypatch):
    grid = sweep.SweepGrid((0.0, 0.01), (1e-4,), replicates=2, base_config=SimConfig(steps=10))
    real = abm.run

    def flaky(cfg):
        if cfg.overfit_beta == 0.01:
            raise RuntimeError("boom")
        return real(cfg)

    monkeypatch.setattr(abm, "run", flaky)
    with pytest.raises(sweep.SweepError) as info:
        sweep.run_sweep(grid)
    assert (info.value.beta_index, info.value.gamma_index, info.value.replicate) == (1, 0, 0)


# --- contour ------------------------------------------------------------------------

def test_contour_midpoint_in_log_gamma():
    d = synthetic([[0.8, 0.2]], (1e-5, 1e-4))
    (pt,) = sweep.tipping_contour(d).points
    assert pt[1] == pytest.approx(10**-4.5, rel=1e-12)


def test_contour_empty_when_no_crossing():
    assert len(sweep.tipping_contour(synthetic([[0.9, 0.9, 0.9]] * 2, (1e-5, 1e-4, 1e-3)))) == 0


def test_contour_exact_hit_and_bounding_box():
    gammas = (1e-6, 1e-5, 1e-4, 1e-3)
    d = synthetic([[1.0, 0.5, 0.3, 0.1], [0.9, 0.7, 0.6, 0.2]], gammas)
    c = sweep.tipping_contour(d)
    assert c.row_crossings(0.0) == [1e-5]
    for b, g in c.points:
        assert 0.0 <= b <= 0.01 and gammas[0] <= g <= gammas[-1]


def test_contour_skips_gamma_zero_column():
    d = synthetic([[1.0, 0.4, 0.2]], (0.0, 1e-4, 1e-3))
    assert len(sweep.tipping_contour(d)) == 0
    d = synthetic([[1.0, 0.9, 0.1]], (0.0, 1e-4, 1e-3))
    assert sweep.tipping_contour(d).points[0][1] == pytest.approx(10**-3.5)


def test_beta_sensitivity_examples():
    gammas = tuple(10.0**e for e in range(-6, -1))
    row = [1.0, 0.9, 0.8, 0.2, 0.1]
    shifted = [1.0, 0.9, 0.9, 0.8, 0.2]
    assert sweep.beta_sensitivity(synthetic([row, row, row], gammas)) == pytest.approx(1.0)
    assert sweep.beta_sensitivity(synthetic([row, shifted], gammas)) == pytest.approx(10.0)
    with pytest.raises(ValueError, match="crossing"):
        sweep.beta_sensitivity(synthetic([[1.0] * 5, row], gammas))


def test_writers(tmp_path):
    d = synthetic([[0.8, 0.2]], (1e-5, 1e-4))
    p = sweep.write_phase(d, tmp_path / "phase.csv")
    assert p.read_text().splitlines()[0] == "beta,gamma,mean_hhi,stderr_hhi,replicates"
    assert len(p.read_text().splitlines()) == 3
    c = sweep.write_contour(sweep.tipping_contour(d), tmp_path / "tipping.csv")
    assert c.read_text().splitlines()[0] == "beta,gamma_star"

import numpy as np
import pytest

from mstcar.panel import load_count_panel
from mstcar.simulate import SimSpec, simulate_panel, uniform_year_covs, write_simulation


def base_spec(**overrides):
    kwargs = dict(
        rows=3, cols=4, n_groups=2, n_times=5, seed=42,
        rho=np.array([0.7, 0.5]),
        tau2=np.array([0.004, 0.004]),
        year_covs=uniform_year_covs(5, 2, 0.01, 0.2),
        baseline_log_rates=np.log(0.02) * np.ones((5, 2)),
        population_range=(500, 1500),
    )
    kwargs.update(overrides)
    return SimSpec(**kwargs)


def test_zero_variance_recovers_baselines():
    spec = base_spec(
        tau2=np.array([1e-12, 1e-12]),
        year_covs=uniform_year_covs(5, 2, 1e-12),
        population_range=(5000, 5000),
    )
    result = simulate_panel(spec)
    crude = result.panel.deaths.sum(axis=0) / result.panel.populations.sum(axis=0)
    # Poisson noise on layer totals: 12 counties x 5000 persons at rate 0.02
    total_py = 12 * 5000
    se = np.sqrt(0.02 / total_py)
    assert np.all(np.abs(crude - 0.02) < 5 * se)
    assert np.max(np.abs(result.truth_rates - 0.02)) < 1e-4


def test_fixed_seed_reproduces_files(tmp_path):
    a = simulate_panel(base_spec())
    b = simulate_panel(base_spec())
    assert np.array_equal(a.panel.deaths, b.panel.deaths)
    assert np.array_equal(a.panel.populations, b.panel.populations)
    assert np.array_equal(a.truth_rates, b.truth_rates)
    pa = write_simulation(a, tmp_path / "a")
    pb = write_simulation(b, tmp_path / "b")
    for key in pa:
        assert pa[key].read_bytes() == pb[key].read_bytes()


def test_generated_panel_passes_validation():
    result = simulate_panel(base_spec())
    text = (result.panel.index,)
    from mstcar.panel import dump_count_panel

    dumped = dump_count_panel(result.panel)
    reloaded = load_count_panel(dumped.splitlines(), result.panel.index)
    assert np.array_equal(reloaded.deaths, result.panel.deaths)


def test_hot_rates_rejected():
    spec = base_spec(baseline_log_rates=np.log(5.0) * np.ones((5, 2)))
    with pytest.raises(ValueError, match="exceed population"):
        simulate_panel(spec)


def test_adjacency_path_replaces_lattice(tmp_path):
    edge_file = tmp_path / "edges.txt"
    edge_file.write_text("A B\nB C\nC D\n")
    spec = base_spec(adjacency_path=str(edge_file), rows=0, cols=0)
    result = simulate_panel(spec)
    assert result.panel.index.region_labels == ("A", "B", "C", "D")
    assert result.graph.n_edges == 3


def test_spec_validation():
    with pytest.raises(ValueError, match="positive"):
        base_spec(rows=0)
    with pytest.raises(ValueError, match="per group"):
        base_spec(rho=np.array([0.5]))
    with pytest.raises(ValueError, match="population range"):
        base_spec(population_range=(10, 5))


def test_uniform_year_covs_guard():
    with pytest.raises(ValueError, match="positive-definite"):
        uniform_year_covs(2, 3, 0.1, cross_corr=-0.9)


def test_truth_manifest_round_trips(tmp_path):
    result = simulate_panel(base_spec())
    paths = write_simulation(result, tmp_path / "sim")
    import json

    truth = json.loads(paths["truth"].read_text())
    assert truth["seed"] == 42
    assert np.allclose(truth["rho"], [0.7, 0.5])
    lines = paths["truth_rates"].read_text().splitlines()
    assert lines[0] == "region,group,time,rate"
    assert len(lines) == 1 + 12 * 2 * 5

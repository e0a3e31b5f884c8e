import csv

import numpy as np
from hypothesis import given, settings, strategies as st

from cancoord.envsim import EnvConfig, evaluate_kpis, export_csv, generate_dataset, kpi_rows, snapshot
from cancoord.scenario import load_scenario
from cancoord.utility import utility_table

ENV = EnvConfig(rsrp_threshold=-78.0)


def test_sample_count(txp_grid):
    data = generate_dataset(ENV, txp_grid)
    assert len(data["MLB"]) == 620 and len(data["CCO"]) == 620


def test_deterministic(txp_grid):
    assert generate_dataset(ENV, txp_grid) == generate_dataset(ENV, txp_grid)


def test_seed_changes_data(txp_grid):
    assert generate_dataset(ENV, txp_grid) != generate_dataset(ENV.with_overrides(seed=8), txp_grid)


def test_coverage_is_a_fraction(txp_grid):
    assert all(0 <= s.objective_value <= 1 for s in generate_dataset(ENV, txp_grid)["CCO"])


def test_negligible_center_power_serves_nobody():
    env = ENV.with_overrides(ref_loss=40.0)
    seed = env.placement_seeds()[0]
    load, _ = evaluate_kpis(env, -1e6, seed)
    assert load == 0


def test_rsrp_matches_log_distance_formula():
    env = EnvConfig(cells=((0.0, 0.0),), users=5)
    snap = snapshot(env, 60.0, 123)
    d = np.maximum(np.linalg.norm(snap.users, axis=1), 1.0)
    np.testing.assert_allclose(snap.rsrp, 60.0 - (env.ref_loss + 10 * env.pathloss_exponent * np.log10(d)))


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.floats(2.5, 4.5))
def test_monotone_in_center_power(seed, exponent):
    env = ENV.with_overrides(seed=seed, pathloss_exponent=exponent, placements=2)
    rows = kpi_rows(env, np.arange(50.0, 81.0))
    for ps in env.placement_seeds():
        loads = [r[2] for r in rows if r[1] == ps]
        cov = [r[3] for r in rows if r[1] == ps]
        assert loads == sorted(loads) and cov == sorted(cov)


def test_reference_constants_give_a_conflict(reference_path):
    """Inverted load falls and coverage rises with TXP, so the argmaxes differ."""
    sc = load_scenario(reference_path)
    grid = sc.grids["TXP"]
    data = generate_dataset(sc.env, grid)
    mean = lambda cf: [np.mean([s.objective_value for s in data[cf] if s.parameter_value == g]) for g in grid.values]
    mlb = utility_table("TXP", grid.values, mean("MLB"), minimizing=True)
    cco = utility_table("TXP", grid.values, mean("CCO"))
    assert list(mlb.utilities) == sorted(mlb.utilities, reverse=True)
    assert list(cco.utilities) == sorted(cco.utilities)
    assert mlb.argmax() != cco.argmax()


def test_export_csv(tmp_path, txp_grid):
    env = ENV.with_overrides(placements=2)
    paths = export_csv(env, txp_grid, tmp_path, {"MLB": "load"})
    with open(paths[0]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["txp", "kpi", "placement_seed"]
    assert len(rows) == 1 + 62


def test_env_round_trip():
    assert EnvConfig.from_dict(ENV.to_dict()) == ENV

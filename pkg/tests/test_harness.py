import json

import numpy as np
import pytest

from cocoagen.harness import (
    CSV_HEADER,
    SweepConfig,
    SweepRow,
    ValidationReport,
    draw_x_true,
    generalization_error,
    load_config,
    rows_from_csv,
    rows_to_csv,
    run_centralized_baseline,
    run_convergence_sweep,
    run_first_iteration_experiment,
    training_error,
    validate_closed_form,
    validate_error_recursion,
    validate_projection_expectation,
    validate_wishart_moment,
)
from cocoagen.numerics import RngStream
from cocoagen.problem import PartitionSpec, generate_instance
from cocoagen.theory import INF, ExtendedReal


def test_config_defaults_follow_paper_setup():
    c = SweepConfig()
    assert (c.n, c.p, c.K, c.N, c.T, c.test_rows) == (50, 150, 2, 100, 200, 500)
    assert c.partition_grid[0] == (2, 148) and c.partition_grid[-1] == (148, 2)


def test_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(N=0)
    with pytest.raises(ValueError):
        SweepConfig(partition_grid=[(70, 70)])
    with pytest.raises(ValueError):
        SweepConfig(partition_grid=[(50, 50, 50)])
    with pytest.raises(ValueError):
        SweepConfig(lambdas=[-1.0])


def test_config_file_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"n": 10, "p": 30, "partition_grid": [[15, 15]], "N": 3}))
    c = load_config(path, N=5, T=None)
    assert c.n == 10 and c.N == 5 and c.T == 200 and c.partition_grid == [(15, 15)]


def test_training_error_examples():
    x = np.arange(4.0)
    inst = generate_instance(3, 4, x, 0.0, RngStream(1))
    assert training_error(inst, x) == 0.0
    assert training_error(inst, np.zeros(4)) == pytest.approx(inst.y @ inst.y / 3)


def test_generalization_error_exact_fit():
    x = np.ones(5)
    g = generalization_error(x, x, np.random.default_rng(0).standard_normal((20, 5)))
    assert g.empirical == 0.0 and g.population == 0.0


def test_generalization_error_concentration():
    # simulation oracle: ||A' e||^2 / 500 concentrates on ||e||^2 for p = 150
    g = np.random.default_rng(2)
    ratios = []
    for _ in range(200):
        e = g.standard_normal(150)
        r = generalization_error(e, np.zeros(150), g.standard_normal((500, 150)))
        ratios.append(r.empirical / r.population)
    assert 0.8 <= min(ratios) and max(ratios) <= 1.25


def test_first_iteration_small_sweep():
    cfg = SweepConfig(n=10, p=30, partition_grid=[(15, 15), (10, 20)], N=40, seed=4)
    rows = run_first_iteration_experiment(cfg)
    assert [r.sizes for r in rows] == [(15, 15), (10, 20)]
    assert rows[1].theory_first_iter.is_inf
    r = rows[0]
    assert abs(r.empirical_first_iter - float(r.theory_first_iter)) <= 4 * r.first_iter_se
    assert r.gen_error is None and r.train_error is None


def test_first_iteration_zero_truth():
    cfg = SweepConfig(n=10, p=30, partition_grid=[(15, 15), (10, 20)], N=5)
    rows = run_first_iteration_experiment(cfg, x_true=np.zeros(30))
    assert all(r.empirical_first_iter < 1e-20 for r in rows)
    assert all(r.theory_first_iter == 0.0 for r in rows)


def test_first_iteration_requires_flag():
    with pytest.raises(ValueError):
        run_first_iteration_experiment(SweepConfig(n=5, p=10, partition_grid=[(5, 5)],
                                                   record_first_iteration=False))


def test_convergence_sweep_small():
    cfg = SweepConfig(n=10, p=30, partition_grid=[(15, 15), (10, 20)], lambdas=[0.0, 1.0], N=10, T=50)
    rows = run_convergence_sweep(cfg)
    assert len(rows) == 4
    lam0 = [r for r in rows if r.lam == 0.0]
    assert all(r.train_error < 1e-18 for r in lam0)
    crit = [r for r in lam0 if r.sizes == (10, 20)][0]
    # the blow-up at p_k = n is only logarithmic, so small sizes give a modest gap
    assert crit.gen_error > 2 * [r for r in lam0 if r.sizes == (15, 15)][0].gen_error
    assert all(r.failures == 0 and not r.flagged for r in rows)
    assert all(r.theory_first_iter is None for r in rows if r.lam > 0)


def test_same_cell_same_data_across_lambdas():
    cfg = SweepConfig(n=8, p=20, partition_grid=[(10, 10)], lambdas=[0.0], N=3, T=1)
    a = run_convergence_sweep(cfg)[0]
    b = run_first_iteration_experiment(cfg)[0]
    assert a.empirical_first_iter == b.empirical_first_iter


def test_baseline_identity():
    res = run_centralized_baseline(SweepConfig(N=100, seed=1))
    assert res.train_error < 1e-18
    assert abs(res.population_gen_error / res.reference - 1) < 0.15
    x = draw_x_true(150, 1)
    assert res.reference == pytest.approx((1 - 50 / 150) * (x @ x))


def test_failures_are_counted(monkeypatch):
    import cocoagen.harness as h
    from cocoagen.numerics import NumericalFailure

    calls = {"n": 0}
    real = h.cocoa_step

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] % 2:
            raise NumericalFailure("synthetic")
        return real(*a, **k)

    monkeypatch.setattr(h, "cocoa_step", flaky)
    row = run_first_iteration_experiment(SweepConfig(n=5, p=10, partition_grid=[(5, 5)], N=10))[0]
    assert row.failures == 5 and row.flagged


def test_csv_round_trip():
    rows = [
        SweepRow(50, 150, 2, (75, 75), 0.0, 100, 200, 7, 153.1, ExtendedReal(151.3), 150.2, 1e-26, 0, 12.5),
        SweepRow(50, 150, 2, (50, 100), 1e-4, 100, 200, 7, None, INF, None, None, 3, None),
    ]
    text = rows_to_csv(rows)
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1].startswith("50,150,2,75|75,0.0,100,200,7,153.1,151.3,150.2,1e-26,0,12.5")
    assert lines[2] == "50,150,2,50|100,0.0001,100,200,7,,inf,,,3,"
    back = rows_from_csv(text)
    assert back[0].sizes == (75, 75) and back[0].theory_first_iter == ExtendedReal(151.3)
    assert back[1].theory_first_iter.is_inf and back[1].gen_error is None
    assert rows_to_csv(back) == text


def test_csv_without_timing(tmp_path):
    row = SweepRow(5, 10, 2, (5, 5), 0.0, 1, 1, 0, 1.0, ExtendedReal(1.0), None, None, 0, 3.0)
    path = tmp_path / "out.csv"
    rows_to_csv([row], path, timing=False)
    assert path.read_text().splitlines()[1].endswith(",0,")
    assert rows_from_csv(str(path))[0].wall_time_ms is None


def test_csv_rejects_foreign_header():
    with pytest.raises(ValueError):
        rows_from_csv("a,b\n1,2\n")


def test_sweep_parallel_matches_serial():
    cfg = SweepConfig(n=8, p=20, partition_grid=[(10, 10), (5, 15), (8, 12)], N=5, T=5)
    a = rows_to_csv(run_convergence_sweep(cfg, jobs=1), timing=False)
    b = rows_to_csv(run_convergence_sweep(cfg, jobs=2), timing=False)
    assert a == b


# --- validators -----------------------------------------------------------

def test_projection_full_column_rank():
    rep = validate_projection_expectation(50, 10, trials=200)
    assert rep.analytic == 10.0 and rep.passed
    assert abs(rep.empirical_mean - 10.0) < 1e-9


def test_projection_one_by_two():
    rep = validate_projection_expectation(1, 2, z=np.array([1.0, 0.0]), trials=10000)
    assert rep.analytic == 0.5 and rep.passed


def test_projection_wide():
    rep = validate_projection_expectation(50, 75, z=np.ones(75), trials=2000)
    assert rep.analytic == pytest.approx(50.0) and rep.passed


def test_projection_requires_trials():
    with pytest.raises(ValueError):
        validate_projection_expectation(5, 5, trials=10)


@pytest.mark.parametrize("p_k,expected", [(75, 1 / 24), (10, 1 / 195)])
def test_wishart_moment(p_k, expected):
    rep = validate_wishart_moment(50, p_k, trials=2000)
    assert rep.analytic == pytest.approx(expected)
    assert rep.passed
    assert rep.details["offdiag_mean_abs"] < 5e-3


def test_wishart_critical_needs_demo():
    with pytest.raises(ValueError):
        validate_wishart_moment(50, 50, trials=10)
    rep = validate_wishart_moment(50, 50, trials=200, demo=True)
    assert rep.passed is None and rep.analytic == "inf"
    assert len(rep.details["running_diag_mean"]) == 5


def test_closed_form_validator():
    assert validate_closed_form(4, 6, PartitionSpec(6, (6,)), T=10, trials=5).empirical_mean < 1e-12
    rep = validate_closed_form(4, 6, PartitionSpec(6, (3, 3)), T=20, trials=50)
    assert rep.passed


def test_error_recursion_reports():
    rep = validate_error_recursion(10, PartitionSpec(30, (15, 15)), warmup=5, trials=50)
    assert rep.analytic > 0 and rep.std_error > 0 and rep.passed in (True, False)
    rep = validate_error_recursion(10, PartitionSpec(30, (10, 20)), warmup=2, trials=20)
    assert rep.analytic == "inf" and rep.passed is None


def test_report_json_round_trip():
    rep = ValidationReport(0.5, 0.49, 0.01, 100, True, {"n": 1})
    d = rep.to_dict()
    assert {"analytic", "empirical_mean", "std_error", "trials", "pass"} <= set(d)
    assert ValidationReport.from_dict(json.loads(json.dumps(d))) == rep

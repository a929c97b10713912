import math

import numpy as np
import pytest

from sudonet import activations as act
from sudonet import datasets as ds
from sudonet import experiments as ex
from sudonet import network as nw


def small_spec(**kw):
    base = dict(
        task="parabola", activations=(act.TANH, act.sudo(4)), depths=(1,), widths=(3,),
        learning_rates=(1e-2, 1e-3), replicates=2, epochs=5,
    )
    base.update(kw)
    return ex.SweepSpec(**base)


def test_degenerate_cell_trains_once(tmp_path):
    spec = small_spec(learning_rates=(1e-2,), replicates=1)
    log = ex.RunLog(tmp_path / "runs.csv")
    res = ex.run_cell(spec, act.TANH, 1, 3, log)
    assert len(res.runs) == 1
    assert len(ex.read_log(tmp_path / "runs.csv")) == 1
    assert res.selected_lr == 1e-2


def test_run_task_recount_and_tables(tmp_path):
    spec = small_spec()
    results = ex.run_task(spec, tmp_path)
    assert len(results) == 2
    for r in results:
        assert len(r.runs) == 4
        assert r.selected_lr in spec.learning_rates
        best = min(r.lr_means, key=r.lr_means.get)
        assert r.selected_lr == best
        assert r.metric == np.mean([x.metric_value for x in r.runs if x.lr == best])
    recounted = ex.recount(tmp_path / "runs.csv")
    for r in results:
        assert recounted[("parabola", r.activation.name, 1, 3)] == (r.selected_lr, r.metric)
    widths, rows = ex.read_table(tmp_path / "parabola_depth1.csv")
    assert widths == [3]
    assert rows["tanh"] == [results[0].metric]
    assert rows["sudo-4"] == [results[1].metric]


def test_log_columns(tmp_path):
    ex.run_task(small_spec(replicates=1, learning_rates=(1e-3,)), tmp_path)
    header = (tmp_path / "runs.csv").read_text().splitlines()[0]
    assert header.split(",") == list(ex.LOG_COLUMNS)


def test_parallel_matches_serial(tmp_path):
    spec = small_spec()
    a = ex.run_task(spec, tmp_path / "a", jobs=1)
    b = ex.run_task(spec, tmp_path / "b", jobs=2)
    assert [r.metric for r in a] == [r.metric for r in b]
    assert sorted(ex.recount(tmp_path / "a" / "runs.csv").items()) == sorted(
        ex.recount(tmp_path / "b" / "runs.csv").items()
    )


def test_seed_isolation():
    one = ex.run_task(small_spec(activations=(act.sudo(4),)))
    both = ex.run_task(small_spec())
    a = one[0]
    b = next(r for r in both if r.activation == act.sudo(4))
    assert [r.seed for r in a.runs] == [r.seed for r in b.runs]
    assert [r.metric_value for r in a.runs] == [r.metric_value for r in b.runs]
    key = ex.cell_key("parabola", act.TANH, 1, 3)
    assert ex.run_seed(10, key, 2) == ex.run_seed(0, key, 0) + 12


def test_aggregation_rules():
    task = ex.TASKS["checkerboard"]

    def rec(lr, rep, v):
        return ex.RunRecord("checkerboard", "tanh", 0, 1, 5, lr, rep, 0, 1, "accuracy", v, 0.0)

    runs = [rec(1e-3, 0, 0.8), rec(1e-3, 1, 0.9), rec(1e-4, 0, 0.85), rec(1e-4, 1, float("nan"))]
    means, best, metric = ex.aggregate(task, runs)
    assert means == {1e-3: pytest.approx(0.85), 1e-4: 0.85}
    assert best == 1e-3 and metric == pytest.approx(0.85)  # tie keeps the earlier rate
    with pytest.raises(ex.CellFailed):
        ex.aggregate(task, [rec(1e-3, 0, float("nan"))])


def test_diverged_runs_are_failed_not_fatal(tmp_path):
    spec = small_spec(activations=(act.TANH,), learning_rates=(1e6, 1e-3), replicates=1, optimizer="sgd", epochs=20)
    with np.errstate(all="ignore"):
        res = ex.run_task(spec, tmp_path)[0]
    failed = [r for r in res.runs if r.failed]
    assert [r.lr for r in failed] == [1e6]
    assert res.selected_lr == 1e-3
    logged = ex.read_log(tmp_path / "runs.csv")
    assert any(math.isnan(r.metric_value) for r in logged)
    spec = small_spec(activations=(act.TANH,), learning_rates=(1e6,), replicates=1, optimizer="sgd", epochs=20)
    with np.errstate(all="ignore"), pytest.raises(ex.CellFailed):
        ex.run_task(spec)


def test_spec_validation():
    with pytest.raises(ValueError):
        small_spec(activations=())
    with pytest.raises(ValueError):
        small_spec(replicates=0)
    with pytest.raises(ValueError):
        small_spec(task="nope")


@pytest.mark.parametrize(
    "name, n_cells",
    [("checkerboard1", 50), ("checkerboard2", 50), ("regression2", 30), ("memorize4", 30), ("mnist1", 60)],
)
def test_table_grid_shapes(name, n_cells):
    assert len(ex.cells(ex.table_sweep(name))) == n_cells


def test_table_sweep_rows_and_overrides():
    spec = ex.table_sweep("memorize4", rectified=True, epochs=3)
    names = [a.name for a in spec.activations]
    assert names[:2] == ["tanh", "relu"] and names[-1] == "r-sudo-256" and len(names) == 10
    assert spec.epochs == 3
    auto = ex.table_sweep("autoencode")
    assert {d for _, d, _ in ex.cells(auto)} == {ex.AUTOENCODE_DEPTH}
    with pytest.raises(ValueError):
        ex.table_sweep("table99")


def test_table_round_trip(tmp_path):
    rows = [["tanh", 0.125, 1 / 3], ["sudo-2", 2.5, 1e-17]]
    ex.write_table(tmp_path / "t.csv", [10, 20], rows)
    widths, back = ex.read_table(tmp_path / "t.csv")
    assert widths == [10, 20]
    assert back == {"tanh": [0.125, 1 / 3], "sudo-2": [2.5, 1e-17]}


def test_relative_metrics():
    def res(a, w, m):
        return ex.ExperimentResult("autoencode", a, ex.AUTOENCODE_DEPTH, w, [], {}, 1e-3, m)

    rel = ex.relative_metrics([res(act.TANH, 1, 4.0), res(act.sudo(2), 2, 6.0)])
    assert rel[("sudo-2", ex.AUTOENCODE_DEPTH, 2)] == 1.5
    with pytest.raises(ValueError):
        ex.relative_metrics([res(act.sudo(2), 1, 6.0)])


def test_train_reduces_loss_and_is_deterministic():
    data = ds.gen_parabola(50)
    cfg = ex.TrainConfig("adam", 1e-2, 30, 16, seed=4)
    a = nw.init(nw.mlp(1, [5], act.TANH, 1), 0)
    b = nw.init(nw.mlp(1, [5], act.TANH, 1), 0)
    ha, hb = ex.train(a, data, cfg), ex.train(b, data, cfg)
    assert ha == hb and np.array_equal(a.flat, b.flat)
    assert ha[-1] < ha[0]


def test_parabola_dumps():
    run = ex.run_parabola_demo(2, act.TANH, epochs=200, every=50)
    assert sorted(run.dumps) == [0, 50, 100, 150, 200]
    fresh = nw.init(nw.mlp(1, [2], act.TANH, 1), 0)
    np.testing.assert_array_equal(run.dumps[0], fresh.predict(run.x[:, None]).ravel())
    assert run.losses[-1] < nw.loss_sse(run.dumps[0][:, None], run.target[:, None])


def test_parabola_sudo2_staircase():
    run = ex.run_parabola_demo(2, act.sudo(2), epochs=2000)
    assert len(np.unique(run.dumps[2000])) <= 4


def test_histogram_levels_and_conservation():
    data = ds.gen_checkerboard(300, seed=1)
    net = nw.init(nw.mlp(2, [6, 5], act.sudo(4), 1, act.TANH), 0)
    h = ex.collect_activation_histogram(net, data)
    assert h.levels is not None and len(h.counts) == 4
    assert (h.counts > 0).sum() <= 4
    assert h.counts.sum() == (6 + 5) * 300
    wide = ex.collect_activation_histogram(nw.init(nw.mlp(2, [6], act.sudo(64), 1), 0), data)
    assert wide.levels is None and len(wide.counts) == 8 and wide.counts.sum() == 6 * 300


def test_histogram_symmetric_for_untrained_tanh():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(2000, 2))
    x = np.vstack([x, -x])
    data = ds.Dataset(x, np.zeros((len(x), 1)), "sym")
    h = ex.collect_activation_histogram(nw.init(nw.mlp(2, [40], act.TANH, 1), 3), data)
    c = h.counts.astype(float)
    np.testing.assert_allclose(c, c[::-1], rtol=0.10)
    relu = ex.collect_activation_histogram(nw.init(nw.mlp(2, [40], act.RELU, 1), 3), data)
    assert relu.edges[0] == 0.0

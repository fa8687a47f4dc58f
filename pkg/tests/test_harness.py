import csv
import io
from dataclasses import replace

import numpy as np
import pytest

from labelcode import codebook as cb
from labelcode import harness as h
from labelcode.rlel import LabelMap

TINY = h.SyntheticTask(n_train=40, n_val=10, n_test=20, seed=3)
QUICK = h.ExperimentConfig(epochs=2, n_levels=16, n_bits=16, hidden=(8,))


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestGenerator:
    @pytest.mark.parametrize("kind", h.GENERATOR_KINDS)
    def test_deterministic_and_in_range(self, kind):
        task = replace(TINY, kind=kind)
        a, b = h.generate_task(task), h.generate_task(task)
        for split in ("train", "val", "test"):
            sa, sb = getattr(a, split), getattr(b, split)
            assert sa.x.tobytes() == sb.x.tobytes() and sa.y.tobytes() == sb.y.tobytes()
            assert (sa.y >= task.label_low).all() and (sa.y <= task.label_high).all()
            assert (np.abs(sa.x) <= 1).all()

    def test_noise_free(self):
        data = h.generate_task(replace(TINY, noise_frac=0.0))
        np.testing.assert_array_equal(data.train.y, data.clean["train"])

    def test_seeds_differ(self):
        a = h.generate_task(TINY)
        b = h.generate_task(replace(TINY, seed=4))
        assert not np.array_equal(a.train.y, b.train.y)

    def test_splits_disjoint(self):
        data = h.generate_task(TINY)
        rows = np.concatenate([data.train.x, data.val.x, data.test.x])
        assert len({r.tobytes() for r in rows}) == len(rows)

    def test_level_coverage(self):
        task = h.SyntheticTask(n_train=10_000, n_val=1, n_test=1)
        y = h.generate_task(task).train.y
        q = LabelMap(task.label_low, task.label_high, 64).quantize(LabelMap(task.label_low, task.label_high, 64).to_levels(y))
        assert len(np.unique(q)) >= 0.9 * 64

    @pytest.mark.parametrize("kw", [{"kind": "cubic"}, {"n_train": 0}, {"label_high": -1.0}, {"noise_frac": -0.1}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            h.SyntheticTask(**kw)


class TestRun:
    @pytest.mark.parametrize("method", h.METHODS)
    def test_each_method_runs(self, method):
        r = h.run_experiment(TINY, replace(QUICK, method=method))
        assert r.status == "ok" and r.test_mae > 0
        assert len(r.train_loss) == 2
        if method in ("rlel", "bel"):
            assert "approx_transitions" in r.diagnostics

    def test_same_backbone_across_methods(self):
        models = [h.build_model(replace(QUICK, method=m), TINY.input_dim) for m in h.METHODS]
        first = [p.data for p in models[0].backbone.parameters()]
        for m in models[1:]:
            for a, b in zip(first, m.backbone.parameters()):
                assert a.tobytes() == b.data.tobytes()

    def test_deterministic(self):
        a = h.run_experiment(TINY, QUICK)
        b = h.run_experiment(TINY, QUICK)
        assert h.predictions_csv(a) == h.predictions_csv(b)
        assert h.reports_csv([a]) == h.reports_csv([b])

    def test_mae_matches_dump(self):
        r = h.run_experiment(TINY, QUICK)
        rows = rows_of(h.predictions_csv(r))
        recomputed = np.mean([abs(float(x["y_raw"]) - float(x["y_pred_raw"])) for x in rows])
        assert abs(recomputed - r.test_mae) <= 1e-9

    def test_memorises_tiny_task(self):
        task = h.SyntheticTask(n_train=10, n_val=5, n_test=5)
        r = h.run_experiment(task, h.ExperimentConfig(method="rlel", epochs=2000, lr=3e-3))
        assert r.train_mae < LabelMap(task.label_low, task.label_high, 64).step

    def test_divergence_flagged(self):
        with np.errstate(all="ignore"):
            r = h.run_experiment(TINY, replace(QUICK, method="direct_l2", optimizer="sgd", lr=1.0,
                                                  direct_label_scale=1.0, epochs=50))
        assert r.status == "diverged"
        assert "diverged" in h.reports_csv([r])

    def test_optimizer_validated(self):
        with pytest.raises(ValueError, match="optimizer"):
            h.ExperimentConfig(optimizer="lbfgs")

    def test_sgd_and_adam_differ(self):
        a = h.run_experiment(TINY, replace(QUICK, optimizer="sgd"))
        b = h.run_experiment(TINY, QUICK)
        assert a.test_mae != b.test_mae

    def test_bel_code_mismatch_names_both(self, tmp_path):
        path = tmp_path / "code.txt"
        cb.write_code(cb.unary_code(8), path)
        with pytest.raises(ValueError, match="N=8.*N=16"):
            h.resolve_bel_code(str(path), 16)

    def test_report_csv_columns(self):
        text = h.reports_csv([h.run_experiment(TINY, QUICK)])
        assert text.splitlines()[0] == ",".join(h.REPORT_COLUMNS + ["status"])
        assert rows_of(text)[0]["wall_secs"] == ""

    def test_config_echo_replays(self):
        r = h.run_experiment(TINY, QUICK)
        exp = dict(r.config["experiment"])
        exp["hidden"] = tuple(exp["hidden"])
        again = h.run_experiment(h.SyntheticTask(**r.config["task"]), h.ExperimentConfig(**exp))
        assert again.test_mae == r.test_mae


class TestSweep:
    def test_alpha_beta_grid(self):
        reports = []
        for beta in (0.0, 1.0, 5.0):
            reports += h.sweep("alpha", [0.0, 0.1, 0.5], TINY, replace(QUICK, beta=beta, epochs=1), seeds=[0])
        assert len(reports) == 9

    def test_n_levels_rows(self):
        reports = h.sweep("n_levels", [32, 64, 128], TINY, replace(QUICK, n_bits=16, epochs=1), seeds=[0, 1])
        assert len(reports) == 6
        assert sorted({r.config["experiment"]["n_levels"] for r in reports}) == [32, 64, 128]

    def test_train_fraction_sorted(self):
        reports = h.sweep("train_fraction", [1.0, 0.25, 0.5], TINY, replace(QUICK, epochs=1), seeds=[1, 0])
        fracs = [float(r["train_fraction"]) for r in rows_of(h.reports_csv(reports))]
        assert fracs == sorted(fracs)

    def test_failures_flagged_not_raised(self):
        # theta >= M is invalid for the RLEL head, so those runs fail
        reports = h.sweep("n_levels", [16], TINY, replace(QUICK, theta=20, epochs=1), seeds=[0])
        assert [r.status for r in reports] == ["failed"]
        agg = h.aggregate(reports, "n_levels")
        assert agg[0]["n_failed"] == 1

    def test_aggregate(self):
        reports = h.sweep("alpha", [0.0, 0.5], TINY, replace(QUICK, epochs=1), seeds=[0, 1])
        agg = h.aggregate(reports, "alpha")
        assert [(a["value"], a["n_runs"]) for a in agg] == [(0.0, 2), (0.5, 2)]
        expected = np.mean([r.test_mae for r in reports if r.config["experiment"]["alpha"] == 0.0])
        assert agg[0]["test_mae_mean"] == pytest.approx(expected)
        assert h.aggregate_csv(agg).splitlines()[0].startswith("axis,value,method,n_runs,n_failed,test_mae_mean")

    def test_rejects_empty_and_unknown(self):
        with pytest.raises(ValueError):
            h.sweep("alpha", [], TINY, QUICK, seeds=[0])
        with pytest.raises(ValueError):
            h.sweep("gamma", [1.0], TINY, QUICK, seeds=[0])


def test_bel_unary_beats_hadamard():
    maes = {}
    for code in ("unary", "hadamard"):
        maes[code] = np.mean([h.run_experiment(h.SyntheticTask(seed=s), h.ExperimentConfig(method="bel", bel_code=code, seed=s)).test_mae
                              for s in range(5)])
    assert maes["unary"] <= maes["hadamard"]

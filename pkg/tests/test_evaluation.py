import json

import numpy as np
import pytest

import codeflow as cf
from codeflow.errors import ConfigError, InvalidArgumentError, OutOfDomainError
from codeflow.evaluation import report_from_predictions, sweep_table

SCHED = cf.ScheduleParams()


class TestEvalReport:
    def test_internal_consistency_on_random_predictions(self, rng):
        for _ in range(50):
            b = int(rng.integers(2, 6))
            n = int(rng.integers(1, 40))
            true = rng.integers(0, b, n)
            pred = rng.integers(0, b, n)
            report = report_from_predictions(true, pred, b)
            assert report.confusion.sum() == n
            assert report.accuracy == pytest.approx(
                np.trace(report.confusion) / n, abs=1e-12
            )
            np.testing.assert_array_equal(
                report.confusion.sum(axis=1),
                np.bincount(true, minlength=b),
            )

    def test_perfect_predictor(self):
        true = np.array([0, 1, 2, 2, 1])
        report = report_from_predictions(true, true, 3)
        assert report.accuracy == 1.0
        assert np.all(report.confusion == np.diag([1, 2, 2]))
        np.testing.assert_array_equal(report.precision, np.ones(3))
        np.testing.assert_array_equal(report.recall, np.ones(3))

    def test_constant_predictor_on_balanced_split(self):
        b, per = 4, 10
        true = np.repeat(np.arange(b), per)
        pred = np.zeros_like(true)
        report = report_from_predictions(true, pred, b)
        assert report.accuracy == pytest.approx(1 / b)

    def test_text_rendering(self):
        report = report_from_predictions(
            np.array([0, 1]), np.array([0, 1]), 2, labels=("cat", "dog")
        )
        text = report.to_text()
        assert "accuracy: 1.0000" in text
        assert "cat" in text and "dog" in text


class TestEvaluate:
    def test_trained_model_accuracy(self, trained_model):
        report = cf.evaluate(
            trained_model["test"],
            trained_model["state"].params,
            trained_model["codebook"],
            cf.SamplerConfig(num_steps=4, schedule=SCHED),
        )
        assert report.accuracy >= 0.95
        assert report.sample_count == trained_model["test"].num_records
        report.validate()

    def test_unlabeled_split_rejected(self, synthetic_task):
        ds = synthetic_task["test"]
        unlabeled = cf.FeatureDataset(
            labels=ds.labels,
            condition=ds.condition[:4],
            terminal=ds.terminal[:4],
            label_indices=np.array([-1, 0, 1, 2]),
        )
        with pytest.raises(InvalidArgumentError):
            cf.evaluate(
                unlabeled,
                lambda x, xc, t: x,
                synthetic_task["codebook"],
                cf.SamplerConfig(num_steps=1, schedule=SCHED),
            )

    def test_empty_split_rejected(self, synthetic_task):
        empty = synthetic_task["test"].subset(np.array([], dtype=np.int64))
        with pytest.raises(InvalidArgumentError):
            cf.evaluate(
                empty,
                lambda x, xc, t: x,
                synthetic_task["codebook"],
                cf.SamplerConfig(num_steps=1, schedule=SCHED),
            )


class TestSweepSteps:
    def test_singleton_reduces_to_evaluate(self, trained_model):
        cfg = cf.SamplerConfig(num_steps=3, schedule=SCHED)
        report = cf.evaluate(
            trained_model["test"], trained_model["state"].params,
            trained_model["codebook"], cfg,
        )
        rows = cf.sweep_steps(
            trained_model["test"], trained_model["state"].params,
            trained_model["codebook"], [3], SCHED,
        )
        assert rows == [(3, report.accuracy)]

    def test_reference_grid(self, trained_model):
        rows = cf.sweep_steps(
            trained_model["test"], trained_model["state"].params,
            trained_model["codebook"], [1, 2, 4, 10, 20], SCHED,
        )
        assert [n for n, _ in rows] == [1, 2, 4, 10, 20]
        accs = [a for _, a in rows]
        assert max(accs) - min(accs) <= 0.02

    def test_invalid_steps(self, trained_model):
        with pytest.raises(InvalidArgumentError):
            cf.sweep_steps(
                trained_model["test"], trained_model["state"].params,
                trained_model["codebook"], [], SCHED,
            )
        with pytest.raises(InvalidArgumentError):
            cf.sweep_steps(
                trained_model["test"], trained_model["state"].params,
                trained_model["codebook"], [0], SCHED,
            )

    def test_table_format(self):
        assert sweep_table([(1, 0.5), (2, 0.75)]) == "steps\taccuracy\n1\t0.500000\n2\t0.750000\n"


class TestDumpTrajectory:
    def test_writes_panels_and_codeword(self, trained_model, tmp_path):
        cfg = cf.SamplerConfig(num_steps=50, schedule=SCHED, record_trajectory=True)
        record = trained_model["test"].record(0)
        traj_path, panels_path = cf.dump_trajectory(
            record, trained_model["state"].params, trained_model["codebook"],
            cfg, (0.75, 0.5, 0.25, 0.03), tmp_path,
        )
        traj_lines = traj_path.read_text().strip().splitlines()
        assert len(traj_lines) == 51
        first = traj_lines[0].split("\t")
        assert float(first[0]) == SCHED.t_max
        np.testing.assert_allclose(
            [float(x) for x in first[1:]], record.terminal_vector, rtol=1e-6
        )
        panel_lines = panels_path.read_text().strip().splitlines()
        assert len(panel_lines) == 5
        kinds = [l.split("\t")[0] for l in panel_lines]
        assert kinds == ["panel"] * 4 + ["codeword"]
        # panel rows carry increasing cosine toward the codeword
        cosines = [float(l.split("\t")[3]) for l in panel_lines[:4]]
        assert all(b > a for a, b in zip(cosines, cosines[1:]))

    def test_first_panel_at_t_max_is_input(self, trained_model, tmp_path):
        cfg = cf.SamplerConfig(num_steps=20, schedule=SCHED, record_trajectory=True)
        record = trained_model["test"].record(1)
        _, panels_path = cf.dump_trajectory(
            record, trained_model["state"].params, trained_model["codebook"],
            cfg, (SCHED.t_max,), tmp_path,
        )
        line = panels_path.read_text().strip().splitlines()[0].split("\t")
        np.testing.assert_allclose(
            [float(x) for x in line[4:]], record.terminal_vector, rtol=1e-6
        )

    def test_panel_time_outside_interval_rejected(self, trained_model, tmp_path):
        cfg = cf.SamplerConfig(num_steps=5, schedule=SCHED, record_trajectory=True)
        with pytest.raises(OutOfDomainError):
            cf.dump_trajectory(
                trained_model["test"].record(0), trained_model["state"].params,
                trained_model["codebook"], cfg, (0.01,), tmp_path,
            )

    def test_requires_trajectory_recording(self, trained_model, tmp_path):
        cfg = cf.SamplerConfig(num_steps=5, schedule=SCHED)
        with pytest.raises(InvalidArgumentError):
            cf.dump_trajectory(
                trained_model["test"].record(0), trained_model["state"].params,
                trained_model["codebook"], cfg, (0.5,), tmp_path,
            )


class TestExperimentConfig:
    def test_defaults_load(self):
        cfg = cf.ExperimentConfig.load()
        assert cfg.schedule() == cf.ScheduleParams()
        assert cfg.training().batch_size == 64
        assert cfg.panel_times() == (0.75, 0.5, 0.25, 0.03)

    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"training": {"total_steps": 7}}))
        cfg = cf.ExperimentConfig.load(
            path, ["training.batch_size=8", "schedule.k=3.5", "paths.dataset=x.gsf"]
        )
        training = cfg.training()
        assert training.total_steps == 7
        assert training.batch_size == 8
        assert cfg.schedule().k == 3.5
        assert cfg.path("dataset") == "x.gsf"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            cf.ExperimentConfig.load(tmp_path / "nope.json")

    def test_malformed_override(self):
        with pytest.raises(ConfigError):
            cf.ExperimentConfig.load(None, ["no_equals_sign"])

    def test_bad_section_values(self):
        cfg = cf.ExperimentConfig.load(None, ["schedule.k=-1"])
        with pytest.raises(ConfigError):
            cfg.schedule()

    def test_echo_writes_effective_config(self, tmp_path):
        cfg = cf.ExperimentConfig.load(None, ["seed=33"])
        out = cfg.echo(tmp_path)
        echoed = json.loads(out.read_text())
        assert echoed["seed"] == 33

    def test_estimator_dims_injected(self):
        cfg = cf.ExperimentConfig.load()
        est = cfg.estimator(64, 3)
        assert est.dim == 64
        assert est.num_condition_layers == 3

"""Training loop behavior: determinism, calibration gating, divergence
detection, the warmup scan, and grid search plumbing."""

import numpy as np
import pytest

import eaucal.training as tr
from eaucal.config import load_config
from eaucal.datasets import SynthConfig, generate_scenes, load_regression_table
from eaucal.trajectory import TrajectoryModel, TrajModelConfig
from eaucal.training import (EpochStats, TrainingLog, grid_search, render_scan,
                             split_scenes, stream, train_regression,
                             train_trajectory, warmup_threshold_scan)


@pytest.fixture(scope="module")
def scenes():
    return generate_scenes(SynthConfig(n_scenes=30, n_shifted=6, context_steps=4,
                                       horizon_steps=6, seed=11))


@pytest.fixture(scope="module")
def table(tmp_path_factory):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(60, 3))
    y = x @ np.array([1.5, -1.0, 0.5]) + rng.normal(scale=0.2, size=60)
    path = tmp_path_factory.mktemp("reg") / "data.csv"
    with open(path, "w") as fh:
        fh.write("f1,f2,f3,y\n")
        for row, t in zip(x, y):
            fh.write(",".join(repr(float(v)) for v in row) + f",{float(t)!r}\n")
    return load_regression_table(path, "y", split_seed=0)


def _traj_config(**overrides):
    base = {"optimizer.epochs": "3", "optimizer.batch_size": "8",
            "optimizer.lr": "0.003", "model.hidden": "8",
            "data.train_ratio": "0.7", "data.val_ratio": "0.15",
            "data.test_ratio": "0.15"}
    base.update({k: str(v) for k, v in overrides.items()})
    return load_config(overrides=sorted(base.items()))


def _reg_config(**overrides):
    base = {"experiment.task": "regression", "optimizer.epochs": "2",
            "optimizer.batch_size": "16", "optimizer.lr": "0.01",
            "model.hidden": "16", "model.mc_train_samples": "3"}
    base.update({k: str(v) for k, v in overrides.items()})
    return load_config(overrides=sorted(base.items()))


class TestStream:
    def test_same_key_same_draws(self):
        assert np.array_equal(stream(3, 1).permutation(10), stream(3, 1).permutation(10))

    def test_different_keys_differ(self):
        a = stream(3, 1).uniform(size=8)
        b = stream(3, 2).uniform(size=8)
        assert not np.array_equal(a, b)


class TestTrainingLog:
    def _log(self):
        return TrainingLog([EpochStats(0, 1.5, 0.25, 51.5, 0.75, 1.4, 0.01),
                            EpochStats(1, 1.25, 0.5, 101.25, 0.5, 1.3, 0.02)])

    def test_roundtrip_exact(self, tmp_path):
        path = tmp_path / "log.csv"
        log = self._log()
        log.save(path)
        back = TrainingLog.load(path)
        assert len(back.entries) == 2
        for orig, got in zip(log.entries, back.entries):
            assert got.epoch == orig.epoch
            assert got.primary_loss == orig.primary_loss
            assert got.val_loss == orig.val_loss
            assert got.wall_clock == 0.0  # intentionally not persisted

    def test_resave_byte_identical(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        self._log().save(p1)
        TrainingLog.load(p1).save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_timing_sidecar_separate(self, tmp_path):
        path = tmp_path / "t.txt"
        self._log().save_timing(path)
        text = path.read_text()
        assert "wall-clock sidecar" in text
        assert "0,0.010" in text

    def test_malformed_line_numbered(self, tmp_path):
        path = tmp_path / "log.csv"
        self._log().save(path)
        with open(path, "a") as fh:
            fh.write("2,0.5,0.5\n")
        with pytest.raises(ValueError, match=":5: expected 6 fields"):
            TrainingLog.load(path)


class TestSplitScenes:
    def test_partition_properties(self, scenes):
        cfg = _traj_config()
        train, val, test = split_scenes(scenes, cfg.data)
        ids = lambda part: {s.scene_id for s in part}
        assert ids(train) | ids(val) | ids(test) == ids(scenes)
        assert not (ids(train) & ids(val)) and not (ids(train) & ids(test))
        assert all(not s.shifted for s in train + val)
        assert {s.scene_id for s in test if s.shifted} == {s.scene_id for s in scenes
                                                           if s.shifted}
        assert (len(train), len(val)) == (21, 4)

    def test_split_seed_determinism(self, scenes):
        cfg = _traj_config()
        a = split_scenes(scenes, cfg.data)
        b = split_scenes(scenes, cfg.data)
        assert [s.scene_id for s in a[0]] == [s.scene_id for s in b[0]]
        moved = load_config(overrides=[("data.split_seed", "9")])
        c = split_scenes(scenes, moved.data)
        assert [s.scene_id for s in a[0]] != [s.scene_id for s in c[0]]


class TestTrajectoryTraining:
    def test_smoke_and_log_shape(self, scenes):
        result = train_trajectory(_traj_config(**{"calibration.beta": "0"}), scenes)
        assert len(result.log.entries) == 3
        assert result.model_meta["task"] == "trajectory"
        assert result.model_meta["hidden"] == 8
        for e in result.log.entries:
            assert np.isfinite([e.primary_loss, e.eauc_loss, e.total_loss,
                                e.eau_measure, e.val_loss]).all()
        assert result.log.entries[-1].val_loss < result.log.entries[0].val_loss

    def test_rerun_bit_identical(self, scenes):
        cfg = _traj_config(**{"optimizer.epochs": "2"})
        a = train_trajectory(cfg, scenes)
        b = train_trajectory(cfg, scenes)
        for name in a.final_params:
            assert np.array_equal(a.final_params[name], b.final_params[name]), name
        for ea, eb in zip(a.log.entries, b.log.entries):
            assert (ea.primary_loss, ea.val_loss) == (eb.primary_loss, eb.val_loss)

    def test_inactive_calibration_is_exactly_baseline(self, scenes):
        """beta=200 with a start epoch past the run must reproduce the
        beta=0 run bit for bit: the calibration graph is never built."""
        cfg_off = _traj_config(**{"calibration.beta": "0", "optimizer.epochs": "2"})
        cfg_late = _traj_config(**{"calibration.beta": "200",
                                   "calibration.start_epoch": "99",
                                   "optimizer.epochs": "2"})
        a = train_trajectory(cfg_off, scenes)
        b = train_trajectory(cfg_late, scenes)
        for name in a.final_params:
            assert np.array_equal(a.final_params[name], b.final_params[name]), name
        for ea, eb in zip(a.log.entries, b.log.entries):
            # wall_clock is the one deliberately non-deterministic field
            assert (ea.primary_loss, ea.eauc_loss, ea.total_loss,
                    ea.eau_measure, ea.val_loss) == (eb.primary_loss, eb.eauc_loss,
                                                     eb.total_loss, eb.eau_measure,
                                                     eb.val_loss)

    def test_total_is_primary_plus_weighted_calibration(self, scenes):
        cfg = _traj_config(**{"calibration.beta": "200",
                              "calibration.c_clip_lo": "-120",
                              "calibration.c_clip_hi": "0",
                              "optimizer.epochs": "2"})
        result = train_trajectory(cfg, scenes)
        for e in result.log.entries:
            assert e.total_loss == pytest.approx(e.primary_loss + 200.0 * e.eauc_loss,
                                                 rel=1e-9)

    def test_calibration_changes_the_solution(self, scenes):
        base = train_trajectory(_traj_config(**{"calibration.beta": "0"}), scenes)
        cal = train_trajectory(_traj_config(**{"calibration.beta": "200",
                                               "calibration.c_clip_lo": "-120",
                                               "calibration.c_clip_hi": "0"}), scenes)
        assert any(not np.array_equal(base.final_params[k], cal.final_params[k])
                   for k in base.final_params)

    def test_batch_order_immune_to_calibration(self, scenes, monkeypatch):
        real_stream = tr.stream
        sinks = {"off": [], "on": []}
        label = {"now": "off"}

        class PermSpy:
            def __init__(self, rng):
                self._rng = rng

            def permutation(self, n):
                p = self._rng.permutation(n)
                sinks[label["now"]].append(p.copy())
                return p

            def __getattr__(self, name):
                return getattr(self._rng, name)

        def spy(*key):
            rng = real_stream(*key)
            return PermSpy(rng) if tuple(key) == (0, 1) else rng

        monkeypatch.setattr(tr, "stream", spy)
        train_trajectory(_traj_config(**{"calibration.beta": "0",
                                         "optimizer.epochs": "2"}), scenes)
        label["now"] = "on"
        train_trajectory(_traj_config(**{"calibration.beta": "200",
                                         "calibration.c_clip_lo": "-120",
                                         "calibration.c_clip_hi": "0",
                                         "optimizer.epochs": "2"}), scenes)
        assert len(sinks["off"]) == len(sinks["on"]) == 2
        for a, b in zip(sinks["off"], sinks["on"]):
            assert np.array_equal(a, b)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts_with_location(self, scenes):
        cfg = _traj_config(**{"optimizer.lr": "1e8", "optimizer.clip_norm": "0",
                              "optimizer.epochs": "2"})
        with pytest.raises(FloatingPointError, match="non-finite"):
            train_trajectory(cfg, scenes)

    def test_overfits_two_noise_free_scenes(self):
        scenes = generate_scenes(SynthConfig(n_scenes=4, n_shifted=0, p_cv=1.0,
                                             p_turn=0.0, p_stop=0.0, noise_scale=0.0,
                                             context_steps=4, horizon_steps=6, seed=2))
        cfg = _traj_config(**{"optimizer.epochs": "250", "optimizer.lr": "0.02",
                              "optimizer.schedule": "constant",
                              "optimizer.clip_norm": "5",
                              "calibration.beta": "0", "model.hidden": "16",
                              "data.train_ratio": "0.5", "data.val_ratio": "0.5",
                              "data.test_ratio": "0.0"})
        result = train_trajectory(cfg, scenes)
        train, _, _ = split_scenes(scenes, cfg.data)
        model = TrajectoryModel(TrajModelConfig(
            context_dim=result.model_meta["context_dim"],
            horizon=result.model_meta["horizon"],
            hidden=result.model_meta["hidden"],
            timestep=result.model_meta["timestep"]))
        x = np.stack([s.context for s in train])
        y = np.stack([s.target.states for s in train])
        _, raw_ade = model.loglik_batch(result.final_params, x, y)
        assert raw_ade.mean() < 0.1

    def test_empty_split_rejected(self, scenes):
        cfg = _traj_config(**{"data.train_ratio": "0.0", "data.val_ratio": "0.5",
                              "data.test_ratio": "0.5"})
        with pytest.raises(ValueError, match="splits are empty"):
            train_trajectory(cfg, scenes)


class TestRegressionTraining:
    def test_smoke_and_meta(self, table):
        result = train_regression(_reg_config(), table)
        assert len(result.log.entries) == 2
        assert result.model_meta == {"task": "regression", "in_dim": 3,
                                     "hidden": 16, "dropout": 0.5}
        for e in result.log.entries:
            assert np.isfinite([e.primary_loss, e.total_loss, e.val_loss]).all()

    def test_rerun_bit_identical(self, table):
        cfg = _reg_config()
        a = train_regression(cfg, table)
        b = train_regression(cfg, table)
        for name in a.final_params:
            assert np.array_equal(a.final_params[name], b.final_params[name]), name


class TestWarmupScan:
    def test_trajectory_scan_structure(self, scenes):
        scan = warmup_threshold_scan(_traj_config(), scenes, warmup_epochs=1)
        assert scan["task"] == "trajectory" and scan["warmup_epochs"] == 1
        for table_name in ("scaled_ade_percentiles", "loglik_percentiles"):
            pct = scan[table_name]
            assert sorted(pct) == [0, 5, 25, 50, 75, 95, 100]
            ordered = [pct[p] for p in (0, 5, 25, 50, 75, 95, 100)]
            assert all(a <= b for a, b in zip(ordered, ordered[1:]))
        s = scan["suggested"]
        assert s["c_clip_lo"] <= scan["loglik_percentiles"][0]
        assert s["c_clip_hi"] >= scan["loglik_percentiles"][100]
        assert s["c_clip_lo"] == float(int(s["c_clip_lo"]))  # rounded outward
        lo, hi = scan["scaled_ade_percentiles"][0], scan["scaled_ade_percentiles"][100]
        assert lo <= s["ade_th"] <= hi
        assert 0.0 <= s["c_th"] <= 1.0

    def test_regression_scan_structure(self, table):
        scan = warmup_threshold_scan(_reg_config(), table, warmup_epochs=1)
        s = scan["suggested"]
        assert scan["task"] == "regression"
        assert s["var_clip_lo"] < s["var_clip_hi"]
        assert "variance_percentiles" in scan

    def test_render_deterministic(self, scenes):
        scan = warmup_threshold_scan(_traj_config(), scenes, warmup_epochs=1)
        text = render_scan(scan)
        assert text.startswith("# warmup scan v1 task=trajectory epochs=1\n")
        assert "[suggested]" in text
        assert text == render_scan(scan)

    def test_bad_epoch_count(self, scenes):
        with pytest.raises(ValueError, match="warmup_epochs"):
            warmup_threshold_scan(_traj_config(), scenes, warmup_epochs=0)


class TestGridSearch:
    def test_cells_cover_grid_and_sort_by_auc(self, scenes):
        cfg = _traj_config(**{"optimizer.epochs": "1"})
        seen = []

        def fake_eval(cell_cfg, dataset, params):
            cal = cell_cfg.calibration
            seen.append((cal.ade_th, cal.c_th, cal.beta))
            assert params  # trained parameters arrive here
            return {"r_auc": 0.9 if cal.beta == 0.0 else 0.1, "headline_error": 1.0}

        rows = grid_search(cfg, scenes, ade_grid=[0.8], c_grid=[0.5, 0.6],
                           beta_grid=[0.0, 200.0], evaluate_fn=fake_eval)
        assert len(rows) == 4 and len(seen) == 4
        assert {(r["ade_th"], r["c_th"], r["beta"]) for r in rows} == set(seen)
        assert [r["beta"] for r in rows] == [200.0, 200.0, 0.0, 0.0]
        assert [r["c_th"] for r in rows] == [0.5, 0.6, 0.5, 0.6]  # lexicographic ties

    def test_empty_grid_rejected(self, scenes):
        with pytest.raises(ValueError, match="non-empty"):
            grid_search(_traj_config(), scenes, [], [0.5], [0.0], lambda *a: {})

"""Training harness: Adam, logging, early stop, divergence, repeats."""

import importlib
import math

import numpy as np
import pytest

# The package re-exports the train() function under the same name as the
# module, so fetch the module itself for monkeypatching.
train_mod = importlib.import_module("gradflow.train")
from gradflow.errors import ConfigError, ForwardDivergenceError
from gradflow.graphio import sbm_generate
from gradflow.model import ModelConfig
from gradflow.train import (
    ADAM_EPS,
    AdamState,
    RepeatSummary,
    TrainConfig,
    TrainLog,
    adam_step,
    run_repeats,
    train,
)


@pytest.fixture(scope="module")
def graph():
    return sbm_generate(2, 8, 0.8, 0.1, 4, seed=6)


def _config(**overrides):
    model_keys = {"num_layers", "hidden_dim", "activation", "leaky_slope",
                  "residual", "lipschitz_c", "seed"}
    mdl = dict(num_layers=2, hidden_dim=4, seed=0)
    mdl.update({k: v for k, v in overrides.items() if k in model_keys})
    rest = {k: v for k, v in overrides.items() if k not in model_keys}
    rest.setdefault("lr", 0.01)
    rest.setdefault("max_epochs", 20)
    rest.setdefault("record_profiles", "never")
    return TrainConfig(model=ModelConfig(**mdl), **rest)


class TestAdamStep:
    def test_first_step_closed_form(self):
        rng = np.random.default_rng(0)
        p = rng.normal(size=(3, 3))
        g = rng.normal(size=(3, 3))
        p_before = p.copy()
        state = AdamState.init([p])
        assert adam_step([p], [g], state, lr=0.1) is True
        # After bias correction the first update is lr * g / (|g| + eps).
        expected = p_before - 0.1 * g / (np.abs(g) + ADAM_EPS)
        np.testing.assert_allclose(p, expected, rtol=0, atol=1e-15)
        assert state.t == 1

    def test_zero_gradient_moves_nothing(self):
        p = np.ones((2, 2))
        state = AdamState.init([p])
        assert adam_step([p], [np.zeros((2, 2))], state, lr=0.5) is True
        np.testing.assert_array_equal(p, np.ones((2, 2)))

    def test_non_finite_gradient_skips_step_entirely(self):
        p = np.ones((2, 2))
        state = AdamState.init([p])
        adam_step([p], [np.full((2, 2), 0.5)], state, lr=0.1)
        p_snapshot = p.copy()
        m_snapshot = state.m[0].copy()
        bad = np.full((2, 2), 0.5)
        bad[1, 1] = np.nan
        assert adam_step([p], [bad], state, lr=0.1) is False
        np.testing.assert_array_equal(p, p_snapshot)
        np.testing.assert_array_equal(state.m[0], m_snapshot)
        assert state.t == 1

    def test_misaligned_lengths_rejected(self):
        p = np.ones((2, 2))
        state = AdamState.init([p])
        with pytest.raises(ValueError, match="align"):
            adam_step([p], [np.ones((2, 2)), np.ones((2, 2))], state, 0.1)

    def test_two_steps_match_reference_recurrence(self):
        p = np.array([[1.0]])
        state = AdamState.init([p])
        g1, g2 = np.array([[0.3]]), np.array([[-0.2]])
        adam_step([p], [g1], state, lr=0.05)
        adam_step([p], [g2], state, lr=0.05)

        m = 0.9 * (0.1 * 0.3) + 0.1 * (-0.2)
        v = 0.999 * (0.001 * 0.09) + 0.001 * 0.04
        mhat = m / (1 - 0.9 ** 2)
        vhat = v / (1 - 0.999 ** 2)
        ref = 1.0 - 0.05 * 0.3 / (0.3 + ADAM_EPS) \
            - 0.05 * mhat / (math.sqrt(vhat) + ADAM_EPS)
        assert p[0, 0] == pytest.approx(ref, rel=1e-12)


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="lr"):
            _config(lr=0.0)
        with pytest.raises(ValueError, match="max_epochs"):
            _config(max_epochs=0)
        with pytest.raises(ValueError, match="patience"):
            _config(patience=0)

    @pytest.mark.parametrize("bad", ["sometimes", "every_k:", "every_k:x",
                                     "every_k:0"])
    def test_record_mode_validation(self, bad):
        with pytest.raises(ConfigError):
            _config(record_profiles=bad)

    def test_seed_override(self):
        cfg = _config(seed=3)
        assert cfg.model_config().seed == 3
        cfg2 = TrainConfig(model=ModelConfig(num_layers=1, seed=3), seed=9)
        assert cfg2.model_config().seed == 9
        assert cfg2.model.seed == 3


class TestTrain:
    def test_run_is_bitwise_deterministic(self, graph):
        a = train(graph, _config(max_epochs=15))
        b = train(graph, _config(max_epochs=15))
        assert a.train_loss == b.train_loss
        assert a.val_acc == b.val_acc
        assert np.array_equal(a.model.input_proj, b.model.input_proj)
        for wa, wb in zip(a.model.layers, b.model.layers):
            assert np.array_equal(wa, wb)

    def test_metrics_lengths_and_improvement(self, graph):
        log = train(graph, _config(max_epochs=25, lr=0.05))
        assert log.epochs_run == 25  # patience 100 never fires here
        assert len(log.train_acc) == len(log.val_acc) == 25
        assert log.best_epoch is not None
        assert log.best_val_acc == max(log.val_acc)
        assert log.test_at_best == log.test_acc[log.best_epoch]
        # The separable SBM should be learned to high train accuracy.
        assert log.train_acc[-1] > log.train_acc[0]

    def test_early_stop_fires(self, graph):
        log = train(graph, _config(max_epochs=500, lr=0.05, patience=5))
        assert log.epochs_run < 500
        assert log.epochs_run == log.best_epoch + 5 + 1
        assert any("early stop" in e for e in log.events)

    def test_early_stop_disabled_runs_to_max(self, graph):
        log = train(graph, _config(max_epochs=30, lr=0.05, patience=5,
                                   early_stop=False))
        assert log.epochs_run == 30

    def test_controlled_run_keeps_norms_on_target(self, graph):
        log = train(graph, _config(max_epochs=10, lipschitz_c=0.5))
        assert len(log.max_frob_dev) == 10
        assert max(log.max_frob_dev) < 1e-9
        from gradflow.linalg import frobenius_norm
        for w in log.model.layers:
            assert frobenius_norm(w) == pytest.approx(0.5, rel=1e-12)

    def test_uncontrolled_run_records_no_deviation(self, graph):
        log = train(graph, _config(max_epochs=5))
        assert log.max_frob_dev == []

    def test_profiles_at_best(self, graph):
        log = train(graph, _config(max_epochs=10, num_layers=3,
                                   record_profiles="at_best"))
        assert log.gradient_profile_at_best is not None
        assert log.representation_profile_at_best is not None
        assert log.gradient_profile_at_best.kind == "gradient"
        assert len(log.gradient_profile_at_best.values) == 4
        assert len(log.representation_profile_at_best.values) == 4
        assert log.lipschitz_at_best is not None
        assert all(math.isfinite(v)
                   for v in log.gradient_profile_at_best.values)

    def test_never_mode_records_no_profiles(self, graph):
        log = train(graph, _config(max_epochs=5, record_profiles="never"))
        assert log.gradient_profile_at_best is None
        assert log.lipschitz_at_best is None

    def test_every_k_mode(self, graph):
        log = train(graph, _config(max_epochs=5,
                                   record_profiles="every_k:2"))
        assert [e for e, _ in log.profiles_every_k] == [0, 2, 4]
        for _, profile in log.profiles_every_k:
            assert profile.kind == "gradient"

    def test_forward_divergence_marks_log(self, graph, monkeypatch):
        real_forward = train_mod.forward
        calls = {"n": 0}

        def exploding(model, g):
            calls["n"] += 1
            if calls["n"] == 3:
                raise ForwardDivergenceError(0, "forward pass diverged")
            return real_forward(model, g)

        monkeypatch.setattr(train_mod, "forward", exploding)
        log = train(graph, _config(max_epochs=10))
        assert log.diverged is True
        assert log.divergence_epoch == 2
        assert log.epochs_run == 2
        assert any("diverged" in e for e in log.events)

    def test_non_finite_gradient_marks_log_with_profile(self, graph,
                                                        monkeypatch):
        real_backward = train_mod.backward
        calls = {"n": 0}

        def poisoning(model, g, tape, grad_logits):
            calls["n"] += 1
            out = real_backward(model, g, tape, grad_logits)
            if calls["n"] == 2:
                out.w_grads[0][0, 0] = np.nan
            return out

        monkeypatch.setattr(train_mod, "backward", poisoning)
        log = train(graph, _config(max_epochs=10))
        assert log.diverged is True
        assert log.divergence_epoch == 1
        assert log.epochs_run == 2  # epoch 1 metrics were recorded
        assert any("non-finite gradient" in e for e in log.events)
        assert log.gradient_profile_at_divergence is not None

    def test_first_epoch_reaching(self, graph):
        log = TrainLog(config=_config())
        log.train_acc.extend([0.2, 0.5, 0.95, 0.99, 1.0])
        assert log.first_epoch_reaching(0.5) == 1
        assert log.first_epoch_reaching(0.99) == 3
        assert log.first_epoch_reaching(1.1) is None


class TestTrainLogCsv:
    def test_csv_layout_controlled(self, graph, tmp_path):
        log = train(graph, _config(max_epochs=4, lipschitz_c=0.5))
        path = tmp_path / "log.csv"
        log.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == \
            "epoch,train_loss,train_acc,val_acc,test_acc,max_frob_dev"
        assert len(lines) == 5
        row = lines[1].split(",")
        assert row[0] == "0"
        assert float(row[1]) == log.train_loss[0]
        assert row[5] != ""

    def test_csv_uncontrolled_leaves_deviation_empty(self, graph, tmp_path):
        log = train(graph, _config(max_epochs=2))
        path = tmp_path / "log.csv"
        log.to_csv(path)
        assert path.read_text().splitlines()[1].endswith(",")

    def test_summary_mentions_headlines(self, graph):
        log = train(graph, _config(max_epochs=4))
        text = log.format_summary()
        assert "epochs_run = 4" in text
        assert f"best_epoch = {log.best_epoch}" in text
        assert "diverged = false" in text


class TestRunRepeats:
    def test_seeds_and_determinism(self, graph):
        logs, summary = run_repeats(graph, _config(max_epochs=8),
                                    repeats=3, seed_base=5)
        assert summary.seeds == (5, 6, 7)
        assert len(logs) == 3
        solo = train(graph, _config(max_epochs=8, seed=6))
        assert logs[1].train_loss == solo.train_loss

    def test_seed_changes_outcome(self, graph):
        logs, _ = run_repeats(graph, _config(max_epochs=8), repeats=2)
        assert logs[0].train_loss != logs[1].train_loss

    def test_summary_statistics(self, graph):
        _, summary = run_repeats(graph, _config(max_epochs=8), repeats=3)
        assert isinstance(summary, RepeatSummary)
        assert summary.mean_test == pytest.approx(
            sum(summary.test_accs) / 3)
        assert summary.min_test <= summary.mean_test <= summary.max_test
        assert summary.diverged_runs == 0

    def test_diverged_run_contributes_zero(self, graph, monkeypatch):
        real_train = train_mod.train
        calls = {"n": 0}

        def sometimes_diverging(g, config):
            calls["n"] += 1
            if calls["n"] == 2:
                log = TrainLog(config=config)
                log.diverged = True
                log.divergence_epoch = 0
                return log
            return real_train(g, config)

        monkeypatch.setattr(train_mod, "train", sometimes_diverging)
        _, summary = run_repeats(graph, _config(max_epochs=4), repeats=3)
        assert summary.diverged_runs == 1
        assert summary.best_val_accs[1] == 0.0
        assert summary.test_accs[1] == 0.0
        assert summary.best_val_accs[0] > 0.0

    def test_repeats_must_be_positive(self, graph):
        with pytest.raises(ValueError, match="repeats"):
            run_repeats(graph, _config(), repeats=0)

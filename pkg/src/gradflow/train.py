"""Full-batch training harness with deterministic bookkeeping.

One epoch = one forward pass over the whole graph, metrics from the
resulting logits, one hand-written backward pass, one Adam step, and
(when configured) one Frobenius rescaling of the hidden weights.  Every
epoch's metrics land in a TrainLog; similarity profiles are captured at
the best-validation epoch (recomputed from a checkpoint of those exact
weights, so they are bit-identical to that epoch's pass) and optionally
every k epochs.

Divergence never crashes a run: a non-finite forward or gradient marks
the log as diverged, keeps everything recorded so far (including a
gradient profile of the diverging pass, when one can be computed), and
ends the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ForwardDivergenceError
from .graphio import Graph
from .lipschitz import LipschitzReport, apply_to_model, diagnose
from .model import (
    Model,
    ModelConfig,
    backward,
    evaluate,
    forward,
    masked_cross_entropy,
)
from .similarity import SimilarityProfile, similarity_profile

__all__ = [
    "AdamState",
    "adam_step",
    "TrainConfig",
    "TrainLog",
    "train",
    "run_repeats",
    "RepeatSummary",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """First/second moment estimates for a list of parameters."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def init(cls, params) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float) -> bool:
    """One bias-corrected Adam update, in place on ``params``.

    If any gradient contains a non-finite value the whole step is
    skipped -- parameters, moments and the step counter all stay
    untouched -- and False is returned so the caller can log the event.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must align")
    for g in grads:
        if not np.isfinite(g).all():
            return False
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1 ** state.t
    bc2 = 1.0 - ADAM_BETA2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    return True


def _parse_record_mode(spec: str) -> tuple[str, int]:
    """Normalize a record_profiles setting to (mode, k)."""
    if spec in ("never", "at_best"):
        return spec, 0
    if spec.startswith("every_k:"):
        try:
            k = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(
                f"record_profiles every_k needs an integer, got {spec!r}"
            ) from None
        if k < 1:
            raise ConfigError("record_profiles every_k must be >= 1")
        return "every_k", k
    raise ConfigError(
        f"record_profiles must be never, at_best or every_k:<int>, "
        f"got {spec!r}")


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines one training run besides the graph."""

    model: ModelConfig
    lr: float = 0.01
    max_epochs: int = 1000
    early_stop: bool = True
    patience: int = 100
    record_profiles: str = "at_best"
    seed: int | None = None

    def __post_init__(self):
        if not self.lr > 0.0:
            raise ValueError("lr must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        _parse_record_mode(self.record_profiles)

    def model_config(self) -> ModelConfig:
        """The model config actually used (seed override applied)."""
        if self.seed is None:
            return self.model
        return replace(self.model, seed=self.seed)


@dataclass
class TrainLog:
    """Complete record of one training run.

    Per-epoch lists all have one entry per completed forward pass.  The
    metrics of epoch ``e`` are measured on the weights *before* that
    epoch's optimizer step, and the profiles at ``best_epoch`` are
    recomputed from a checkpoint of exactly those weights.
    """

    config: TrainConfig
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)
    max_frob_dev: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    best_val_acc: float = -math.inf
    test_at_best: float | None = None
    diverged: bool = False
    divergence_epoch: int | None = None
    events: list[str] = field(default_factory=list)
    gradient_profile_at_best: SimilarityProfile | None = None
    representation_profile_at_best: SimilarityProfile | None = None
    gradient_profile_at_divergence: SimilarityProfile | None = None
    profiles_every_k: list[tuple[int, SimilarityProfile]] = \
        field(default_factory=list)
    lipschitz_at_best: LipschitzReport | None = None
    model: Model | None = None

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    def first_epoch_reaching(self, train_acc: float) -> int | None:
        """Earliest epoch whose training accuracy reaches ``train_acc``."""
        for e, acc in enumerate(self.train_acc):
            if acc >= train_acc:
                return e
        return None

    def to_csv(self, path) -> None:
        """Per-epoch metrics; ``max_frob_dev`` is empty when uncontrolled."""
        lines = ["epoch,train_loss,train_acc,val_acc,test_acc,max_frob_dev"]
        for e in range(self.epochs_run):
            dev = repr(self.max_frob_dev[e]) if e < len(self.max_frob_dev) \
                else ""
            lines.append(
                f"{e},{self.train_loss[e]!r},{self.train_acc[e]!r},"
                f"{self.val_acc[e]!r},{self.test_acc[e]!r},{dev}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def format_summary(self) -> str:
        """Flat ``key = value`` lines with the run's headline facts."""
        final_train = repr(self.train_acc[-1]) if self.train_acc else "None"
        lines = [
            f"epochs_run = {self.epochs_run}",
            f"best_epoch = {self.best_epoch}",
            f"best_val_acc = {self.best_val_acc!r}",
            f"test_at_best = {self.test_at_best!r}",
            f"final_train_acc = {final_train}",
            f"diverged = {str(self.diverged).lower()}",
            f"divergence_epoch = {self.divergence_epoch}",
        ]
        for event in self.events:
            lines.append(f"event = {event}")
        return "\n".join(lines)


def train(graph: Graph, config: TrainConfig) -> TrainLog:
    """Train one model on ``graph`` per ``config``; fully deterministic.

    Returns the TrainLog (which also carries the final model).  Early
    stopping, when enabled, ends the run once ``patience`` epochs pass
    without a strict improvement of validation accuracy; ties therefore
    keep the earliest best epoch.
    """
    mcfg = config.model_config()
    num_classes = int(graph.labels.max()) + 1
    model = Model.init(mcfg, graph.feature_dim, num_classes)
    apply_to_model(model)
    controlled = mcfg.lipschitz_c is not None
    mode, every_k = _parse_record_mode(config.record_profiles)

    def params_of(m: Model) -> list[np.ndarray]:
        return [m.input_proj, *m.layers, m.readout]

    state = AdamState.init(params_of(model))
    log = TrainLog(config=config)
    best_model: Model | None = None

    for epoch in range(config.max_epochs):
        try:
            tape = forward(model, graph)
        except ForwardDivergenceError as exc:
            log.diverged = True
            log.divergence_epoch = epoch
            log.events.append(f"epoch {epoch}: {exc}")
            break
        loss, grad_logits = masked_cross_entropy(
            tape.logits, graph.labels, graph.train_mask)
        log.train_loss.append(loss)
        log.train_acc.append(
            evaluate(tape.logits, graph.labels, graph.train_mask))
        log.val_acc.append(
            evaluate(tape.logits, graph.labels, graph.val_mask))
        log.test_acc.append(
            evaluate(tape.logits, graph.labels, graph.test_mask))
        if controlled:
            log.max_frob_dev.append(max(
                abs(float(np.sqrt(np.sum(w * w))) - mcfg.lipschitz_c)
                for w in model.layers))

        backward(model, graph, tape, grad_logits)
        if log.val_acc[-1] > log.best_val_acc:
            log.best_val_acc = log.val_acc[-1]
            log.best_epoch = epoch
            log.test_at_best = log.test_acc[-1]
            best_model = model.copy()
        if mode == "every_k" and epoch % every_k == 0:
            log.profiles_every_k.append(
                (epoch, similarity_profile(tape, "gradient")))

        grads = [tape.input_proj_grad, *tape.w_grads, tape.readout_grad]
        stepped = adam_step(params_of(model), grads, state, config.lr)
        if not stepped:
            log.diverged = True
            log.divergence_epoch = epoch
            log.events.append(
                f"epoch {epoch}: non-finite gradient, step skipped; "
                "run stopped")
            log.gradient_profile_at_divergence = \
                similarity_profile(tape, "gradient")
            break
        if controlled:
            apply_to_model(model)
        if (config.early_stop and log.best_epoch is not None
                and epoch - log.best_epoch >= config.patience):
            log.events.append(
                f"epoch {epoch}: early stop, no improvement for "
                f"{config.patience} epochs")
            break

    if best_model is not None and mode != "never":
        tape = forward(best_model, graph)
        _, grad_logits = masked_cross_entropy(
            tape.logits, graph.labels, graph.train_mask)
        backward(best_model, graph, tape, grad_logits)
        log.gradient_profile_at_best = similarity_profile(tape, "gradient")
        log.representation_profile_at_best = \
            similarity_profile(tape, "representation")
        log.lipschitz_at_best = diagnose(best_model, graph)
    log.model = model
    return log


@dataclass(frozen=True)
class RepeatSummary:
    """Aggregate of repeated runs differing only in their seed."""

    seeds: tuple[int, ...]
    best_val_accs: tuple[float, ...]
    test_accs: tuple[float, ...]
    diverged_runs: int

    @property
    def mean_val(self) -> float:
        return float(np.mean(self.best_val_accs))

    @property
    def mean_test(self) -> float:
        return float(np.mean(self.test_accs))

    @property
    def min_test(self) -> float:
        return float(np.min(self.test_accs))

    @property
    def max_test(self) -> float:
        return float(np.max(self.test_accs))


def run_repeats(graph: Graph, config: TrainConfig, repeats: int = 5,
                seed_base: int = 0) -> tuple[list[TrainLog], RepeatSummary]:
    """Run ``repeats`` seeds (``seed_base + i``) of the same config.

    A diverged run contributes its best-so-far accuracies (0 when it
    never completed an epoch), which is how depth sweeps make collapse
    visible instead of crashing.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    logs = []
    seeds = tuple(seed_base + i for i in range(repeats))
    for seed in seeds:
        logs.append(train(graph, replace(config, seed=seed)))
    vals = tuple(
        0.0 if log.best_epoch is None else float(log.best_val_acc)
        for log in logs)
    tests = tuple(
        0.0 if log.test_at_best is None else float(log.test_at_best)
        for log in logs)
    summary = RepeatSummary(
        seeds=seeds,
        best_val_accs=vals,
        test_accs=tests,
        diverged_runs=sum(1 for log in logs if log.diverged),
    )
    return logs, summary

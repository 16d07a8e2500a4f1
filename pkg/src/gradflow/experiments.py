"""Experiment runners behind the command-line interface.

Each public ``run_*`` function executes one study end to end: it
resolves the dataset, trains or evaluates every grid cell, writes CSV
and SVG artifacts under ``out_dir/<command>/``, records a manifest, and
returns structured results for programmatic use.  The test suite calls
these functions directly; the CLI merely parses flags into an
:class:`ExperimentSpec` and dispatches.

Artifacts are deterministic byte streams: reruns of the same spec on
the same backend reproduce every CSV, SVG, and manifest bit for bit.
Nothing here embeds timestamps, hostnames, or iteration-order
accidents; progress chatter goes to stdout only.

Layout per run::

    out_dir/
      manifest.txt                      # config echo, seeds, artifact hashes
      <command>/
        <cell-id>/{log.csv, summary.txt, profile_*.csv, plot.svg}
        <aggregate>.csv / <aggregate>.svg
"""

from __future__ import annotations

import functools
import hashlib
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from ._version import __version__
from .backend import BACKEND
from .config import Config
from .datagen import connected_sbm, standin_graph
from .errors import (
    BoundViolationError,
    ConfigError,
    DepthCapError,
    FitError,
)
from .graphio import Graph, load_dataset_dir
from .model import (
    ACTIVATIONS,
    Model,
    ModelConfig,
    backward,
    forward,
    masked_cross_entropy,
)
from .oracles import (
    RESIDUAL_DEPTH_CAP,
    expansion_bound,
    linear_input_gradient,
    linear_weight_gradient,
    residual_input_gradient,
    smoothing_bound,
)
from .similarity import fit_decay
from .svgplot import Series, line_plot, scatter_plot, write_svg
from .train import TrainConfig, run_repeats, train

__all__ = [
    "COMMANDS",
    "ExperimentSpec",
    "spec_from_config",
    "run_experiment",
    "run_grad_profile",
    "run_depth_sweep",
    "run_train_curves",
    "run_scatter",
    "run_bound_check",
    "run_oracle_test",
    "run_fd_check",
    "run_linear_equivalence",
    "run_residual_equivalence",
    "run_bound_suite",
    "ProfileCellResult",
    "SweepCellResult",
    "CurveCellResult",
    "ScatterRow",
    "BoundCheckResult",
    "OracleCheckRow",
]

COMMANDS = ("grad-profile", "depth-sweep", "train-curves", "scatter",
            "bound-check", "oracle-test")

MAX_PLAIN_DEPTH = 128  # deeper grids sit behind the --heavy flag

_DEPTH_DEFAULTS = {
    "grad-profile": (2, 64, 128),
    "depth-sweep": (1, 2, 4, 8, 16, 32, 64, 128),
    "train-curves": (64,),
    "scatter": (2, 4, 8, 16, 32, 64),
    "bound-check": (6,),
    "oracle-test": (4,),
}
_C_DEFAULTS = {
    "depth-sweep": (None, 0.25),
    "train-curves": (None, 4.0, 1.0, 0.25),
}
_LR_DEFAULTS = {
    "depth-sweep": (0.001, 0.005, 0.01),
    "train-curves": (0.001,),
}
_ACT_DEFAULTS = {
    "grad-profile": ("relu", "leaky_relu", "gelu"),
}
_RES_DEFAULTS = {
    "grad-profile": (False, True),
    "scatter": (False, True),
}
_REPEAT_DEFAULTS = {
    "depth-sweep": 5,
}
_EPOCH_DEFAULTS = {
    "train-curves": 1000,
}


@dataclass(frozen=True)
class ExperimentSpec:
    """Fully-resolved description of one experiment run."""

    command: str
    dataset: str = "standin:cora"
    out_dir: str = "results"
    depths: tuple = (2,)
    cs: tuple = (None,)
    lrs: tuple = (0.01,)
    activations: tuple = ("leaky_relu",)
    residuals: tuple = (True,)
    repeats: int = 1
    seed_base: int = 0
    max_epochs: int = 400
    patience: int = 100
    hidden_dim: int = 64
    leaky_slope: float = 0.8
    instances: int = 100
    heavy: bool = False
    validate: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; "
                              f"expected one of {', '.join(COMMANDS)}")
        for name in ("depths", "cs", "lrs", "activations", "residuals"):
            if not getattr(self, name):
                raise ConfigError(f"grid axis {name!r} must be nonempty")
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        object.__setattr__(self, "cs", tuple(
            None if c is None else float(c) for c in self.cs))
        object.__setattr__(self, "lrs", tuple(float(v) for v in self.lrs))
        object.__setattr__(self, "activations", tuple(self.activations))
        object.__setattr__(self, "residuals", tuple(
            bool(r) for r in self.residuals))
        if any(d < 1 for d in self.depths):
            raise ConfigError("depths must be positive")
        too_deep = [d for d in self.depths if d > MAX_PLAIN_DEPTH]
        if too_deep and not self.heavy:
            raise ConfigError(
                f"depth(s) {too_deep} exceed {MAX_PLAIN_DEPTH}; pass --heavy "
                "to run them")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {act!r}; expected one "
                                  f"of {', '.join(ACTIVATIONS)}")
        for c in self.cs:
            if c is not None and not c > 0.0:
                raise ConfigError("c values must be positive or none")
        if any(not lr > 0.0 for lr in self.lrs):
            raise ConfigError("lr values must be positive")
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be at least 1")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be at least 1")
        if self.instances < 1:
            raise ConfigError("instances must be at least 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.command == "bound-check" \
                and max(self.depths) > RESIDUAL_DEPTH_CAP:
            raise ConfigError(
                f"bound-check chains are capped at {RESIDUAL_DEPTH_CAP} "
                f"layers (the residual bound enumerates 2^depth monomials); "
                f"got {max(self.depths)}")

    @property
    def seeds(self) -> tuple:
        return tuple(self.seed_base + i for i in range(self.repeats))


def spec_from_config(command: str, cfg: Config, *, heavy: bool = False,
                     jobs: int = 1, validate: bool = True) -> ExperimentSpec:
    """Resolve a parsed config file into an :class:`ExperimentSpec`.

    Unknown keys are rejected so typos fail loudly instead of silently
    running defaults.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    spec = ExperimentSpec(
        command=command,
        dataset=cfg.get_str("dataset", "standin:cora"),
        out_dir=cfg.get_str("out_dir", "results"),
        depths=tuple(cfg.get_int_list(
            "depths", list(_DEPTH_DEFAULTS[command]))),
        cs=tuple(cfg.get_optional_float_list(
            "c", list(_C_DEFAULTS.get(command, (None,))))),
        lrs=tuple(cfg.get_float_list(
            "lr", list(_LR_DEFAULTS.get(command, (0.01,))))),
        activations=tuple(cfg.get_str_list(
            "activations", list(_ACT_DEFAULTS.get(command, ("leaky_relu",))),
            choices=ACTIVATIONS)),
        residuals=tuple(_parse_bool_item(cfg, item) for item in cfg.get_str_list(
            "residual", [_fmt(v) for v in _RES_DEFAULTS.get(command, (True,))])),
        repeats=cfg.get_int("repeats", _REPEAT_DEFAULTS.get(command, 1)),
        seed_base=cfg.get_int("seed_base", 0),
        max_epochs=cfg.get_int("max_epochs",
                               _EPOCH_DEFAULTS.get(command, 400)),
        patience=cfg.get_int("patience", 100),
        hidden_dim=cfg.get_int("hidden_dim", 64),
        leaky_slope=cfg.get_float("leaky_slope", 0.8),
        instances=cfg.get_int(
            "instances", 50 if command == "oracle-test" else 100),
        heavy=heavy,
        validate=validate,
        jobs=jobs,
    )
    cfg.ensure_all_used()
    return spec


def _parse_bool_item(cfg: Config, item) -> bool:
    if isinstance(item, bool):
        return item
    word = item.lower()
    if word in ("true", "yes", "on", "1"):
        return True
    if word in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{cfg.source}: key 'residual' expects booleans, "
                      f"got {item!r}")


# ---------------------------------------------------------------------------
# datasets, formatting, manifests


@functools.lru_cache(maxsize=4)
def _load_graph_cached(dataset: str, validate: bool) -> Graph:
    if dataset.startswith("standin:"):
        return standin_graph(dataset.split(":", 1)[1])
    if dataset.startswith("sbm:"):
        return _sbm_from_spec(dataset)
    return load_dataset_dir(dataset, validate=validate)


def _sbm_from_spec(dataset: str) -> Graph:
    allowed = {"seed": int, "blocks": int, "per_block": int,
               "p_in": float, "p_out": float, "feat_dim": int}
    kwargs = {}
    body = dataset.split(":", 1)[1]
    for item in filter(None, (s.strip() for s in body.split(","))):
        if "=" not in item:
            raise ConfigError(f"sbm spec item {item!r} must be key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in allowed:
            raise ConfigError(
                f"unknown sbm key {key!r}; expected one of "
                + ", ".join(sorted(allowed)))
        try:
            kwargs[key] = allowed[key](value)
        except ValueError:
            raise ConfigError(f"sbm key {key!r} expects "
                              f"{allowed[key].__name__}, got {value!r}") from None
    if "seed" not in kwargs:
        raise ConfigError("sbm spec needs at least seed=<int>")
    return connected_sbm(**kwargs)


def load_experiment_graph(spec: ExperimentSpec) -> Graph:
    """Resolve ``spec.dataset``: ``standin:<name>``, ``sbm:<k=v,...>``,
    or a directory holding ``edges/features/labels/masks.txt``."""
    return _load_graph_cached(spec.dataset, spec.validate)


def _fmt(value) -> str:
    """Canonical flat-text rendering used in ids, CSVs, and manifests."""
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


_UNSET = object()


def _cell_id(depth=None, residual=None, activation=None, c=_UNSET,
             lr=None) -> str:
    parts = []
    if depth is not None:
        parts.append(f"d{depth:03d}")
    if residual is not None:
        parts.append("res" if residual else "plain")
    if activation is not None:
        parts.append(activation)
    if c is not _UNSET:
        parts.append("cnone" if c is None else f"c{_fmt(c)}")
    if lr is not None:
        parts.append(f"lr{_fmt(lr)}")
    return "_".join(parts)


def _write_text(path: Path, lines) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _spec_echo(spec: ExperimentSpec) -> list[str]:
    out = []
    for f in fields(spec):
        out.append(f"config.{f.name} = {_fmt(getattr(spec, f.name))}")
    return sorted(out)


def write_manifest(spec: ExperimentSpec) -> Path:
    """Record the resolved config, seeds, and artifact hashes.

    Covers every file under ``out_dir/<command>/``; rerunning the same
    spec on the same backend reproduces the manifest bit for bit.
    """
    out_root = Path(spec.out_dir)
    command_dir = out_root / spec.command
    lines = [
        f"command = {spec.command}",
        f"version = {__version__}",
        f"backend = {BACKEND}",
    ]
    lines.extend(_spec_echo(spec))
    lines.append(f"seeds = {_fmt(spec.seeds)}")
    if command_dir.is_dir():
        for path in sorted(command_dir.rglob("*")):
            if not path.is_file():
                continue
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            rel = path.relative_to(out_root).as_posix()
            lines.append(f"artifact = {rel} sha256:{digest}")
    manifest = out_root / "manifest.txt"
    _write_text(manifest, lines)
    return manifest


def _map_cells(fn, spec: ExperimentSpec, cells: list):
    """Run ``fn(spec, cell)`` over cells, concurrently when jobs > 1."""
    if spec.jobs <= 1 or len(cells) <= 1:
        return [fn(spec, cell) for cell in cells]
    workers = min(spec.jobs, len(cells))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(functools.partial(fn, spec), cells))


def _train_config(spec: ExperimentSpec, depth: int, activation: str,
                  residual: bool, c, lr: float, *, record: str,
                  early_stop: bool = True) -> TrainConfig:
    model = ModelConfig(
        num_layers=depth, hidden_dim=spec.hidden_dim, activation=activation,
        leaky_slope=spec.leaky_slope, residual=residual, lipschitz_c=c,
        seed=spec.seed_base)
    return TrainConfig(model=model, lr=lr, max_epochs=spec.max_epochs,
                       early_stop=early_stop, patience=spec.patience,
                       record_profiles=record)


# ---------------------------------------------------------------------------
# grad-profile


@dataclass(frozen=True)
class ProfileCellResult:
    """Trained-model profile facts for one grid cell."""

    cell_id: str
    depth: int
    activation: str
    residual: bool
    c: object
    lr: float
    slope: object          # float, or None when the fit is impossible
    r_squared: object
    nan_layer_count: int
    gradient_values: tuple
    representation_values: tuple
    test_acc: float
    diverged: bool

    @property
    def input_to_last_ratio(self) -> float:
        """Gradient μ at the input layer over μ at the last layer."""
        first, last = self.gradient_values[0], self.gradient_values[-1]
        if not (math.isfinite(first) and math.isfinite(last)) or last == 0.0:
            return math.inf
        return first / last


def _profile_cell(spec: ExperimentSpec, cell) -> ProfileCellResult:
    depth, activation, residual, c, lr = cell
    cell_id = _cell_id(depth, residual, activation, c, lr)
    graph = load_experiment_graph(spec)
    config = _train_config(spec, depth, activation, residual, c, lr,
                           record="at_best")
    t0 = time.monotonic()
    log = train(graph, config)
    gp = log.gradient_profile_at_best
    rp = log.representation_profile_at_best
    slope = r_squared = None
    fit = fit_decay_or_none(gp)
    if fit is not None:
        slope, r_squared = fit.slope, fit.r_squared

    cell_dir = Path(spec.out_dir) / spec.command / cell_id
    cell_dir.mkdir(parents=True, exist_ok=True)
    log.to_csv(cell_dir / "log.csv")
    gp.to_csv(cell_dir / "profile_gradient.csv")
    rp.to_csv(cell_dir / "profile_representation.csv")
    summary = [
        f"cell = {cell_id}",
        f"depth = {depth}",
        f"activation = {activation}",
        f"residual = {_fmt(residual)}",
        f"c = {_fmt(c)}",
        f"lr = {_fmt(lr)}",
        f"seed = {spec.seed_base}",
        f"slope = {_fmt(slope)}",
        f"r_squared = {_fmt(r_squared)}",
        f"gradient_nan_layers = {len(gp.nan_layers)}",
        f"gradient_mu_input = {_fmt(float(gp.values[0]))}",
        f"gradient_mu_last = {_fmt(float(gp.values[-1]))}",
        log.format_summary(),
    ]
    if log.lipschitz_at_best is not None:
        summary.append(log.lipschitz_at_best.format_summary())
    _write_text(cell_dir / "summary.txt", summary)
    layers = tuple(range(len(gp.values)))
    write_svg(cell_dir / "plot.svg", line_plot(
        [Series("gradient", layers, gp.values),
         Series("representation", layers, rp.values)],
        title=f"similarity by layer ({cell_id})", xlabel="layer",
        ylabel="mu", ylog=True, markers=True))
    print(f"[grad-profile {cell_id}] test={_fmt(log.test_at_best)} "
          f"slope={_fmt(slope)} ({time.monotonic() - t0:.1f}s)", flush=True)
    return ProfileCellResult(
        cell_id=cell_id, depth=depth, activation=activation,
        residual=residual, c=c, lr=lr, slope=slope, r_squared=r_squared,
        nan_layer_count=len(gp.nan_layers),
        gradient_values=tuple(float(v) for v in gp.values),
        representation_values=tuple(float(v) for v in rp.values),
        test_acc=float(log.test_at_best), diverged=log.diverged)


def fit_decay_or_none(profile):
    """:func:`gradflow.fit_decay`, returning None when undefined."""
    try:
        return fit_decay(profile)
    except FitError:
        return None


def run_grad_profile(spec: ExperimentSpec) -> list[ProfileCellResult]:
    """Train each grid cell and record its at-best similarity profiles."""
    load_experiment_graph(spec)  # warm the cache before any fork
    cells = list(itertools.product(spec.depths, spec.activations,
                                   spec.residuals, spec.cs, spec.lrs))
    rows = _map_cells(_profile_cell, spec, cells)
    overlay = [Series(row.cell_id, range(len(row.gradient_values)),
                      row.gradient_values) for row in rows]
    write_svg(Path(spec.out_dir) / spec.command / "profiles.svg", line_plot(
        overlay, title="gradient similarity by layer", xlabel="layer",
        ylabel="mu", ylog=True))
    csv = ["cell,depth,activation,residual,c,lr,slope,r_squared,"
           "nan_layers,gradient_mu_input,gradient_mu_last,test_acc,diverged"]
    for r in rows:
        csv.append(",".join(_fmt(v) for v in (
            r.cell_id, r.depth, r.activation, r.residual, r.c, r.lr,
            r.slope, r.r_squared, r.nan_layer_count,
            float(r.gradient_values[0]), float(r.gradient_values[-1]),
            r.test_acc, r.diverged)))
    _write_text(Path(spec.out_dir) / spec.command / "profiles.csv", csv)
    write_manifest(spec)
    return rows


# ---------------------------------------------------------------------------
# depth-sweep


@dataclass(frozen=True)
class SweepCellResult:
    """Best-learning-rate aggregate for one (depth, c) cell."""

    cell_id: str
    depth: int
    activation: str
    residual: bool
    c: object
    best_lr: float
    lr_mean_vals: tuple
    mean_val: float
    mean_test: float
    std_test: float
    min_test: float
    max_test: float
    diverged_runs: int
    per_seed_test: tuple


def _sweep_cell(spec: ExperimentSpec, cell) -> SweepCellResult:
    depth, activation, residual, c = cell
    cell_id = _cell_id(depth, residual, activation, c)
    graph = load_experiment_graph(spec)
    t0 = time.monotonic()
    best = None
    lr_mean_vals = []
    for lr in spec.lrs:
        config = _train_config(spec, depth, activation, residual, c, lr,
                               record="never")
        logs, agg = run_repeats(graph, config, repeats=spec.repeats,
                                seed_base=spec.seed_base)
        lr_mean_vals.append((lr, agg.mean_val))
        if best is None or agg.mean_val > best[1].mean_val:
            best = (lr, agg, logs)
    best_lr, agg, logs = best

    cell_dir = Path(spec.out_dir) / spec.command / cell_id
    cell_dir.mkdir(parents=True, exist_ok=True)
    for seed, log in zip(agg.seeds, logs):
        log.to_csv(cell_dir / f"log_s{seed}.csv")
    tests = np.asarray(agg.test_accs, dtype=np.float64)
    summary = [
        f"cell = {cell_id}",
        f"depth = {depth}",
        f"activation = {activation}",
        f"residual = {_fmt(residual)}",
        f"c = {_fmt(c)}",
        f"repeats = {spec.repeats}",
        f"seeds = {_fmt(agg.seeds)}",
        f"best_lr = {_fmt(best_lr)}",
    ]
    summary.extend(f"mean_val_at_lr_{_fmt(lr)} = {_fmt(val)}"
                   for lr, val in lr_mean_vals)
    summary.extend([
        f"mean_val = {_fmt(agg.mean_val)}",
        f"mean_test = {_fmt(agg.mean_test)}",
        f"std_test = {_fmt(float(tests.std()))}",
        f"min_test = {_fmt(agg.min_test)}",
        f"max_test = {_fmt(agg.max_test)}",
        f"per_seed_test = {_fmt(agg.test_accs)}",
        f"diverged_runs = {agg.diverged_runs}",
    ])
    _write_text(cell_dir / "summary.txt", summary)
    print(f"[depth-sweep {cell_id}] best_lr={_fmt(best_lr)} "
          f"mean_test={agg.mean_test:.4f} diverged={agg.diverged_runs} "
          f"({time.monotonic() - t0:.1f}s)", flush=True)
    return SweepCellResult(
        cell_id=cell_id, depth=depth, activation=activation,
        residual=residual, c=c, best_lr=best_lr,
        lr_mean_vals=tuple(lr_mean_vals), mean_val=agg.mean_val,
        mean_test=agg.mean_test, std_test=float(tests.std()),
        min_test=agg.min_test, max_test=agg.max_test,
        diverged_runs=agg.diverged_runs, per_seed_test=agg.test_accs)


def run_depth_sweep(spec: ExperimentSpec) -> list[SweepCellResult]:
    """Mean test accuracy per (depth, c) with the best lr from the grid."""
    load_experiment_graph(spec)
    cells = list(itertools.product(spec.depths, spec.activations,
                                   spec.residuals, spec.cs))
    rows = _map_cells(_sweep_cell, spec, cells)
    command_dir = Path(spec.out_dir) / spec.command
    csv = ["depth,c,activation,residual,best_lr,mean_test,std_test,"
           "mean_val,min_test,max_test,diverged_runs"]
    for r in rows:
        csv.append(",".join(_fmt(v) for v in (
            r.depth, r.c, r.activation, r.residual, r.best_lr, r.mean_test,
            r.std_test, r.mean_val, r.min_test, r.max_test,
            r.diverged_runs)))
    _write_text(command_dir / "accuracy_vs_depth.csv", csv)

    series = []
    for act, residual, c in itertools.product(spec.activations,
                                              spec.residuals, spec.cs):
        got = [r for r in rows if (r.activation, r.residual, r.c)
               == (act, residual, c)]
        if not got:
            continue
        label = "no cap" if c is None else f"c={_fmt(c)}"
        if len(spec.activations) > 1:
            label += f" {act}"
        if len(spec.residuals) > 1:
            label += " res" if residual else " plain"
        got.sort(key=lambda r: r.depth)
        series.append(Series(label, [r.depth for r in got],
                             [r.mean_test for r in got]))
    write_svg(command_dir / "accuracy_vs_depth.svg", line_plot(
        series, title="test accuracy by depth", xlabel="layers",
        ylabel="mean test accuracy", xlog=True, markers=True))
    write_manifest(spec)
    return rows


# ---------------------------------------------------------------------------
# train-curves


@dataclass(frozen=True)
class CurveCellResult:
    """Full-length training curve facts for one cell."""

    cell_id: str
    depth: int
    activation: str
    residual: bool
    c: object
    lr: float
    final_train_acc: float
    first_epoch_at_99: object
    best_val_acc: float
    test_at_best: object
    diverged: bool
    train_acc: tuple
    train_loss: tuple


def _curve_cell(spec: ExperimentSpec, cell) -> CurveCellResult:
    depth, activation, residual, c, lr = cell
    cell_id = _cell_id(depth, residual, activation, c, lr)
    graph = load_experiment_graph(spec)
    config = _train_config(spec, depth, activation, residual, c, lr,
                           record="never", early_stop=False)
    t0 = time.monotonic()
    log = train(graph, config)
    cell_dir = Path(spec.out_dir) / spec.command / cell_id
    cell_dir.mkdir(parents=True, exist_ok=True)
    log.to_csv(cell_dir / "log.csv")
    first_99 = log.first_epoch_reaching(0.99)
    final_train = log.train_acc[-1] if log.train_acc else math.nan
    summary = [
        f"cell = {cell_id}",
        f"depth = {depth}",
        f"c = {_fmt(c)}",
        f"lr = {_fmt(lr)}",
        f"first_epoch_at_0.99 = {_fmt(first_99)}",
        log.format_summary(),
    ]
    _write_text(cell_dir / "summary.txt", summary)
    print(f"[train-curves {cell_id}] final_train={_fmt(final_train)} "
          f"first99={_fmt(first_99)} ({time.monotonic() - t0:.1f}s)",
          flush=True)
    return CurveCellResult(
        cell_id=cell_id, depth=depth, activation=activation,
        residual=residual, c=c, lr=lr,
        final_train_acc=float(final_train), first_epoch_at_99=first_99,
        best_val_acc=float(log.best_val_acc), test_at_best=log.test_at_best,
        diverged=log.diverged, train_acc=tuple(log.train_acc),
        train_loss=tuple(log.train_loss))


def run_train_curves(spec: ExperimentSpec) -> list[CurveCellResult]:
    """Fixed-lr full-length training curves, one per (depth, c) cell."""
    load_experiment_graph(spec)
    cells = list(itertools.product(spec.depths, spec.activations,
                                   spec.residuals, spec.cs, spec.lrs))
    rows = _map_cells(_curve_cell, spec, cells)
    command_dir = Path(spec.out_dir) / spec.command
    acc_series = [Series(r.cell_id, range(len(r.train_acc)), r.train_acc)
                  for r in rows]
    write_svg(command_dir / "train_accuracy.svg", line_plot(
        acc_series, title="training accuracy", xlabel="epoch",
        ylabel="train accuracy"))
    loss_series = [Series(r.cell_id, range(len(r.train_loss)), r.train_loss)
                   for r in rows]
    write_svg(command_dir / "train_loss.svg", line_plot(
        loss_series, title="training loss", xlabel="epoch", ylabel="loss",
        ylog=True))
    csv = ["cell,depth,activation,residual,c,lr,final_train_acc,"
           "first_epoch_at_0.99,best_val_acc,test_at_best,diverged"]
    for r in rows:
        csv.append(",".join(_fmt(v) for v in (
            r.cell_id, r.depth, r.activation, r.residual, r.c, r.lr,
            r.final_train_acc, r.first_epoch_at_99, r.best_val_acc,
            r.test_at_best, r.diverged)))
    _write_text(command_dir / "curves.csv", csv)
    write_manifest(spec)
    return rows


# ---------------------------------------------------------------------------
# scatter


@dataclass(frozen=True)
class ScatterRow:
    """One trained model's similarity/accuracy coordinates."""

    cell_id: str
    depth: int
    activation: str
    residual: bool
    c: object
    lr: float
    seed: int
    representation_mu: float   # last layer, at the best epoch
    gradient_mu: float         # input layer, at the best epoch
    test_acc: float
    diverged: bool


def _scatter_cell(spec: ExperimentSpec, cell) -> list[ScatterRow]:
    depth, activation, residual, c, lr = cell
    cell_id = _cell_id(depth, residual, activation, c, lr)
    graph = load_experiment_graph(spec)
    cell_dir = Path(spec.out_dir) / spec.command / cell_id
    cell_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    summary = [f"cell = {cell_id}"]
    t0 = time.monotonic()
    for seed in spec.seeds:
        config = replace(_train_config(spec, depth, activation, residual,
                                       c, lr, record="at_best"), seed=seed)
        log = train(graph, config)
        log.to_csv(cell_dir / f"log_s{seed}.csv")
        gp = log.gradient_profile_at_best
        rp = log.representation_profile_at_best
        gp.to_csv(cell_dir / f"profile_gradient_s{seed}.csv")
        row = ScatterRow(
            cell_id=cell_id, depth=depth, activation=activation,
            residual=residual, c=c, lr=lr, seed=seed,
            representation_mu=float(rp.values[-1]),
            gradient_mu=float(gp.values[0]),
            test_acc=float(log.test_at_best), diverged=log.diverged)
        rows.append(row)
        summary.append(
            f"seed_{seed} = test:{_fmt(row.test_acc)} "
            f"grad_mu:{_fmt(row.gradient_mu)} "
            f"rep_mu:{_fmt(row.representation_mu)} "
            f"diverged:{_fmt(row.diverged)}")
    _write_text(cell_dir / "summary.txt", summary)
    print(f"[scatter {cell_id}] {len(rows)} run(s) "
          f"({time.monotonic() - t0:.1f}s)", flush=True)
    return rows


def run_scatter(spec: ExperimentSpec) -> list[ScatterRow]:
    """Similarity-versus-accuracy study over the whole trained grid."""
    load_experiment_graph(spec)
    cells = list(itertools.product(spec.depths, spec.activations,
                                   spec.residuals, spec.cs, spec.lrs))
    rows = [row for cell_rows in _map_cells(_scatter_cell, spec, cells)
            for row in cell_rows]
    command_dir = Path(spec.out_dir) / spec.command
    csv = ["cell,depth,activation,residual,c,lr,seed,"
           "representation_mu,gradient_mu,test_acc,diverged"]
    for r in rows:
        csv.append(",".join(_fmt(v) for v in (
            r.cell_id, r.depth, r.activation, r.residual, r.c, r.lr, r.seed,
            r.representation_mu, r.gradient_mu, r.test_acc, r.diverged)))
    _write_text(command_dir / "scatter.csv", csv)

    def split(rows_, attr_x, attr_y):
        out = []
        for residual, label in ((False, "plain"), (True, "residual")):
            got = [r for r in rows_ if r.residual is residual]
            if got:
                out.append(Series(label,
                                  [getattr(r, attr_x) for r in got],
                                  [getattr(r, attr_y) for r in got]))
        return out

    write_svg(command_dir / "rep_vs_grad.svg", scatter_plot(
        split(rows, "representation_mu", "gradient_mu"),
        title="representation vs gradient similarity",
        xlabel="representation mu (last layer)",
        ylabel="gradient mu (input layer)", xlog=True, ylog=True))
    write_svg(command_dir / "grad_vs_acc.svg", scatter_plot(
        split(rows, "test_acc", "gradient_mu"),
        title="gradient similarity vs accuracy", xlabel="test accuracy",
        ylabel="gradient mu (input layer)", ylog=True))
    write_svg(command_dir / "rep_vs_acc.svg", scatter_plot(
        split(rows, "test_acc", "representation_mu"),
        title="representation similarity vs accuracy",
        xlabel="test accuracy", ylabel="representation mu (last layer)",
        ylog=True))
    write_manifest(spec)
    return rows


# ---------------------------------------------------------------------------
# randomized verification suites (shared by the CLI and the test suite)


def run_fd_check(depths=(2, 4), activations=ACTIVATIONS,
                 residuals=(False, True), seed_base: int = 0,
                 h: float = 1e-5, hidden_dim: int = 5):
    """Compare every analytic parameter gradient to central differences.

    Trains nothing: one forward/backward at initialization per config on
    a small block-model graph, then perturbs every parameter entry.
    Returns ``(max_rel_err, rows)`` with one row per configuration; the
    relative error uses ``|fd - an| / max(1e-8, |fd| + |an|)``.
    """
    graph = connected_sbm(seed_base + 17)
    num_classes = int(graph.labels.max()) + 1

    def loss_of(model: Model) -> float:
        tape = forward(model, graph)
        loss, _ = masked_cross_entropy(tape.logits, graph.labels,
                                       graph.train_mask)
        return loss

    rows = []
    worst = 0.0
    combos = itertools.product(depths, activations, residuals)
    for i, (depth, activation, residual) in enumerate(combos):
        config = ModelConfig(num_layers=depth, hidden_dim=hidden_dim,
                             activation=activation, leaky_slope=0.8,
                             residual=residual, seed=seed_base + i)
        model = Model.init(config, graph.feature_dim, num_classes)
        tape = forward(model, graph)
        _, grad_logits = masked_cross_entropy(tape.logits, graph.labels,
                                              graph.train_mask)
        backward(model, graph, tape, grad_logits)
        analytic = [tape.input_proj_grad, *tape.w_grads, tape.readout_grad]
        params = [model.input_proj, *model.layers, model.readout]
        cell_worst = 0.0
        for param, grad in zip(params, analytic):
            for idx in np.ndindex(param.shape):
                keep = param[idx]
                param[idx] = keep + h
                up = loss_of(model)
                param[idx] = keep - h
                down = loss_of(model)
                param[idx] = keep
                fd = (up - down) / (2.0 * h)
                an = float(grad[idx])
                err = abs(fd - an) / max(1e-8, abs(fd) + abs(an))
                cell_worst = max(cell_worst, err)
        rows.append({"depth": depth, "activation": activation,
                     "residual": residual, "max_rel_err": cell_worst})
        worst = max(worst, cell_worst)
    return worst, rows


def _linear_instance(i: int, seed_base: int, max_depth: int, residual: bool):
    rng = np.random.default_rng(900_001 + 71 * seed_base + i)
    depth = int(rng.integers(1, max_depth + 1))
    hidden = int(rng.integers(3, 8))
    graph = connected_sbm(seed_base + i,
                          per_block=int(rng.integers(4, 11)),
                          feat_dim=int(rng.integers(2, 6)))
    config = ModelConfig(num_layers=depth, hidden_dim=hidden,
                         activation="identity", residual=residual,
                         seed=seed_base + i)
    model = Model.init(config, graph.feature_dim,
                       int(graph.labels.max()) + 1)
    tape = forward(model, graph)
    _, grad_logits = masked_cross_entropy(tape.logits, graph.labels,
                                          graph.train_mask)
    backward(model, graph, tape, grad_logits)
    return depth, graph, model, tape


def run_linear_equivalence(instances: int = 50, max_depth: int = 8,
                           seed_base: int = 0):
    """Closed-form vs recorded gradients for plain identity stacks.

    Returns ``(max_input_err, max_weight_err)`` over all layers of all
    instances, as maximum absolute elementwise differences.
    """
    max_input = max_weight = 0.0
    for i in range(instances):
        depth, graph, model, tape = _linear_instance(
            i, seed_base, max_depth, residual=False)
        weights = list(model.layers)
        grad_last = tape.x_grads[depth]
        for layer in range(depth + 1):
            closed = linear_input_gradient(layer, weights, graph.norm_adj,
                                           grad_last)
            max_input = max(max_input, float(
                np.abs(closed - tape.x_grads[layer]).max()))
        for layer in range(depth):
            closed = linear_weight_gradient(layer, weights, graph.norm_adj,
                                            tape.xs[layer], grad_last)
            max_weight = max(max_weight, float(
                np.abs(closed - tape.w_grads[layer]).max()))
    return max_input, max_weight


def run_residual_equivalence(instances: int = 50, max_gap: int = 10,
                             seed_base: int = 0):
    """Path-sum vs recorded gradients for residual identity stacks.

    Returns ``(max_err, monomial_mismatches)``; the second entry counts
    layers whose enumerated monomial total differed from ``2^(L - l)``.
    """
    max_err = 0.0
    mismatches = 0
    for i in range(instances):
        depth, graph, model, tape = _linear_instance(
            i, seed_base, max_gap, residual=True)
        weights = list(model.layers)
        grad_last = tape.x_grads[depth]
        for layer in range(depth + 1):
            closed, stats = residual_input_gradient(
                layer, weights, graph.norm_adj, grad_last,
                return_stats=True)
            max_err = max(max_err, float(
                np.abs(closed - tape.x_grads[layer]).max()))
            if stats.monomials != 2 ** (depth - layer):
                mismatches += 1
    return max_err, mismatches


def run_bound_suite(instances: int = 100, seed_base: int = 0,
                    max_depth: int = 6):
    """Evaluate both similarity bounds on random linear instances.

    Each instance draws a connected non-bipartite block-model graph,
    random square weights, and a random last-layer gradient, then checks
    the plain bound and the residual bound at every layer.  Returns a
    list of ``(instance, kind, num_layers, BoundReport)`` tuples.
    """
    results = []
    for i in range(instances):
        rng = np.random.default_rng(700_001 + 131 * seed_base + i)
        depth = int(rng.integers(1, max_depth + 1))
        graph = connected_sbm(seed_base + i,
                              blocks=int(rng.integers(2, 4)),
                              per_block=int(rng.integers(4, 9)),
                              feat_dim=3)
        dim = int(rng.integers(2, 6))
        weights = [rng.normal(0.0, 1.0 / math.sqrt(dim), size=(dim, dim))
                   for _ in range(depth)]
        grad_last = rng.normal(size=(graph.num_nodes, dim))
        for layer in range(depth + 1):
            results.append((i, "smoothing", depth, smoothing_bound(
                layer, weights, graph.norm_adj, grad_last)))
            results.append((i, "expansion", depth, expansion_bound(
                layer, weights, graph.norm_adj, grad_last)))
    return results


# ---------------------------------------------------------------------------
# bound-check / oracle-test commands


@dataclass(frozen=True)
class BoundCheckResult:
    rows: tuple
    checks: int
    violations: int


def run_bound_check(spec: ExperimentSpec) -> BoundCheckResult:
    """Randomized bound suite with CSV artifacts; violations raise."""
    results = run_bound_suite(instances=spec.instances,
                              seed_base=spec.seed_base,
                              max_depth=max(spec.depths))
    command_dir = Path(spec.out_dir) / spec.command
    csv = ["instance,kind,num_layers,layer,lhs,rhs,max_w_spectral,satisfied"]
    violations = 0
    for instance, kind, depth, report in results:
        if not report.satisfied:
            violations += 1
        csv.append(",".join(_fmt(v) for v in (
            instance, kind, depth, report.layer, report.lhs, report.rhs,
            report.max_w_spectral, report.satisfied)))
    _write_text(command_dir / "bounds.csv", csv)
    ratios = [r.lhs / r.rhs for _, _, _, r in results if r.rhs > 0.0]
    summary = [
        f"instances = {spec.instances}",
        f"checks = {len(results)}",
        f"violations = {violations}",
        f"max_lhs_over_rhs = {_fmt(max(ratios) if ratios else None)}",
    ]
    _write_text(command_dir / "summary.txt", summary)
    write_manifest(spec)
    out = BoundCheckResult(rows=tuple(results), checks=len(results),
                           violations=violations)
    if violations:
        raise BoundViolationError(
            f"{violations} of {len(results)} bound checks failed; see "
            f"{command_dir / 'bounds.csv'}")
    return out


@dataclass(frozen=True)
class OracleCheckRow:
    name: str
    instances: int
    max_error: float
    tolerance: float
    passed: bool


def run_oracle_test(spec: ExperimentSpec) -> list[OracleCheckRow]:
    """Gradient-correctness suite with a CSV report; failures raise."""
    rows = []

    fd_worst, fd_rows = run_fd_check(seed_base=spec.seed_base)
    rows.append(OracleCheckRow("finite_difference", len(fd_rows), fd_worst,
                               1e-4, fd_worst <= 1e-4))

    max_in, max_w = run_linear_equivalence(instances=spec.instances,
                                           seed_base=spec.seed_base)
    rows.append(OracleCheckRow("linear_input_gradient", spec.instances,
                               max_in, 1e-10, max_in <= 1e-10))
    rows.append(OracleCheckRow("linear_weight_gradient", spec.instances,
                               max_w, 1e-10, max_w <= 1e-10))

    max_res, mismatches = run_residual_equivalence(
        instances=spec.instances, seed_base=spec.seed_base)
    rows.append(OracleCheckRow("residual_input_gradient", spec.instances,
                               max_res, 1e-8, max_res <= 1e-8))
    rows.append(OracleCheckRow("residual_monomial_count", spec.instances,
                               float(mismatches), 0.0, mismatches == 0))

    guard_ok = False
    try:
        residual_input_gradient(
            0, [np.eye(2)] * (RESIDUAL_DEPTH_CAP + 1),
            connected_sbm(spec.seed_base).norm_adj, np.zeros((20, 2)))
    except DepthCapError:
        guard_ok = True
    rows.append(OracleCheckRow("depth_cap_guard", 1,
                               0.0 if guard_ok else 1.0, 0.0, guard_ok))

    command_dir = Path(spec.out_dir) / spec.command
    csv = ["check,instances,max_error,tolerance,passed"]
    for r in rows:
        csv.append(",".join(_fmt(v) for v in (
            r.name, r.instances, r.max_error, r.tolerance, r.passed)))
    _write_text(command_dir / "oracle_report.csv", csv)
    write_manifest(spec)
    failed = [r.name for r in rows if not r.passed]
    if failed:
        raise BoundViolationError(
            "oracle checks failed: " + ", ".join(failed)
            + f"; see {command_dir / 'oracle_report.csv'}")
    return rows


# ---------------------------------------------------------------------------


_RUNNERS = {
    "grad-profile": run_grad_profile,
    "depth-sweep": run_depth_sweep,
    "train-curves": run_train_curves,
    "scatter": run_scatter,
    "bound-check": run_bound_check,
    "oracle-test": run_oracle_test,
}


def run_experiment(spec: ExperimentSpec):
    """Dispatch a spec to its command runner."""
    return _RUNNERS[spec.command](spec)

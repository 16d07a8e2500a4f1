"""Graph convolution stack with an explicit, inspectable backward pass.

Architecture (all float64):

* input projection  ``X(0) = features @ W_in``            (linear)
* graph layers      ``X(l+1) = act(A X(l) W(l)) [+ X(l)]``
* readout           ``logits = X(L) @ W_out``             (linear)

``A`` is the symmetrically normalized adjacency with self-loops; the
optional ``+ X(l)`` term is the residual variant.  The forward pass
records every intermediate on a Tape, and ``backward`` augments the same
Tape with the loss gradient at every layer, computed by hand so each
quantity the analysis needs is a concrete array rather than an autograd
internal.  All products go through the deterministic kernel backend.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erf

from .errors import ForwardDivergenceError, ParseError, ShapeError
from .graphio import Graph
from .linalg import matmul, spmm, transpose

__all__ = [
    "ACTIVATIONS",
    "ModelConfig",
    "Model",
    "Tape",
    "forward",
    "backward",
    "masked_cross_entropy",
    "evaluate",
    "save_model",
    "load_model",
]

ACTIVATIONS = ("identity", "relu", "leaky_relu", "gelu")

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _activate(z: np.ndarray, kind: str, slope: float) -> np.ndarray:
    if kind == "identity":
        return z.copy()
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "leaky_relu":
        return np.where(z > 0.0, z, slope * z)
    if kind == "gelu":
        return 0.5 * z * (1.0 + erf(z * _INV_SQRT2))
    raise ValueError(f"unknown activation {kind!r}")


def _activation_grad(z: np.ndarray, kind: str, slope: float) -> np.ndarray:
    """Derivative of the activation at ``z`` (at 0: relu -> 0, leaky -> slope)."""
    if kind == "identity":
        return np.ones_like(z)
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "leaky_relu":
        return np.where(z > 0.0, 1.0, slope)
    if kind == "gelu":
        cdf = 0.5 * (1.0 + erf(z * _INV_SQRT2))
        pdf = _INV_SQRT2PI * np.exp(-0.5 * z * z)
        return cdf + z * pdf
    raise ValueError(f"unknown activation {kind!r}")


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters that define a model's architecture.

    ``lipschitz_c`` declares the per-layer Frobenius norm target for the
    hidden weights (None = uncontrolled); it is enforced by
    ``lipschitz.apply_to_model``, which the training harness calls at
    initialization and after every optimizer step.
    """

    num_layers: int
    hidden_dim: int = 64
    activation: str = "leaky_relu"
    leaky_slope: float = 0.8
    residual: bool = False
    lipschitz_c: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be at least 1")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be at least 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(
                f"activation must be one of {ACTIVATIONS}, "
                f"got {self.activation!r}")
        if not (0.0 < self.leaky_slope <= 1.0):
            raise ValueError("leaky_slope must lie in (0, 1]")
        if self.lipschitz_c is not None and not self.lipschitz_c > 0.0:
            raise ValueError("lipschitz_c must be positive or None")


@dataclass
class Model:
    """Weights of one network: input projection, hidden stack, readout."""

    config: ModelConfig
    input_proj: np.ndarray
    layers: list[np.ndarray]
    readout: np.ndarray

    @classmethod
    def init(cls, config: ModelConfig, in_dim: int,
             num_classes: int) -> "Model":
        """Glorot-uniform initialization with a fixed draw order.

        Draws input projection, then hidden layers 0..L-1, then readout
        from ``default_rng(config.seed)``, so a given (config, dims)
        pair always yields bit-identical weights.
        """
        if in_dim < 1 or num_classes < 1:
            raise ValueError("in_dim and num_classes must be positive")
        rng = np.random.default_rng(config.seed)

        def glorot(fan_in: int, fan_out: int) -> np.ndarray:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        h = config.hidden_dim
        return cls(
            config=config,
            input_proj=glorot(in_dim, h),
            layers=[glorot(h, h) for _ in range(config.num_layers)],
            readout=glorot(h, num_classes),
        )

    @property
    def in_dim(self) -> int:
        return self.input_proj.shape[0]

    @property
    def num_classes(self) -> int:
        return self.readout.shape[1]

    def copy(self) -> "Model":
        """Deep copy of all weights (config is shared, it is frozen)."""
        return Model(config=self.config,
                     input_proj=self.input_proj.copy(),
                     layers=[w.copy() for w in self.layers],
                     readout=self.readout.copy())


@dataclass
class Tape:
    """Every intermediate of one forward pass, then of its backward pass.

    Forward fields (always set):

    * ``xs[l]``  -- layer outputs ``X(l)``, ``l = 0..L``;
    * ``zs[l]``  -- pre-activations ``A X(l) W(l)``, ``l = 0..L-1``;
    * ``ax[l]``  -- propagated inputs ``A X(l)``, ``l = 0..L-1``;
    * ``logits``.

    Backward fields (None until ``backward`` runs):

    * ``x_grads[l]``        -- loss gradient at ``X(l)``, ``l = 0..L``;
    * ``w_grads[l]``        -- loss gradient at hidden weight ``W(l)``;
    * ``input_proj_grad``, ``readout_grad``, ``grad_logits``.

    Non-finite values arising during backward are kept as data (the
    diverged layers are visible in profiles) rather than raised.
    """

    xs: list[np.ndarray]
    zs: list[np.ndarray]
    ax: list[np.ndarray]
    logits: np.ndarray
    x_grads: list[np.ndarray] | None = field(default=None)
    w_grads: list[np.ndarray] | None = field(default=None)
    input_proj_grad: np.ndarray | None = field(default=None)
    readout_grad: np.ndarray | None = field(default=None)
    grad_logits: np.ndarray | None = field(default=None)

    @property
    def num_layers(self) -> int:
        return len(self.xs) - 1


def forward(model: Model, graph: Graph) -> Tape:
    """Run the network over the whole graph, recording a Tape.

    Raises ForwardDivergenceError as soon as any stage produces a
    non-finite value; the error's ``layer`` is the producing stage
    (-1 input projection, ``0..L-1`` graph layers, ``L`` readout).
    """
    cfg = model.config
    if graph.feature_dim != model.in_dim:
        raise ShapeError(
            f"graph features have dimension {graph.feature_dim}, model "
            f"expects {model.in_dim}")
    adj = graph.norm_adj

    def check(stage: int, what: str, arr: np.ndarray):
        if not np.isfinite(arr).all():
            raise ForwardDivergenceError(
                stage, f"forward pass diverged at {what}: "
                "non-finite values produced")

    x = matmul(graph.features, model.input_proj)
    check(-1, "the input projection", x)
    xs = [x]
    zs = []
    ax = []
    for i, w in enumerate(model.layers):
        propagated = spmm(adj, x)
        z = matmul(propagated, w)
        out = _activate(z, cfg.activation, cfg.leaky_slope)
        if cfg.residual:
            out = out + x
        check(i, f"graph layer {i}", out)
        ax.append(propagated)
        zs.append(z)
        xs.append(out)
        x = out
    logits = matmul(x, model.readout)
    check(cfg.num_layers, "the readout", logits)
    return Tape(xs=xs, zs=zs, ax=ax, logits=logits)


def masked_cross_entropy(logits: np.ndarray, labels: np.ndarray,
                         mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over masked nodes, and its logits gradient.

    Uses the shifted log-sum-exp so finite logits never overflow.  The
    returned gradient matches ``logits`` in shape and is exactly zero on
    unmasked rows.  Uniform logits give loss ``ln(num_classes)``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be 2-D, got shape {logits.shape}")
    n, k = logits.shape
    if labels.shape != (n,) or mask.shape != (n,):
        raise ShapeError("labels and mask must have one entry per row")
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("mask selects no nodes")
    sel_labels = labels[idx]
    if sel_labels.min() < 0 or sel_labels.max() >= k:
        raise ValueError(
            f"masked labels must lie in [0, {k}), got range "
            f"[{sel_labels.min()}, {sel_labels.max()}]")
    sub = logits[idx]
    shifted = sub - sub.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    log_probs = shifted - lse
    m = idx.size
    rows = np.arange(m)
    loss = float(-np.sum(log_probs[rows, sel_labels]) / m)
    g = np.exp(log_probs)
    g[rows, sel_labels] -= 1.0
    g /= m
    grad = np.zeros_like(logits)
    grad[idx] = g
    return loss, grad


def backward(model: Model, graph: Graph, tape: Tape,
             grad_logits: np.ndarray) -> Tape:
    """Backpropagate ``grad_logits`` through the tape, in place.

    Populates ``x_grads``, ``w_grads``, ``input_proj_grad`` and
    ``readout_grad`` on ``tape`` and returns it.  The recurrence, for
    ``l = L-1 .. 0`` with ``G = dLoss/dX(l+1)``:

        G_pre        = G * act'(Z(l))              (elementwise)
        dLoss/dW(l)  = (A X(l))^T  G_pre
        dLoss/dX(l)  = A^T G_pre W(l)^T  [+ G if residual]

    Non-finite values are propagated, not raised: a diverged backward
    pass stays inspectable layer by layer.
    """
    cfg = model.config
    grad_logits = np.ascontiguousarray(grad_logits, dtype=np.float64)
    if grad_logits.shape != tape.logits.shape:
        raise ShapeError(
            f"grad_logits shape {grad_logits.shape} does not match "
            f"logits shape {tape.logits.shape}")
    adj_t = graph.adj_t
    num_layers = tape.num_layers

    tape.grad_logits = grad_logits
    tape.readout_grad = matmul(transpose(tape.xs[-1]), grad_logits)
    x_grads: list[np.ndarray | None] = [None] * (num_layers + 1)
    w_grads: list[np.ndarray | None] = [None] * num_layers
    x_grads[num_layers] = matmul(grad_logits, transpose(model.readout))
    for i in range(num_layers - 1, -1, -1):
        g_pre = x_grads[i + 1] * _activation_grad(
            tape.zs[i], cfg.activation, cfg.leaky_slope)
        w_grads[i] = matmul(transpose(tape.ax[i]), g_pre)
        g_x = matmul(spmm(adj_t, g_pre), transpose(model.layers[i]))
        if cfg.residual:
            g_x = g_x + x_grads[i + 1]
        x_grads[i] = g_x
    tape.input_proj_grad = matmul(graph.features_t, x_grads[0])
    tape.x_grads = x_grads
    tape.w_grads = w_grads
    return tape


def evaluate(logits: np.ndarray, labels: np.ndarray,
             mask: np.ndarray) -> float:
    """Accuracy of argmax predictions over the masked nodes.

    Ties in a row of logits resolve to the lowest class index, so the
    result is deterministic.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("mask selects no nodes")
    preds = np.argmax(logits[idx], axis=1)
    return float(np.mean(preds == labels[idx]))


_MAGIC = b"GFLWMODL"
_FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sI")
_CONFIG = struct.Struct("<IIBdBdqII")
_ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}


def save_model(model: Model, path) -> None:
    """Write a model checkpoint (flat binary, little-endian float64)."""
    cfg = model.config
    c = -1.0 if cfg.lipschitz_c is None else float(cfg.lipschitz_c)
    blob = bytearray()
    blob += _HEADER.pack(_MAGIC, _FORMAT_VERSION)
    blob += _CONFIG.pack(cfg.num_layers, cfg.hidden_dim,
                         _ACT_CODES[cfg.activation], cfg.leaky_slope,
                         int(cfg.residual), c, cfg.seed,
                         model.in_dim, model.num_classes)
    for arr in [model.input_proj, *model.layers, model.readout]:
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_model(path) -> Model:
    """Read a checkpoint written by ``save_model``."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size + _CONFIG.size:
        raise ParseError(str(path), 0, "checkpoint file truncated")
    magic, version = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise ParseError(str(path), 0, "not a model checkpoint (bad magic)")
    if version != _FORMAT_VERSION:
        raise ParseError(str(path), 0,
                         f"unsupported checkpoint version {version}")
    (num_layers, hidden, act_code, slope, residual, c, seed,
     in_dim, num_classes) = _CONFIG.unpack_from(blob, _HEADER.size)
    if act_code >= len(ACTIVATIONS):
        raise ParseError(str(path), 0,
                         f"unknown activation code {act_code}")
    config = ModelConfig(
        num_layers=num_layers, hidden_dim=hidden,
        activation=ACTIVATIONS[act_code], leaky_slope=slope,
        residual=bool(residual), lipschitz_c=None if c < 0 else c,
        seed=seed)
    shapes = [(in_dim, hidden)]
    shapes += [(hidden, hidden)] * num_layers
    shapes += [(hidden, num_classes)]
    need = _HEADER.size + _CONFIG.size + 8 * sum(r * c2 for r, c2 in shapes)
    if len(blob) != need:
        raise ParseError(str(path), 0,
                         f"checkpoint has {len(blob)} bytes, expected {need}")
    offset = _HEADER.size + _CONFIG.size
    arrays = []
    for r, c2 in shapes:
        count = r * c2
        flat = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        arrays.append(flat.astype(np.float64).reshape(r, c2))
        offset += 8 * count
    return Model(config=config, input_proj=arrays[0],
                 layers=arrays[1:-1], readout=arrays[-1])

"""Frobenius-norm control of hidden layer weights.

Rescaling every hidden weight to a fixed Frobenius norm ``c`` caps its
spectral norm (``||W||_2 <= ||W||_F``), and with it the factor by which
one layer can amplify gradient deviation during backpropagation.  The
per-layer amplification of deviation-from-mean is at most
``q * ||W||_2`` where ``q`` is the centered propagation norm of the
graph at one step, so driving ``q * c`` below 1 pushes a deep stack into
the smoothing regime, and letting it exceed 1 permits expansion.

The input projection and the readout are never rescaled: they set the
representation and logit scales, and only the repeated hidden layers
compound across depth.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphio import Graph
from .linalg import centered_propagation_norm, frobenius_norm, spectral_norm
from .model import Model

__all__ = [
    "frobenius_normalize",
    "apply_to_model",
    "LipschitzReport",
    "diagnose",
]


def frobenius_normalize(w: np.ndarray, c: float) -> np.ndarray:
    """Return ``w`` rescaled to Frobenius norm exactly ``c``.

    A zero matrix cannot be rescaled; it is returned unchanged with a
    warning (a zero layer contributes no gradient at all, so leaving it
    alone is the conservative choice).
    """
    if not c > 0.0:
        raise ValueError(f"target norm must be positive, got {c}")
    w = np.asarray(w, dtype=np.float64)
    norm = frobenius_norm(w)
    if norm == 0.0:
        warnings.warn(
            "cannot rescale an all-zero weight matrix; leaving it "
            "unchanged", UserWarning, stacklevel=2)
        return w.copy()
    return w * (c / norm)


def apply_to_model(model: Model, c: float | None = None) -> None:
    """Rescale every hidden layer of ``model`` in place.

    ``c`` defaults to ``model.config.lipschitz_c``; when both are None
    the model is left untouched (control inactive).  The input
    projection and readout are exempt by design.
    """
    target = model.config.lipschitz_c if c is None else c
    if target is None:
        return
    for i, w in enumerate(model.layers):
        model.layers[i] = frobenius_normalize(w, target)


@dataclass(frozen=True)
class LipschitzReport:
    """Norm diagnostics of one model on one graph.

    ``q_hat`` is the graph's one-step centered propagation norm;
    ``product_bound = q_hat * max(spectral_norms)`` bounds the per-layer
    gradient-deviation amplification of the plain stack, and ``regime``
    says which side of 1 it falls on (``smoothing`` vs ``expansion``).
    """

    frobenius_norms: tuple[float, ...]
    spectral_norms: tuple[float, ...]
    c: float | None
    q_hat: float
    product_bound: float
    regime: str

    def to_csv(self, path) -> None:
        """Per-hidden-layer norms as ``layer,frobenius_norm,spectral_norm``."""
        lines = ["layer,frobenius_norm,spectral_norm"]
        for i, (f, s) in enumerate(zip(self.frobenius_norms,
                                       self.spectral_norms)):
            lines.append(f"{i},{f!r},{s!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def format_summary(self) -> str:
        """Flat ``key = value`` lines for the scalar fields."""
        c = "none" if self.c is None else repr(self.c)
        return "\n".join([
            f"c = {c}",
            f"q_hat = {self.q_hat!r}",
            f"max_spectral = {max(self.spectral_norms)!r}",
            f"product_bound = {self.product_bound!r}",
            f"regime = {self.regime}",
        ])


def diagnose(model: Model, graph: Graph) -> LipschitzReport:
    """Measure the norms that govern smoothing vs expansion.

    Computes the Frobenius and spectral norm of every hidden layer, the
    graph's one-step centered propagation norm, and their product bound;
    ``regime`` is ``smoothing`` when the product is below 1 and
    ``expansion`` otherwise.  The regime describes the linear,
    non-residual stack; relu-family activations only tighten it (their
    derivative factors never exceed 1), while residual connections add
    an identity path that escapes it.
    """
    fro = tuple(frobenius_norm(w) for w in model.layers)
    spec = tuple(spectral_norm(w) for w in model.layers)
    q_hat = centered_propagation_norm(graph.norm_adj, 1)
    product = q_hat * max(spec)
    return LipschitzReport(
        frobenius_norms=fro,
        spectral_norms=spec,
        c=model.config.lipschitz_c,
        q_hat=q_hat,
        product_bound=product,
        regime="smoothing" if product < 1.0 else "expansion",
    )

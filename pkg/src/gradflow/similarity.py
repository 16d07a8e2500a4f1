"""Row-similarity measure and per-layer profiles.

The similarity of a node-feature matrix is the Frobenius distance from
its rows to their common mean row:

    mu(X) = || X - ones * mean_row(X) ||_F

``mu(X) = 0`` exactly when all rows are identical (fully smoothed);
large values mean the rows are spread out.  Applied layer by layer to a
forward/backward tape this yields a profile showing where a deep network
smooths (or explodes) its representations and gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FitError, ParseError, StateError
from .linalg import frobenius_norm, mean_center

__all__ = [
    "node_similarity",
    "SimilarityProfile",
    "similarity_profile",
    "DecayFit",
    "fit_decay",
]

PROFILE_KINDS = ("representation", "gradient")


def node_similarity(x) -> float:
    """Frobenius distance of the rows of ``x`` from their mean row.

    Zero exactly when all rows coincide.  Non-finite entries in ``x``
    propagate to a ``nan`` result rather than raising, so diverged
    layers remain representable in profiles.
    """
    return frobenius_norm(mean_center(np.asarray(x, dtype=np.float64)))


@dataclass(frozen=True)
class SimilarityProfile:
    """Per-layer similarity values for one forward (or backward) pass.

    ``values[l]`` is the similarity at layer ``l`` for ``l = 0..L``;
    ``nan_layers`` lists the layers whose value is non-finite (kept in
    ``values`` as ``nan``).
    """

    kind: str
    values: tuple[float, ...]
    nan_layers: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(
                f"kind must be one of {PROFILE_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "values", tuple(float(v)
                                                 for v in self.values))
        object.__setattr__(self, "nan_layers", tuple(
            i for i, v in enumerate(self.values) if not math.isfinite(v)))

    @property
    def num_layers(self) -> int:
        """Number of propagation layers L (profiles have L+1 entries)."""
        return len(self.values) - 1

    def to_csv(self, path) -> None:
        """Write ``layer,value,is_nan`` rows (non-finite kept as nan)."""
        lines = ["layer,value,is_nan"]
        for layer, value in enumerate(self.values):
            bad = not math.isfinite(value)
            lines.append(f"{layer},{'nan' if bad else repr(value)},"
                         f"{'true' if bad else 'false'}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path, kind: str) -> "SimilarityProfile":
        """Read a profile written by ``to_csv``."""
        path = Path(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != "layer,value,is_nan":
            raise ParseError(str(path), 1,
                             "expected header 'layer,value,is_nan'")
        values = []
        for i, line in enumerate(lines[1:], start=2):
            parts = line.split(",")
            if len(parts) != 3:
                raise ParseError(str(path), i, "expected 3 columns")
            try:
                layer = int(parts[0])
                value = float(parts[1])
            except ValueError:
                raise ParseError(str(path), i,
                                 "malformed layer or value") from None
            if layer != len(values):
                raise ParseError(str(path), i,
                                 f"expected layer {len(values)}, got {layer}")
            values.append(value)
        return cls(kind=kind, values=tuple(values))


def similarity_profile(tape, kind: str) -> SimilarityProfile:
    """Similarity of every layer of a tape, for the requested ``kind``.

    ``representation`` profiles use the post-activation layer outputs
    ``X(0)..X(L)``; ``gradient`` profiles use the loss gradients with
    respect to those outputs and therefore require that the backward
    pass has populated the tape (StateError otherwise).
    """
    if kind == "representation":
        mats = tape.xs
    elif kind == "gradient":
        if tape.x_grads is None:
            raise StateError(
                "gradient profile requested before the backward pass; "
                "run backward(tape, ...) first")
        mats = tape.x_grads
    else:
        raise ValueError(
            f"kind must be one of {PROFILE_KINDS}, got {kind!r}")
    return SimilarityProfile(kind=kind,
                             values=tuple(node_similarity(m) for m in mats))


@dataclass(frozen=True)
class DecayFit:
    """Least-squares line through a profile's log-values.

    The regressor is the distance from the last layer (``L - l``), so a
    profile that shrinks geometrically toward the input by a factor
    ``q`` per layer has ``slope = ln(q) < 0``; growth toward the input
    has positive slope.
    """

    slope: float
    intercept: float
    r_squared: float
    layers_used: tuple[int, ...]


def fit_decay(profile) -> DecayFit:
    """Fit ``log(values[l]) ~ slope * (L - l) + intercept``.

    Only layers with finite, strictly positive values participate; at
    least three are required (FitError otherwise, in particular when
    every value is zero or non-finite).
    """
    values = profile.values if isinstance(profile, SimilarityProfile) \
        else tuple(float(v) for v in profile)
    last = len(values) - 1
    usable = [i for i, v in enumerate(values)
              if math.isfinite(v) and v > 0.0]
    if len(usable) < 3:
        raise FitError(
            f"need at least 3 finite, positive values to fit a decay "
            f"line, got {len(usable)}")
    x = np.array([float(last - i) for i in usable])
    y = np.array([math.log(values[i]) for i in usable])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid * resid))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return DecayFit(slope=float(slope), intercept=float(intercept),
                    r_squared=r_squared, layers_used=tuple(usable))

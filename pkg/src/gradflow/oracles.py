"""Closed-form gradients of linear stacks, and similarity bounds.

With the identity activation the backward recurrence of the model
unrolls into explicit matrix products.  For a stack of ``L`` hidden
layers with propagation operator ``A``, last-layer gradient
``G = dLoss/dX(L)`` and weights ``W(0..L-1)``:

* plain stack:     dLoss/dX(l) = (A^T)^(L-l) G  W(L-1)^T ... W(l)^T
* residual stack:  dLoss/dX(l) = sum over subsets S of {l..L-1} of
                   (A^T)^|S| G  W(s_max)^T ... W(s_min)^T
                   (2^(L-l) monomials, one per subset)

These evaluations are independent of the model's backward pass and act
as oracles for it.  From them follow two always-true norm bounds on the
row-similarity of the gradient at layer ``l`` (k = L - l, ``cpn(p)`` the
centered propagation norm at p steps, ``s`` the largest weight spectral
norm over the chain):

* plain stack:     mu(dX(l)) <= ||G||_F * cpn(k) * s^k
* residual stack:  mu(dX(l)) <= mu(G)
                   + sum_p C(k, p) * ||G||_F * cpn(p) * s^p

The residual report also carries a closed-form diagnostic obtained by
fitting a geometric envelope ``cpn(p) <= coeff * q^p`` to the computed
norms, which collapses the sum to
``mu(G) + coeff * ||G||_F * ((1 + q s)^k - 1)``; being fitted rather
than proven, it is informational and never decides ``satisfied``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DepthCapError, ShapeError
from .graphio import edge_set_properties
from .linalg import (
    CsrMatrix,
    centered_propagation_norm,
    frobenius_norm,
    matmul,
    spectral_norm,
    spmm,
    transpose,
)
from .similarity import node_similarity

__all__ = [
    "PathStats",
    "BoundReport",
    "linear_input_gradient",
    "linear_weight_gradient",
    "residual_input_gradient",
    "smoothing_bound",
    "expansion_bound",
    "bound_reports_to_csv",
    "RESIDUAL_DEPTH_CAP",
]

# Beyond this many chained layers the residual expansion (2^k monomials)
# is refused rather than silently taking hours.
RESIDUAL_DEPTH_CAP = 12


@dataclass
class PathStats:
    """Bookkeeping for the residual expansion: how many monomials summed."""

    monomials: int = 0


@dataclass(frozen=True)
class BoundReport:
    """One evaluated similarity bound at one layer.

    ``terms`` holds the per-hop-count contributions of the residual
    bound (empty for the plain-stack bound).  ``satisfied`` allows a
    relative slack of 1e-9 for rounding in the two sides.  The
    ``envelope_*`` fields carry the fitted closed-form diagnostic of the
    residual bound (None for the plain-stack bound).
    """

    layer: int
    lhs: float
    rhs: float
    max_w_spectral: float
    satisfied: bool
    terms: tuple[float, ...] = ()
    envelope_rhs: float | None = None
    envelope_q: float | None = None
    envelope_coeff: float | None = None


def _check_chain(layer: int, weights, grad_last) -> tuple[int, np.ndarray]:
    """Validate oracle arguments; returns (L, contiguous grad_last)."""
    num_layers = len(weights)
    if not 0 <= layer <= num_layers:
        raise ShapeError(
            f"layer must lie in [0, {num_layers}], got {layer}")
    g = np.ascontiguousarray(grad_last, dtype=np.float64)
    if g.ndim != 2:
        raise ShapeError(f"grad_last must be 2-D, got shape {g.shape}")
    width = g.shape[1]
    for i, w in enumerate(weights):
        w = np.asarray(w)
        if w.shape != (width, width):
            raise ShapeError(
                f"weight {i} must be ({width}, {width}) to chain with "
                f"grad_last, got {w.shape}")
    return num_layers, g


def _check_adj(adj: CsrMatrix, n_rows: int) -> None:
    if not isinstance(adj, CsrMatrix):
        raise ShapeError("adj must be a CsrMatrix")
    if adj.rows != adj.cols or adj.rows != n_rows:
        raise ShapeError(
            f"adj must be square with {n_rows} rows, got {adj.shape}")


def linear_input_gradient(layer: int, weights, adj: CsrMatrix,
                          grad_last) -> np.ndarray:
    """Closed-form loss gradient at ``X(layer)`` of a plain linear stack.

    Evaluates ``(A^T)^(L-layer) G W(L-1)^T ... W(layer)^T`` exactly as
    written: the transposed-weight right-products are applied first in
    descending weight index, then the transposed propagation operator
    ``L - layer`` times.
    """
    num_layers, g = _check_chain(layer, weights, grad_last)
    _check_adj(adj, g.shape[0])
    k = num_layers - layer
    out = g.copy()
    for i in range(1, k + 1):
        out = matmul(out, transpose(np.asarray(weights[num_layers - i],
                                               dtype=np.float64)))
    adj_t = adj.transpose()
    for _ in range(k):
        out = spmm(adj_t, out)
    return out


def linear_weight_gradient(layer: int, weights, adj: CsrMatrix, x_layer,
                           grad_last) -> np.ndarray:
    """Closed-form loss gradient at ``W(layer)`` of a plain linear stack.

    Equals ``(A X(layer))^T dLoss/dX(layer+1)`` with the input gradient
    taken from ``linear_input_gradient``.
    """
    num_layers = len(weights)
    if not 0 <= layer < num_layers:
        raise ShapeError(
            f"layer must lie in [0, {num_layers}), got {layer}")
    x = np.ascontiguousarray(x_layer, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"x_layer must be 2-D, got shape {x.shape}")
    _check_adj(adj, x.shape[0])
    grad_in = linear_input_gradient(layer + 1, weights, adj, grad_last)
    propagated = spmm(adj, x)
    return matmul(transpose(propagated), grad_in)


def residual_input_gradient(layer: int, weights, adj: CsrMatrix, grad_last,
                            depth_cap: int = RESIDUAL_DEPTH_CAP,
                            return_stats: bool = False):
    """Closed-form loss gradient at ``X(layer)`` of a residual linear stack.

    Sums one monomial per subset of the chained layer indices
    ``{layer .. L-1}``: the empty subset contributes ``G`` itself, and a
    subset ``i_1 < ... < i_p`` contributes
    ``(A^T)^p G W(i_p)^T ... W(i_1)^T``.  Subsets are enumerated by
    ascending size and lexicographic order within each size, so the
    summation order is fixed.

    The monomial count is ``2^(L-layer)``; chains longer than
    ``depth_cap`` are refused with DepthCapError.  With
    ``return_stats=True`` returns ``(gradient, PathStats)`` where the
    stats carry the number of monomials actually summed.
    """
    num_layers, g = _check_chain(layer, weights, grad_last)
    _check_adj(adj, g.shape[0])
    k = num_layers - layer
    if k > depth_cap:
        raise DepthCapError(
            f"residual expansion over {k} layers needs 2^{k} = {2 ** k} "
            f"monomials, beyond the cap of {depth_cap} layers")
    adj_t = adj.transpose()
    propagated = [g]
    for _ in range(k):
        propagated.append(spmm(adj_t, propagated[-1]))
    weights_t = [transpose(np.asarray(w, dtype=np.float64))
                 for w in weights]

    total = g.copy()
    count = 1
    for p in range(1, k + 1):
        base = propagated[p]
        for combo in itertools.combinations(range(layer, num_layers), p):
            term = base
            for idx in reversed(combo):
                term = matmul(term, weights_t[idx])
            total = total + term
            count += 1
    stats = PathStats(monomials=count)
    if return_stats:
        return total, stats
    return total


def _max_chain_spectral(layer: int, weights, num_layers: int) -> float:
    """Largest spectral norm among the chained weights ``{layer..L-1}``.

    Zero for an empty chain (``layer == L``); it then only ever enters
    the bounds raised to the 0th power.
    """
    sigmas = [spectral_norm(np.asarray(weights[i], dtype=np.float64))
              for i in range(layer, num_layers)]
    return max(sigmas) if sigmas else 0.0


def _warn_structure(adj: CsrMatrix, what: str) -> None:
    """Warn when the graph under ``adj`` breaks a bound's assumptions."""
    row_ids = np.repeat(np.arange(adj.rows, dtype=np.int64),
                        np.diff(adj.indptr))
    mask = adj.indices != row_ids
    pairs = np.column_stack((row_ids[mask], adj.indices[mask]))
    props = edge_set_properties(adj.rows, pairs)
    if not props["connected"] or props["bipartite"]:
        state = []
        if not props["connected"]:
            state.append("disconnected")
        if props["bipartite"]:
            state.append("bipartite")
        warnings.warn(
            f"{what} assumes a connected, non-bipartite graph; this one "
            f"is {' and '.join(state)}, so the reported bound may be "
            "loose or vacuous", UserWarning, stacklevel=3)


_BOUND_SLACK = 1e-9


def smoothing_bound(layer: int, weights, adj: CsrMatrix,
                    grad_last) -> BoundReport:
    """Check the similarity bound for the plain linear stack at ``layer``.

    lhs is the row-similarity of the closed-form input gradient; rhs is
    ``||G||_F * cpn(k) * s^k`` (see module docstring).  The inequality
    holds for any weights and any propagation operator; ``satisfied``
    reports it with 1e-9 relative slack.
    """
    num_layers, g = _check_chain(layer, weights, grad_last)
    _check_adj(adj, g.shape[0])
    _warn_structure(adj, "the smoothing bound")
    k = num_layers - layer
    max_sigma = _max_chain_spectral(layer, weights, num_layers)
    lhs = node_similarity(linear_input_gradient(layer, weights, adj, g))
    rhs = (frobenius_norm(g) * centered_propagation_norm(adj, k)
           * max_sigma ** k)
    return BoundReport(layer=layer, lhs=lhs, rhs=rhs,
                       max_w_spectral=max_sigma,
                       satisfied=lhs <= rhs * (1.0 + _BOUND_SLACK))


def expansion_bound(layer: int, weights, adj: CsrMatrix, grad_last,
                    depth_cap: int = RESIDUAL_DEPTH_CAP) -> BoundReport:
    """Check the similarity bound for the residual linear stack at ``layer``.

    lhs is the row-similarity of the closed-form residual gradient; rhs
    adds one term per hop count ``p``:
    ``mu(G) + sum_p C(k, p) ||G||_F cpn(p) s^p`` (see module docstring).
    ``terms[p-1]`` stores the p-hop term.  The fitted-envelope closed
    form is reported in the ``envelope_*`` fields as a diagnostic.
    """
    num_layers, g = _check_chain(layer, weights, grad_last)
    _check_adj(adj, g.shape[0])
    _warn_structure(adj, "the expansion bound")
    k = num_layers - layer
    max_sigma = _max_chain_spectral(layer, weights, num_layers)
    lhs = node_similarity(
        residual_input_gradient(layer, weights, adj, g,
                                depth_cap=depth_cap))
    g_fro = frobenius_norm(g)
    g_mu = node_similarity(g)
    cpns = [centered_propagation_norm(adj, p) for p in range(1, k + 1)]
    terms = tuple(math.comb(k, p) * g_fro * cpns[p - 1] * max_sigma ** p
                  for p in range(1, k + 1))
    rhs = g_mu + math.fsum(terms)

    envelope_rhs = envelope_q = envelope_coeff = None
    if k >= 1:
        points = [(p, v) for p, v in zip(range(1, k + 1), cpns) if v > 0.0]
        if len(points) >= 2:
            px = np.array([p for p, _ in points], dtype=np.float64)
            py = np.log([v for _, v in points])
            slope, intercept = np.polyfit(px, py, 1)
            envelope_q = float(np.exp(slope))
            envelope_coeff = float(np.exp(intercept))
        elif points:
            envelope_q = points[0][1]
            envelope_coeff = 1.0
        else:
            envelope_q = 0.0
            envelope_coeff = 0.0
        envelope_rhs = g_mu + envelope_coeff * g_fro * (
            (1.0 + envelope_q * max_sigma) ** k - 1.0)

    return BoundReport(layer=layer, lhs=lhs, rhs=rhs,
                       max_w_spectral=max_sigma,
                       satisfied=lhs <= rhs * (1.0 + _BOUND_SLACK),
                       terms=terms, envelope_rhs=envelope_rhs,
                       envelope_q=envelope_q,
                       envelope_coeff=envelope_coeff)


def bound_reports_to_csv(reports, path) -> None:
    """Write BoundReports as CSV.

    Columns: ``layer, lhs, rhs, max_w_spectral, satisfied`` followed by
    one ``term_p{p}`` column per hop count up to the longest report
    (shorter rows leave the extra columns empty).
    """
    reports = list(reports)
    width = max((len(r.terms) for r in reports), default=0)
    header = ["layer", "lhs", "rhs", "max_w_spectral", "satisfied"]
    header += [f"term_p{p}" for p in range(1, width + 1)]
    lines = [",".join(header)]
    for r in reports:
        row = [str(r.layer), repr(r.lhs), repr(r.rhs),
               repr(r.max_w_spectral), "true" if r.satisfied else "false"]
        row += [repr(t) for t in r.terms]
        row += [""] * (width - len(r.terms))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

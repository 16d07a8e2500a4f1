"""Deterministic synthetic datasets with pinned headline statistics.

Each generator produces a connected, non-bipartite citation-style graph
with an exact node/edge/class count, a controllable edge homophily, a
heavy-tailed degree profile, and bag-of-words features tied to the node
classes.  Byte-identical output is guaranteed for a fixed package
version: every draw comes from one seeded generator and the composition
order is fixed.

Construction, per dataset:

1. class sizes from a fixed proportion vector (largest-remainder
   rounding), node ids shuffled so id order carries no class signal;
2. a preferential-attachment tree (guarantees connectivity), each new
   node choosing a same-class anchor with the homophily probability;
3. the remaining edge budget filled with degree-weighted endpoint pairs
   under the same homophily coin, rejecting duplicates and self-loops;
4. per-class word distributions (softmax of scaled Gaussian logits over
   the vocabulary); each node draws a Poisson number of word tokens
   from its class distribution -- with probability ``label_noise`` from
   a different class's distribution -- and keeps the normalized binary
   presence vector;
5. masks: either fixed-count splits (per-class train quota, then fixed
   validation/test counts) or proportional splits.

The class-signal knobs (homophily, topic sharpness, label noise, words
per node) were tuned once so that reference depth sweeps land near the
accuracies reported for the real datasets of the same shape; they are
frozen constants now.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .graphio import Graph, graph_properties, save_dataset, sbm_generate

__all__ = [
    "STANDIN_SPECS",
    "standin_graph",
    "write_standins",
    "ensure_standins",
    "connected_sbm",
]


@dataclass(frozen=True)
class StandinSpec:
    """Frozen recipe for one synthetic dataset."""

    nodes: int
    edges: int
    classes: int
    feat_dim: int
    class_props: tuple[float, ...]
    homophily: float
    topic_sharpness: float
    label_noise: float
    mean_words: float
    # ("count", train_per_class, val, test) or ("ratio", train, val, test)
    split: tuple
    seed: int


STANDIN_SPECS: dict[str, StandinSpec] = {
    "cora": StandinSpec(
        nodes=2708, edges=5278, classes=7, feat_dim=256,
        class_props=(0.130, 0.080, 0.155, 0.300, 0.157, 0.110, 0.068),
        homophily=0.85, topic_sharpness=2.0, label_noise=0.30,
        mean_words=6.0, split=("count", 20, 500, 1000), seed=20240101),
    "citeseer": StandinSpec(
        nodes=3327, edges=4552, classes=6, feat_dim=256,
        class_props=(0.110, 0.200, 0.210, 0.211, 0.180, 0.089),
        homophily=0.74, topic_sharpness=2.0, label_noise=0.16,
        mean_words=14.0, split=("count", 20, 500, 1000), seed=20240202),
    "chameleon": StandinSpec(
        nodes=890, edges=8854, classes=5, feat_dim=128,
        class_props=(0.21, 0.24, 0.23, 0.17, 0.15),
        homophily=0.23, topic_sharpness=1.1, label_noise=0.30,
        mean_words=24.0, split=("ratio", 0.5, 0.25, 0.25), seed=20240303),
    "squirrel": StandinSpec(
        nodes=2223, edges=46998, classes=5, feat_dim=128,
        class_props=(0.20, 0.21, 0.20, 0.20, 0.19),
        homophily=0.22, topic_sharpness=0.9, label_noise=0.35,
        mean_words=30.0, split=("ratio", 0.5, 0.25, 0.25), seed=20240404),
}


def _largest_remainder_sizes(total: int, props) -> np.ndarray:
    """Integer sizes proportional to ``props`` summing exactly to total."""
    raw = np.asarray(props, dtype=np.float64)
    raw = raw / raw.sum() * total
    sizes = np.floor(raw).astype(np.int64)
    shortfall = total - int(sizes.sum())
    order = np.argsort(-(raw - sizes), kind="stable")
    sizes[order[:shortfall]] += 1
    if (sizes < 1).any():
        raise ValueError("every class needs at least one node")
    return sizes


def _sample_tree(rng, labels: np.ndarray, homophily: float) -> list:
    """Preferential-attachment spanning tree over a shuffled node order."""
    n = labels.shape[0]
    order = rng.permutation(n)
    degree = np.zeros(n, dtype=np.float64)
    edges = []
    placed = order[:1].tolist()
    for i in range(1, n):
        node = int(order[i])
        want_same = rng.random() < homophily
        placed_arr = np.array(placed)
        same = labels[placed_arr] == labels[node]
        pool = placed_arr[same] if (want_same and same.any()) \
            else (placed_arr[~same] if (~same).any() else placed_arr)
        weights = degree[pool] + 1.0
        anchor = int(rng.choice(pool, p=weights / weights.sum()))
        edges.append((min(node, anchor), max(node, anchor)))
        degree[node] += 1.0
        degree[anchor] += 1.0
        placed.append(node)
    return edges


def _fill_edges(rng, labels: np.ndarray, degree: np.ndarray,
                existing: set, budget: int, homophily: float) -> list:
    """Degree-weighted extra edges until ``budget`` new pairs are found."""
    n = labels.shape[0]
    by_class = {c: np.flatnonzero(labels == c)
                for c in np.unique(labels)}
    classes = np.unique(labels)
    edges = []
    while len(edges) < budget:
        batch = min(4096, 4 * (budget - len(edges)) + 64)
        w_all = degree + 1.0
        us = rng.choice(n, size=batch, p=w_all / w_all.sum())
        same_coin = rng.random(batch) < homophily
        for u, same in zip(us, same_coin):
            cu = labels[u]
            if same:
                pool = by_class[cu]
            else:
                other = classes[classes != cu]
                counts = np.array([by_class[c].size for c in other],
                                  dtype=np.float64)
                pool = by_class[other[rng.choice(other.size,
                                                 p=counts / counts.sum())]]
            w = degree[pool] + 1.0
            v = int(rng.choice(pool, p=w / w.sum()))
            u = int(u)
            if u == v:
                continue
            key = (min(u, v), max(u, v))
            if key in existing:
                continue
            existing.add(key)
            edges.append(key)
            degree[u] += 1.0
            degree[v] += 1.0
            if len(edges) >= budget:
                break
    return edges


def _draw_features(rng, labels: np.ndarray, spec: StandinSpec) -> np.ndarray:
    """Normalized bag-of-words rows tied to (noisy) node classes."""
    n = labels.shape[0]
    logits = spec.topic_sharpness * rng.normal(
        size=(spec.classes, spec.feat_dim))
    logits += 0.5 * rng.normal(size=spec.feat_dim)
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    cumprobs = np.cumsum(probs, axis=1)

    topic = labels.copy()
    flip = rng.random(n) < spec.label_noise
    if flip.any():
        shift = rng.integers(1, spec.classes, size=int(flip.sum()))
        topic[flip] = (topic[flip] + shift) % spec.classes
    n_words = 1 + rng.poisson(max(spec.mean_words - 1.0, 0.0), size=n)

    features = np.zeros((n, spec.feat_dim), dtype=np.float64)
    for i in range(n):
        draws = np.searchsorted(cumprobs[topic[i]], rng.random(n_words[i]))
        features[i, np.minimum(draws, spec.feat_dim - 1)] = 1.0
    features /= features.sum(axis=1, keepdims=True)
    return features


def _split_masks(rng, labels: np.ndarray, spec: StandinSpec):
    n = labels.shape[0]
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    if spec.split[0] == "count":
        _, per_class, n_val, n_test = spec.split
        for c in range(spec.classes):
            members = np.flatnonzero(labels == c)
            picked = rng.choice(members, size=per_class, replace=False)
            train[picked] = True
        rest = np.flatnonzero(~train)
        rest = rng.permutation(rest)
        val[rest[:n_val]] = True
        test[rest[n_val:n_val + n_test]] = True
    elif spec.split[0] == "ratio":
        _, r_train, r_val, _ = spec.split
        order = rng.permutation(n)
        n_train = int(round(r_train * n))
        n_val = int(round(r_val * n))
        train[order[:n_train]] = True
        val[order[n_train:n_train + n_val]] = True
        test[order[n_train + n_val:]] = True
    else:
        raise ValueError(f"unknown split kind {spec.split[0]!r}")
    return train, val, test


def standin_graph(name: str) -> Graph:
    """Build the named synthetic dataset in memory."""
    if name not in STANDIN_SPECS:
        raise DataError(
            f"unknown dataset {name!r}; available: "
            f"{', '.join(sorted(STANDIN_SPECS))}")
    spec = STANDIN_SPECS[name]
    rng = np.random.default_rng(spec.seed)

    sizes = _largest_remainder_sizes(spec.nodes, spec.class_props)
    slot_labels = np.repeat(np.arange(spec.classes, dtype=np.int64), sizes)
    perm = rng.permutation(spec.nodes)
    labels = np.empty(spec.nodes, dtype=np.int64)
    labels[perm] = slot_labels

    tree = _sample_tree(rng, labels, spec.homophily)
    degree = np.zeros(spec.nodes, dtype=np.float64)
    for u, v in tree:
        degree[u] += 1.0
        degree[v] += 1.0
    existing = set(tree)
    budget = spec.edges - len(tree)
    if budget < 0:
        raise ValueError(f"{name}: edge budget below spanning tree size")
    extra = _fill_edges(rng, labels, degree, existing, budget,
                        spec.homophily)
    edges = np.array(tree + extra, dtype=np.int64)

    features = _draw_features(rng, labels, spec)
    train, val, test = _split_masks(rng, labels, spec)
    graph = Graph(name=name, num_nodes=spec.nodes, edges=edges,
                  features=features, labels=labels, train_mask=train,
                  val_mask=val, test_mask=test)

    props = graph_properties(graph)
    if not props["connected"] or props["bipartite"]:
        raise DataError(
            f"{name} generator produced an unusable graph ({props}); "
            "this indicates a broken recipe constant")
    if graph.num_edges != spec.edges:
        raise DataError(
            f"{name} generator landed on {graph.num_edges} edges, "
            f"wanted {spec.edges}")
    return graph


def write_standins(root, names=None, force: bool = False) -> list[Path]:
    """Materialize datasets under ``root/<name>/``; returns written dirs.

    Existing directories are left untouched unless ``force`` is set, so
    repeated calls are cheap and never churn bytes.
    """
    root = Path(root)
    written = []
    for name in names or sorted(STANDIN_SPECS):
        out = root / name
        if out.exists() and not force:
            continue
        graph = standin_graph(name)
        save_dataset(graph, out)
        written.append(out)
    return written


def ensure_standins(root, names=None) -> None:
    """Generate any missing datasets under ``root``."""
    write_standins(root, names=names, force=False)


def connected_sbm(seed: int, blocks: int = 2, per_block: int = 10,
                  p_in: float = 0.6, p_out: float = 0.2,
                  feat_dim: int = 4, max_tries: int = 64) -> Graph:
    """A block-model graph that is connected and non-bipartite.

    Resamples with derived seeds until the structural requirements hold
    (almost always the first draw at these densities); the result is
    still fully determined by ``seed``.
    """
    for attempt in range(max_tries):
        graph = sbm_generate(blocks, per_block, p_in, p_out, feat_dim,
                             seed * 1009 + attempt)
        props = graph_properties(graph)
        if props["connected"] and not props["bipartite"]:
            return graph
    raise DataError(
        f"no connected non-bipartite draw in {max_tries} tries; raise "
        "p_in/p_out or the node count")

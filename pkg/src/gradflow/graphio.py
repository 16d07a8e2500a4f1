"""Graph datasets: loading, validation, generation, and properties.

On-disk format (all files UTF-8, LF line endings, ``#`` starts a comment,
blank lines ignored):

* edges file    -- one ``u<TAB>v`` pair per undirected edge, 0-based node
  ids; self-loop lines are rejected; duplicates (in either orientation)
  are merged;
* features file -- header line ``N d``, then ``N`` rows of ``d`` floats;
* labels file   -- ``N`` integer class ids, one per line;
* masks file    -- ``N`` characters from ``{t, v, s, -}`` (train /
  validation / test / unlabeled), whitespace and line breaks ignored.

Loading cross-checks the four files against each other and, for known
dataset names, against published node/edge/class counts.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IntegrityError, ParseError, ShapeError
from .linalg import CsrMatrix

__all__ = [
    "Graph",
    "DatasetStats",
    "KNOWN_DATASET_STATS",
    "normalized_adjacency",
    "load_dataset",
    "load_dataset_dir",
    "save_dataset",
    "sbm_generate",
    "graph_properties",
    "edge_set_properties",
    "dataset_stats",
]

# name -> (nodes, undirected edges, classes); used to cross-check loads.
KNOWN_DATASET_STATS: dict[str, tuple[int, int, int]] = {
    "cora": (2708, 5278, 7),
    "citeseer": (3327, 4552, 6),
    "chameleon": (890, 8854, 5),
    "squirrel": (2223, 46998, 5),
}


def _canonical_edges(num_nodes: int, edges) -> np.ndarray:
    """Validate and canonicalize an undirected edge list.

    Returns an (E, 2) int64 array with ``u < v`` per row, rows sorted
    lexicographically, duplicates merged.  Self-loops are rejected.
    """
    e = np.asarray(edges, dtype=np.int64)
    if e.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if e.ndim != 2 or e.shape[1] != 2:
        raise ShapeError(f"edge list must have shape (E, 2), got {e.shape}")
    if e.min() < 0 or e.max() >= num_nodes:
        raise IntegrityError(
            f"edge endpoint out of range [0, {num_nodes}): "
            f"min {e.min()}, max {e.max()}")
    if np.any(e[:, 0] == e[:, 1]):
        bad = int(np.flatnonzero(e[:, 0] == e[:, 1])[0])
        raise IntegrityError(f"self-loop on node {e[bad, 0]} is not allowed")
    lo = np.minimum(e[:, 0], e[:, 1])
    hi = np.maximum(e[:, 0], e[:, 1])
    keys = lo * np.int64(num_nodes) + hi
    uniq = np.unique(keys)
    return np.column_stack((uniq // num_nodes, uniq % num_nodes))


def normalized_adjacency(num_nodes: int, edges) -> CsrMatrix:
    """Symmetrically normalized adjacency with self-loops.

    Adds a self-loop to every node, then scales each entry (i, j) by
    ``1/sqrt(deg(i) * deg(j))`` where degrees count the self-loops.  The
    result is symmetric with spectral norm exactly 1 and is the
    propagation operator used by every graph convolution here.
    """
    e = _canonical_edges(num_nodes, edges)
    rows = np.concatenate((e[:, 0], e[:, 1],
                           np.arange(num_nodes, dtype=np.int64)))
    cols = np.concatenate((e[:, 1], e[:, 0],
                           np.arange(num_nodes, dtype=np.int64)))
    deg = np.bincount(rows, minlength=num_nodes).astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(deg)
    vals = inv_sqrt[rows] * inv_sqrt[cols]
    return CsrMatrix.from_coo(num_nodes, num_nodes, rows, cols, vals)


class Graph:
    """An undirected attributed graph with train/val/test node masks.

    Edges are stored canonically (``u < v``, sorted, deduplicated).  The
    normalized propagation operator and its transpose are built once at
    construction and shared by all passes over the graph.
    """

    def __init__(self, name: str, num_nodes: int, edges, features, labels,
                 train_mask, val_mask, test_mask):
        self.name = str(name)
        self.num_nodes = int(num_nodes)
        if self.num_nodes <= 0:
            raise IntegrityError("graph must have at least one node")
        self.edges = _canonical_edges(self.num_nodes, edges)
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        self.labels = np.ascontiguousarray(labels, dtype=np.int64)
        self.train_mask = np.ascontiguousarray(train_mask, dtype=bool)
        self.val_mask = np.ascontiguousarray(val_mask, dtype=bool)
        self.test_mask = np.ascontiguousarray(test_mask, dtype=bool)

        n = self.num_nodes
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise IntegrityError(
                f"features must be ({n}, d), got {self.features.shape}")
        if not np.isfinite(self.features).all():
            raise IntegrityError("features contain non-finite values")
        for arr, what in ((self.labels, "labels"),
                          (self.train_mask, "train mask"),
                          (self.val_mask, "validation mask"),
                          (self.test_mask, "test mask")):
            if arr.shape != (n,):
                raise IntegrityError(
                    f"{what} must have length {n}, got {arr.shape}")
        if self.labels.min() < 0:
            raise IntegrityError("labels must be nonnegative")
        overlap = ((self.train_mask & self.val_mask)
                   | (self.train_mask & self.test_mask)
                   | (self.val_mask & self.test_mask))
        if overlap.any():
            raise IntegrityError(
                f"masks overlap on {int(overlap.sum())} node(s)")

        self.norm_adj = normalized_adjacency(self.num_nodes, self.edges)
        self.adj_t = self.norm_adj.transpose()
        self.features_t = np.ascontiguousarray(self.features.T)

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(np.unique(self.labels).size)

    def __repr__(self):
        return (f"Graph({self.name!r}, nodes={self.num_nodes}, "
                f"edges={self.num_edges}, classes={self.num_classes})")


@dataclass(frozen=True)
class DatasetStats:
    """Headline statistics of a loaded dataset."""

    name: str
    nodes: int
    edges: int
    classes: int
    feature_dim: int
    train_nodes: int
    val_nodes: int
    test_nodes: int
    avg_degree: float


def dataset_stats(graph: Graph) -> DatasetStats:
    """Compute the summary statistics of ``graph``."""
    return DatasetStats(
        name=graph.name,
        nodes=graph.num_nodes,
        edges=graph.num_edges,
        classes=graph.num_classes,
        feature_dim=graph.feature_dim,
        train_nodes=int(graph.train_mask.sum()),
        val_nodes=int(graph.val_mask.sum()),
        test_nodes=int(graph.test_mask.sum()),
        avg_degree=2.0 * graph.num_edges / graph.num_nodes,
    )


def _content_lines(path: Path):
    """Yield (line_no, text) with comments and blank lines removed."""
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ParseError(str(path), 0, f"cannot read file: {exc}") from exc
    for i, line in enumerate(raw.split(b"\n"), start=1):
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(str(path), i, "invalid UTF-8") from exc
        text = text.split("#", 1)[0].strip()
        if text:
            yield i, text


def _parse_int(token: str, path: Path, line_no: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(str(path), line_no,
                         f"expected integer {what}, got {token!r}") from None


def _parse_edges(path: Path) -> np.ndarray:
    pairs = []
    for line_no, text in _content_lines(path):
        tokens = text.split()
        if len(tokens) != 2:
            raise ParseError(str(path), line_no,
                             f"expected 'u<TAB>v', got {len(tokens)} fields")
        u = _parse_int(tokens[0], path, line_no, "node id")
        v = _parse_int(tokens[1], path, line_no, "node id")
        if u < 0 or v < 0:
            raise ParseError(str(path), line_no,
                             f"node ids must be nonnegative, got {u}, {v}")
        if u == v:
            raise ParseError(str(path), line_no,
                             f"self-loop on node {u} is not allowed")
        pairs.append((u, v))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.asarray(pairs, dtype=np.int64)


def _parse_features(path: Path) -> np.ndarray:
    lines = _content_lines(path)
    try:
        header_no, header = next(lines)
    except StopIteration:
        raise ParseError(str(path), 1, "missing 'N d' header line") from None
    tokens = header.split()
    if len(tokens) != 2:
        raise ParseError(str(path), header_no,
                         "header must be 'N d' (two integers)")
    n = _parse_int(tokens[0], path, header_no, "node count")
    d = _parse_int(tokens[1], path, header_no, "feature dimension")
    if n <= 0 or d <= 0:
        raise ParseError(str(path), header_no,
                         f"header values must be positive, got {n} {d}")
    out = np.empty((n, d), dtype=np.float64)
    filled = 0
    last_no = header_no
    for line_no, text in lines:
        last_no = line_no
        if filled >= n:
            raise ParseError(str(path), line_no,
                             f"more than {n} feature rows")
        try:
            row = np.array(text.split(), dtype=np.float64)
        except ValueError:
            raise ParseError(str(path), line_no,
                             "feature row contains a non-numeric value") \
                from None
        if row.shape[0] != d:
            raise ParseError(str(path), line_no,
                             f"expected {d} values, got {row.shape[0]}")
        if not np.isfinite(row).all():
            raise ParseError(str(path), line_no,
                             "feature row contains a non-finite value")
        out[filled] = row
        filled += 1
    if filled != n:
        raise ParseError(str(path), last_no + 1,
                         f"expected {n} feature rows, found {filled}")
    return out


def _parse_labels(path: Path) -> np.ndarray:
    values = []
    for line_no, text in _content_lines(path):
        tokens = text.split()
        if len(tokens) != 1:
            raise ParseError(str(path), line_no,
                             "expected one class id per line")
        label = _parse_int(tokens[0], path, line_no, "class id")
        if label < 0:
            raise ParseError(str(path), line_no,
                             f"class ids must be nonnegative, got {label}")
        values.append(label)
    return np.asarray(values, dtype=np.int64)


_MASK_CHARS = {"t", "v", "s", "-"}


def _parse_masks(path: Path) -> str:
    chars = []
    for line_no, text in _content_lines(path):
        for ch in text:
            if ch.isspace():
                continue
            if ch not in _MASK_CHARS:
                raise ParseError(str(path), line_no,
                                 f"invalid mask character {ch!r} "
                                 "(expected t, v, s or -)")
            chars.append(ch)
    return "".join(chars)


def load_dataset(edges_path, features_path, labels_path, masks_path,
                 name: str | None = None, validate: bool = True) -> Graph:
    """Load a graph from its four data files.

    Parse failures raise ParseError with the file path and 1-based line
    number.  Disagreements between the files (or, when ``validate`` is
    true and ``name`` is a known dataset, with its published statistics)
    raise IntegrityError.
    """
    edges_path = Path(edges_path)
    features_path = Path(features_path)
    labels_path = Path(labels_path)
    masks_path = Path(masks_path)
    if name is None:
        name = features_path.parent.name or "dataset"

    features = _parse_features(features_path)
    n = features.shape[0]
    raw_edges = _parse_edges(edges_path)
    labels = _parse_labels(labels_path)
    masks = _parse_masks(masks_path)

    if labels.shape[0] != n:
        raise IntegrityError(
            f"{labels_path}: {labels.shape[0]} labels for {n} nodes")
    if len(masks) != n:
        raise IntegrityError(
            f"{masks_path}: {len(masks)} mask characters for {n} nodes")
    if raw_edges.size and raw_edges.max() >= n:
        raise IntegrityError(
            f"{edges_path}: node id {int(raw_edges.max())} exceeds "
            f"node count {n}")

    arr = np.frombuffer("".join(masks).encode("ascii"), dtype="S1")
    graph = Graph(
        name=name,
        num_nodes=n,
        edges=raw_edges,
        features=features,
        labels=labels,
        train_mask=arr == b"t",
        val_mask=arr == b"v",
        test_mask=arr == b"s",
    )

    if validate and name.lower() in KNOWN_DATASET_STATS:
        want_n, want_e, want_c = KNOWN_DATASET_STATS[name.lower()]
        got = (graph.num_nodes, graph.num_edges, graph.num_classes)
        if got != (want_n, want_e, want_c):
            raise IntegrityError(
                f"dataset {name!r} has (nodes, edges, classes)={got}, "
                f"expected {(want_n, want_e, want_c)}; pass "
                "validate=False to load anyway")
    return graph


def save_dataset(graph: Graph, directory) -> None:
    """Write ``graph`` into ``directory`` in the four-file format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "edges.txt", "w", encoding="utf-8",
              newline="\n") as fh:
        for u, v in graph.edges:
            fh.write(f"{u}\t{v}\n")
    with open(directory / "features.txt", "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(f"{graph.num_nodes} {graph.feature_dim}\n")
        for row in graph.features:
            fh.write(" ".join(repr(float(x)) for x in row))
            fh.write("\n")
    with open(directory / "labels.txt", "w", encoding="utf-8",
              newline="\n") as fh:
        for label in graph.labels:
            fh.write(f"{label}\n")
    mask = np.full(graph.num_nodes, "-", dtype="U1")
    mask[graph.train_mask] = "t"
    mask[graph.val_mask] = "v"
    mask[graph.test_mask] = "s"
    with open(directory / "masks.txt", "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("".join(mask))
        fh.write("\n")


def load_dataset_dir(directory, name: str | None = None,
                     validate: bool = True) -> Graph:
    """Load a dataset laid out as ``directory/{edges,features,labels,masks}.txt``."""
    directory = Path(directory)
    return load_dataset(directory / "edges.txt", directory / "features.txt",
                        directory / "labels.txt", directory / "masks.txt",
                        name=name if name is not None else directory.name,
                        validate=validate)


def sbm_generate(blocks: int, per_block: int, p_in: float, p_out: float,
                 feat_dim: int, seed: int) -> Graph:
    """Sample a stochastic block model graph with Gaussian features.

    Nodes come in ``blocks`` groups of ``per_block``; an undirected edge
    joins two distinct nodes with probability ``p_in`` inside a group
    and ``p_out`` across groups.  Features are the node's group mean
    (standard normal per dimension) plus noise of scale 0.5; labels are
    group ids.  Nodes are split 60/20/20 into train/val/test by a seeded
    permutation.  Connectivity is not guaranteed; check with
    ``graph_properties`` and resample if needed.
    """
    if blocks < 1 or per_block < 1:
        raise ValueError("blocks and per_block must be positive")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ValueError("edge probabilities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n = blocks * per_block
    labels = np.repeat(np.arange(blocks, dtype=np.int64), per_block)

    iu, iv = np.triu_indices(n, k=1)
    probs = np.where(labels[iu] == labels[iv], p_in, p_out)
    keep = rng.random(iu.shape[0]) < probs
    edges = np.column_stack((iu[keep], iv[keep])).astype(np.int64)

    means = rng.normal(size=(blocks, feat_dim))
    features = means[labels] + 0.5 * rng.normal(size=(n, feat_dim))

    order = rng.permutation(n)
    n_train = max(1, int(round(0.6 * n)))
    n_val = max(1, int(round(0.2 * n)))
    n_train = min(n_train, n - 2) if n >= 3 else n_train
    train_mask = np.zeros(n, dtype=bool)
    val_mask = np.zeros(n, dtype=bool)
    test_mask = np.zeros(n, dtype=bool)
    train_mask[order[:n_train]] = True
    val_mask[order[n_train:n_train + n_val]] = True
    test_mask[order[n_train + n_val:]] = True

    return Graph(name=f"sbm-b{blocks}-n{per_block}-s{seed}", num_nodes=n,
                 edges=edges, features=features, labels=labels,
                 train_mask=train_mask, val_mask=val_mask,
                 test_mask=test_mask)


def _neighbor_lists(num_nodes: int, edges: np.ndarray):
    """CSR-style (indptr, indices) over the raw undirected edges."""
    if edges.size == 0:
        return (np.zeros(num_nodes + 1, dtype=np.int64),
                np.zeros(0, dtype=np.int64))
    rows = np.concatenate((edges[:, 0], edges[:, 1]))
    cols = np.concatenate((edges[:, 1], edges[:, 0]))
    order = np.argsort(rows, kind="stable")
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_nodes), out=indptr[1:])
    return indptr, cols[order]


def graph_properties(graph: Graph) -> dict[str, bool]:
    """Structural facts about the raw graph (self-loops not added).

    ``connected``: every node reachable from node 0 by breadth-first
    search.  ``bipartite``: the edge set admits a proper 2-coloring.
    """
    return edge_set_properties(graph.num_nodes, graph.edges)


def edge_set_properties(num_nodes: int, edges) -> dict[str, bool]:
    """Connectivity and 2-colorability of a bare undirected edge set."""
    n = int(num_nodes)
    edges = _canonical_edges(n, edges)
    indptr, indices = _neighbor_lists(n, edges)
    color = np.full(n, -1, dtype=np.int8)
    bipartite = True
    visited = 0

    def sweep(start: int):
        nonlocal bipartite, visited
        color[start] = 0
        visited += 1
        queue = deque([start])
        while queue:
            node = queue.popleft()
            nc = color[node]
            for nb in indices[indptr[node]:indptr[node + 1]]:
                if color[nb] == -1:
                    color[nb] = 1 - nc
                    visited += 1
                    queue.append(int(nb))
                elif color[nb] == nc:
                    bipartite = False

    sweep(0)
    connected = visited == n
    if not connected:
        # 2-colorability must consider every component.
        for start in range(n):
            if color[start] == -1:
                sweep(start)
    return {"connected": connected, "bipartite": bipartite}

"""Multi-view attributed graphs: loading, saving, normalization and synthesis."""

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import yaml


class DataFormatError(ValueError):
    """Malformed dataset file. The message carries file and line number."""


@dataclass(frozen=True, eq=False)
class SparseAdjacency:
    """Symmetric n x n adjacency backed by a CSR matrix."""

    matrix: sp.csr_matrix
    normalized: bool = False

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=np.float64)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"adjacency must be square, got {m.shape}")
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        object.__setattr__(self, "matrix", m)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def nnz(self):
        return self.matrix.nnz

    @property
    def entries(self):
        coo = self.matrix.tocoo()
        return [(int(i), int(j), float(v)) for i, j, v in zip(coo.row, coo.col, coo.data)]

    @property
    def symmetric(self):
        return (abs(self.matrix - self.matrix.T) > 0).nnz == 0

    def toarray(self):
        return self.matrix.toarray()

    def __eq__(self, other):
        if not isinstance(other, SparseAdjacency):
            return NotImplemented
        return (
            self.n == other.n
            and self.normalized == other.normalized
            and (self.matrix != other.matrix).nnz == 0
        )

    @classmethod
    def from_edges(cls, edges, n):
        """Binary symmetric adjacency from (u, v) pairs; self-loops and duplicates dropped."""
        if n <= 0:
            raise ValueError(f"node count must be positive, got {n}")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError(f"edge index out of range for n={n}")
        edges = edges[edges[:, 0] != edges[:, 1]]
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        m = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()
        m.data[:] = 1.0  # collapse duplicates
        return cls(m)

    def edge_list(self):
        """Upper-triangle (u, v) pairs, u < v."""
        coo = sp.triu(self.matrix, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return np.column_stack([coo.row[order], coo.col[order]])


@dataclass(eq=False)
class MultiViewGraph:
    features: np.ndarray
    views: list
    labels: np.ndarray = None
    names: list = None
    normalized_views: list = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if len(self.views) < 1:
            raise ValueError("a multi-view graph needs at least one view")
        n = self.features.shape[0]
        for v, adj in enumerate(self.views):
            if adj.n != n:
                raise ValueError(f"view {v} has {adj.n} nodes, features have {n}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
            if self.labels.size != n:
                raise ValueError(f"{self.labels.size} labels for {n} nodes")
            c = int(self.labels.max()) + 1 if n else 0
            if self.labels.min() < 0 or np.unique(self.labels).size != c:
                raise ValueError("labels must cover every cluster id in [0, c)")
        if self.names is not None and len(self.names) != len(self.views):
            raise ValueError("one name per view required")
        if self.normalized_views is None:
            self.normalized_views = [
                adj if adj.normalized else normalize(adj) for adj in self.views
            ]

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def n_views(self):
        return len(self.views)

    @property
    def n_clusters(self):
        return None if self.labels is None else int(self.labels.max()) + 1

    def permuted(self, perm):
        """Same graph with nodes reordered so new node i is old node perm[i]."""
        perm = np.asarray(perm)
        views = [SparseAdjacency(a.matrix[perm][:, perm]) for a in self.views]
        labels = None if self.labels is None else self.labels[perm]
        return MultiViewGraph(self.features[perm], views, labels, self.names)

    def __eq__(self, other):
        if not isinstance(other, MultiViewGraph):
            return NotImplemented
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None
            and other.labels is not None
            and np.array_equal(self.labels, other.labels)
        )
        return (
            np.array_equal(self.features, other.features)
            and len(self.views) == len(other.views)
            and all(a == b for a, b in zip(self.views, other.views))
            and same_labels
        )


def normalize(adj):
    """D^-1/2 (A + I) D^-1/2 with degrees taken from A + I.

    Any self-loops in the input are discarded before I is added.
    """
    m = adj.matrix.tolil(copy=True)
    m.setdiag(0)
    m = m.tocsr()
    m.eliminate_zeros()
    m = m + sp.identity(adj.n, format="csr")
    deg = np.asarray(m.sum(axis=1)).ravel()
    inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
    out = (inv_sqrt @ m @ inv_sqrt).tocsr()
    # exact symmetry: average with the transpose is a no-op in exact
    # arithmetic but removes rounding asymmetry from the two-sided product
    out = ((out + out.T) * 0.5).tocsr()
    return SparseAdjacency(out, normalized=True)


# ---------------------------------------------------------------- file io


def _data_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield lineno, line


def load_features(path):
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise DataFormatError(f"{path}: empty feature file, expected 'N D' header") from None
    parts = header.split()
    try:
        if len(parts) != 2:
            raise ValueError
        n, d = int(parts[0]), int(parts[1])
        if n <= 0 or d <= 0:
            raise ValueError
    except ValueError:
        raise DataFormatError(f"{path}:{lineno}: malformed header {header!r}, expected 'N D'") from None
    rows = []
    for lineno, line in lines:
        tokens = line.split()
        if len(tokens) != d:
            raise DataFormatError(f"{path}:{lineno}: expected {d} values, found {len(tokens)}")
        try:
            row = [float(t) for t in tokens]
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-numeric token in {line!r}") from None
        if not all(np.isfinite(row)):
            raise DataFormatError(f"{path}:{lineno}: non-finite value")
        rows.append(row)
    if len(rows) != n:
        raise DataFormatError(f"{path}: expected {n} rows, found {len(rows)}")
    return np.array(rows, dtype=np.float64).reshape(n, d)


def save_features(path, X):
    X = np.asarray(X, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write(f"{X.shape[0]} {X.shape[1]}\n")
        for row in X:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_edge_view(path, n):
    if n <= 0:
        raise ValueError(f"node count must be positive, got {n}")
    edges = []
    for lineno, line in _data_lines(path):
        tokens = line.split()
        if len(tokens) != 2:
            raise DataFormatError(f"{path}:{lineno}: expected 'u v', got {line!r}")
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-integer node index") from None
        for idx in (u, v):
            if not 0 <= idx < n:
                raise DataFormatError(f"{path}:{lineno}: index {idx} out of range for n={n}")
        edges.append((u, v))
    return SparseAdjacency.from_edges(edges, n)


def save_edge_view(path, adj):
    with open(path, "w") as fh:
        for u, v in adj.edge_list():
            fh.write(f"{u} {v}\n")


def load_labels(path, n=None):
    labels = []
    for lineno, line in _data_lines(path):
        try:
            labels.append(int(line))
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: expected an integer label") from None
    if n is not None and len(labels) != n:
        raise DataFormatError(f"{path}: expected {n} labels, found {len(labels)}")
    return np.array(labels, dtype=np.int64)


def save_labels(path, labels):
    with open(path, "w") as fh:
        for v in np.asarray(labels).ravel():
            fh.write(f"{int(v)}\n")


def load_dataset(manifest_path):
    """Load a dataset described by a YAML manifest.

    Keys: ``features``, ``views`` (list of edge files), optional ``labels``,
    ``n_clusters`` and ``view_names``. Relative paths resolve against the
    manifest's directory.
    """
    with open(manifest_path) as fh:
        doc = yaml.safe_load(fh) or {}
    base = os.path.dirname(os.path.abspath(manifest_path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    for key in ("features", "views"):
        if key not in doc:
            raise DataFormatError(f"{manifest_path}: missing key {key!r}")
    X = load_features(resolve(doc["features"]))
    views = [load_edge_view(resolve(p), X.shape[0]) for p in doc["views"]]
    labels = None
    if doc.get("labels"):
        labels = load_labels(resolve(doc["labels"]), X.shape[0])
    graph = MultiViewGraph(X, views, labels, doc.get("view_names"))
    c = doc.get("n_clusters")
    if c is not None and labels is not None and graph.n_clusters != int(c):
        raise DataFormatError(
            f"{manifest_path}: n_clusters={c} but labels have {graph.n_clusters} clusters"
        )
    return graph, (int(c) if c is not None else graph.n_clusters)


def save_dataset(directory, graph, n_clusters=None, prefix="graph"):
    """Write feature/edge/label files plus ``<prefix>.yaml``; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    feat = f"{prefix}_features.txt"
    save_features(os.path.join(directory, feat), graph.features)
    views = []
    for v, adj in enumerate(graph.views):
        name = f"{prefix}_view{v}.txt"
        save_edge_view(os.path.join(directory, name), adj)
        views.append(name)
    manifest = {"features": feat, "views": views}
    if graph.labels is not None:
        save_labels(os.path.join(directory, f"{prefix}_labels.txt"), graph.labels)
        manifest["labels"] = f"{prefix}_labels.txt"
    c = n_clusters if n_clusters is not None else graph.n_clusters
    if c is not None:
        manifest["n_clusters"] = int(c)
    if graph.names is not None:
        manifest["view_names"] = list(graph.names)
    path = os.path.join(directory, f"{prefix}.yaml")
    with open(path, "w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=False)
    return path


# ---------------------------------------------------------------- synthetic


@dataclass
class SyntheticSpec:
    """Planted-partition multi-view graph.

    ``p_in``/``p_out`` may be scalars (shared by every view) or one value per
    view. Cluster k's feature mean is ``feature_signal`` on the k-th block of
    ``d / c`` coordinates and zero elsewhere; noise is standard normal.
    """

    n: int = 300
    c: int = 3
    n_views: int = 2
    p_in: object = 0.2
    p_out: object = 0.01
    feature_dim: int = 30
    feature_signal: float = 2.0
    seed: int = 0

    def view_probs(self):
        p_in = np.broadcast_to(np.asarray(self.p_in, dtype=float), (self.n_views,))
        p_out = np.broadcast_to(np.asarray(self.p_out, dtype=float), (self.n_views,))
        return p_in, p_out

    def validate(self):
        if self.n_views < 1:
            raise ValueError("n_views must be >= 1")
        if self.c < 1 or self.n < self.c:
            raise ValueError(f"need n >= c >= 1, got n={self.n}, c={self.c}")
        if self.feature_dim < self.c:
            raise ValueError("feature_dim must be at least c")
        try:
            p_in, p_out = self.view_probs()
        except ValueError:
            raise ValueError("p_in/p_out must be scalars or one value per view") from None
        for p in np.concatenate([p_in, p_out]):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"edge probability {p} outside [0, 1]")


def generate_synthetic(spec):
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    labels = rng.permutation(np.arange(spec.n) % spec.c)
    same = labels[:, None] == labels[None, :]
    iu = np.triu_indices(spec.n, k=1)
    p_in, p_out = spec.view_probs()
    views = []
    for v in range(spec.n_views):
        prob = np.where(same, p_in[v], p_out[v])[iu]
        keep = rng.random(prob.size) < prob
        edges = np.column_stack([iu[0][keep], iu[1][keep]])
        views.append(SparseAdjacency.from_edges(edges, spec.n))
    block = spec.feature_dim // spec.c
    means = np.zeros((spec.c, spec.feature_dim))
    for k in range(spec.c):
        means[k, k * block:(k + 1) * block] = spec.feature_signal
    X = means[labels] + rng.standard_normal((spec.n, spec.feature_dim))
    return MultiViewGraph(X, views, labels, [f"view{v}" for v in range(spec.n_views)])

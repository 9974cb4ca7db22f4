"""Lloyd's k-means with k-means++ seeding."""

import numpy as np


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] + (C * C).sum(1)[None, :] - 2.0 * X @ C.T
    return np.maximum(d, 0.0)


def kmeans_plusplus(X, k, rng):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dists(X, centers[:1]).ravel()
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total))
            idx = min(idx, n - 1)
        centers[i] = X[idx]
        closest = np.minimum(closest, _sq_dists(X, centers[i:i + 1]).ravel())
    return centers


def lloyd(X, centers, max_iter=300):
    """Returns (labels, centers, inertia, n_iter)."""
    centers = centers.copy()
    labels = None
    for it in range(1, max_iter + 1):
        d = _sq_dists(X, centers)
        new = d.argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(centers.shape[0]):
            members = labels == j
            if members.any():
                centers[j] = X[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(d[np.arange(len(X)), labels].argmax())
                centers[j] = X[far]
                labels[far] = j
                d[far] = 0.0
    d = _sq_dists(X, centers)
    labels = d.argmin(axis=1)
    inertia = float(d[np.arange(len(X)), labels].sum())
    return labels, centers, inertia, it


def kmeans(points, c, seed=0, n_init=10, max_iter=300):
    """Best-of-``n_init`` k-means++ / Lloyd run. Returns (labels, centroids)."""
    X = np.asarray(getattr(points, "data", points), dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D matrix")
    if c < 1 or X.shape[0] < c:
        raise ValueError(f"need at least c={c} points, got {X.shape[0]}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        labels, centers, inertia, _ = lloyd(X, kmeans_plusplus(X, c, rng), max_iter)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    return best[0], best[1]


def inertia(X, labels, centers):
    X = np.asarray(X, dtype=np.float64)
    return float(((X - centers[labels]) ** 2).sum())

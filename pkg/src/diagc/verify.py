"""Independent oracles and the self-check suite run by ``diagc verify``.

Every oracle here takes a deliberately naive route (dense products, loops,
exhaustive enumeration) so it shares no code path with the fast
implementation it checks.
"""

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import objectives as obj
from .estimator import DIAGC
from .graphdata import MultiViewGraph, SparseAdjacency, normalize
from .metrics import accuracy, ari, nmi

# ------------------------------------------------------------------ oracles


def dense_normalize(raw):
    """D^-1/2 (A + I) D^-1/2 by explicit dense products."""
    A = np.array(raw, dtype=float)
    np.fill_diagonal(A, 0.0)
    A_hat = A + np.eye(len(A))
    D = np.diag(A_hat.sum(axis=1) ** -0.5)
    return D @ A_hat @ D


def exhaustive_accuracy(y_true, y_pred):
    """Max matched fraction over every injective relabeling of predicted clusters."""
    _, t = np.unique(y_true, return_inverse=True)
    _, p = np.unique(y_pred, return_inverse=True)
    kt, kp = int(t.max()) + 1, int(p.max()) + 1
    k = max(kt, kp)
    best = 0
    for perm in itertools.permutations(range(k), kp):
        best = max(best, int(np.sum(np.array(perm)[p] == t)))
    return best / t.size


def pair_counting_ari(y_true, y_pred):
    """ARI by enumerating all N(N-1)/2 pairs."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    n = y_true.size
    tp = fp = fn = tn = 0
    for i in range(n):
        for j in range(i + 1, n):
            st, sp_ = y_true[i] == y_true[j], y_pred[i] == y_pred[j]
            if st and sp_:
                tp += 1
            elif sp_:
                fp += 1
            elif st:
                fn += 1
            else:
                tn += 1
    pairs = tp + fp + fn + tn
    # expected index under fixed margins: (same_true * same_pred) / pairs
    same_true, same_pred = tp + fn, tp + fp
    expected = same_true * same_pred / pairs
    maximum = (same_true + same_pred) / 2
    if maximum == expected:
        return 1.0
    return (tp - expected) / (maximum - expected)


def naive_mutual_information(h, s):
    """Double-loop evaluation of the per-view contrastive mutual information."""
    n = len(h)

    def cos(a, b):
        return float(a @ b) / (max(np.linalg.norm(a), 1e-12) * max(np.linalg.norm(b), 1e-12))

    total = 0.0
    for j in range(n):
        pos = math.exp(cos(h[j], s[j]))
        neg = sum(math.exp(cos(h[j], s[k])) for k in range(n) if k != j)
        total += math.log(pos / neg)
    return total / n


def naive_soft_assign(S, mu, dof=1.0):
    n, c = len(S), len(mu)
    Q = np.zeros((n, c))
    for i in range(n):
        for j in range(c):
            Q[i, j] = (1.0 + np.sum((S[i] - mu[j]) ** 2)) ** (-(dof + 1) / 2)
        Q[i] /= Q[i].sum()
    return Q


def naive_target_distribution(Q):
    n, c = Q.shape
    f = [sum(Q[i, j] for i in range(n)) for j in range(c)]
    P = np.zeros_like(Q)
    for i in range(n):
        denom = sum(Q[i, k] ** 2 / f[k] for k in range(c))
        for j in range(c):
            P[i, j] = Q[i, j] ** 2 / f[j] / denom
    return P


def random_raw_adjacency(rng, n, p=0.3):
    A = (rng.random((n, n)) < p).astype(float)
    A = np.triu(A, 1)
    return A + A.T


def random_instance(rng, n=None, d=5, n_views=2, c=None):
    """Small random multi-view graph for gradient checks."""
    n = n or int(rng.integers(8, 13))
    c = c or int(rng.integers(2, 4))
    views = [SparseAdjacency(random_raw_adjacency(rng, n)) for _ in range(n_views)]
    return MultiViewGraph(rng.standard_normal((n, d)), views), c


def tiny_model(c, seed, **kw):
    params = dict(
        n_clusters=c, alpha=1.0, hidden_dims=(6, 4), mlp_dims=(5, 4), sir_dims=(4, 4, 3),
        sir_activations=("relu", "relu", "identity"), kmeans_n_init=2, random_state=seed,
    )
    params.update(kw)
    return DIAGC(**params)


def full_loss_gradient_error(graph, model, eps=1e-5, atol=1e-4, jitter_seed=0):
    """Max relative error of backward grads of the total loss vs central differences.

    The target distribution is frozen at its initial value, as during a
    training step.
    """
    model.initialize(graph)
    targets = model._targets(graph)
    P = None
    if model.effective_alpha > 0:
        _, _, Q = model._loss_terms(graph, targets)
        P = obj.target_distribution(Q)
    # move biases and centroids to a generic point: zero biases can leave an
    # exactly-zero row in S, where the floored cosine norm is not differentiable
    rng = np.random.default_rng(jitter_seed)
    for name, p in model.params_.items():
        if name == "mu" or ".b" in name:
            p.data = p.data + 0.1 * rng.standard_normal(p.shape)

    def f():
        return model._loss_terms(graph, targets, P)[0]["L"]

    return ad.finite_difference_check(f, model.params_, eps=eps, atol=atol)


# ------------------------------------------------------------------ suite


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def check_normalization(cases=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(1, 21))
        raw = random_raw_adjacency(rng, n, p=rng.uniform(0, 0.6))
        got = normalize(SparseAdjacency(raw)).toarray()
        worst = max(worst, np.abs(got - dense_normalize(raw)).max())
        if np.abs(got - got.T).max() != 0:
            return False, "normalized adjacency not exactly symmetric"
    return worst <= 1e-12, f"max |delta| = {worst:.2e} over {cases} graphs (tol 1e-12)"


def check_gradients(cases=20, seed=0, tol=1e-4):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(cases):
        graph, c = random_instance(rng)
        worst = max(worst, full_loss_gradient_error(graph, tiny_model(c, seed + k)))
    return worst < tol, f"max rel. error = {worst:.2e} over {cases} instances (tol {tol:g})"


def check_accuracy_oracle(cases=1000, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        n = int(rng.integers(1, 13))
        c = int(rng.integers(1, 6))
        yt, yp = rng.integers(0, c, n), rng.integers(0, c, n)
        if accuracy(yt, yp) != exhaustive_accuracy(yt, yp):
            return False, f"mismatch on {yt.tolist()} / {yp.tolist()}"
    return True, f"{cases} cases exact"


def check_ari_oracle(cases=200, seed=0, tol=1e-12):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(2, 201))
        c = int(rng.integers(1, 6))
        yt, yp = rng.integers(0, c, n), rng.integers(0, c, n)
        worst = max(worst, abs(ari(yt, yp) - pair_counting_ari(yt, yp)))
    return worst <= tol, f"max |delta| = {worst:.2e} over {cases} cases (tol {tol:g})"


def check_nmi_anchors():
    y = np.repeat([0, 1], 10)
    ok = nmi(y, y) == 1.0 and nmi(y, np.zeros_like(y)) == 0.0
    return ok, "NMI(identical)=1, NMI(constant vs balanced)=0"


def check_distributions(cases=1000, seed=0):
    rng = np.random.default_rng(seed)
    worst_row, min_kl, worst_self = 0.0, np.inf, 0.0
    for _ in range(cases):
        n, c, d = int(rng.integers(2, 20)), int(rng.integers(2, 6)), int(rng.integers(1, 6))
        S = rng.normal(scale=rng.uniform(0.1, 5), size=(n, d))
        mu = rng.normal(scale=rng.uniform(0.1, 5), size=(c, d))
        Q = obj.soft_assign(S, mu).data
        P = obj.target_distribution(Q)
        worst_row = max(worst_row, np.abs(Q.sum(1) - 1).max(), np.abs(P.sum(1) - 1).max())
        min_kl = min(min_kl, obj.kl_loss(P, Q).item())
        worst_self = max(worst_self, abs(obj.kl_loss(Q, Q).item()))
    ok = worst_row <= 1e-9 and min_kl >= 0 and worst_self < 1e-12
    return ok, f"row-sum err {worst_row:.1e}, min KL(P||Q) {min_kl:.2e}, max KL(Q||Q) {worst_self:.1e}"


CHECKS = (
    ("normalization oracle", check_normalization),
    ("gradient check (full loss)", check_gradients),
    ("accuracy vs exhaustive bijections", check_accuracy_oracle),
    ("ARI vs pair enumeration", check_ari_oracle),
    ("NMI anchors", check_nmi_anchors),
    ("Q/P/KL invariants", check_distributions),
)


def run_all(checks=None):
    results = []
    for name, fn in CHECKS if checks is None else checks:
        t0 = time.perf_counter()
        try:
            passed, detail = fn()
        except Exception as exc:  # an oracle crashing is a failed oracle
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), detail, time.perf_counter() - t0))
    return results

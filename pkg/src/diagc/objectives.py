"""Loss terms: contrastive view/fusion agreement, adjacency reconstruction and
the Student's-t self-training clustering head."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .encoder import glorot_uniform

NORM_FLOOR = 1e-12


def row_normalize(x):
    """Rows scaled to unit length; norms below NORM_FLOOR are floored."""
    sq = ad.clamp_min(ad.row_sum(ad.mul(x, x)), NORM_FLOOR**2)
    return ad.div(x, ad.sqrt(sq))


def cosine_similarity(a, b):
    """(n, m) matrix of cosine similarities between rows of ``a`` and ``b``."""
    return ad.matmul(row_normalize(a), ad.transpose(row_normalize(b)))


def mutual_information(h, S, temperature=1.0):
    """Mean over nodes of log(exp(sim(h_j, s_j)) / sum_{j' != j} exp(sim(h_j, s_j')))."""
    n = S.shape[0]
    if n < 2:
        raise ValueError("mutual information needs at least 2 nodes")
    if h.shape[0] != n:
        raise ValueError(f"row mismatch: {h.shape[0]} vs {n}")
    sim = cosine_similarity(h, S)
    if temperature != 1.0:
        sim = ad.scalar_mul(sim, 1.0 / temperature)
    pos = ad.diag_col(sim)
    neg = ad.logsumexp_rows(sim, mask=~np.eye(n, dtype=bool))
    return ad.scalar_mul(ad.sum_all(ad.sub(pos, neg)), 1.0 / n)


def mim_loss(hs, S, temperature=1.0):
    """Negated sum of per-view mutual information, so minimizing maximizes agreement."""
    total = None
    for h in hs:
        term = mutual_information(h, S, temperature)
        total = term if total is None else ad.add(total, term)
    return ad.scalar_mul(total, -1.0)


@dataclass
class SirConfig:
    """Per-view graph decoder reconstructing view-specific structure.

    ``dims`` are output widths of the r layers; the input width is the
    encoder embedding width.
    """

    dims: tuple = (64, 64, 32)
    activations: tuple = ("relu", "relu", "identity")
    share_weights: bool = False

    def validate(self):
        if len(self.dims) < 1:
            raise ValueError("SIR decoder needs at least one layer")
        if len(self.activations) != len(self.dims):
            raise ValueError("one activation per SIR layer required")
        for kind in self.activations:
            if kind not in ad.ACTIVATIONS:
                raise ValueError(f"unknown activation {kind!r}")


def init_sir(params, rng, in_dim, n_views, cfg):
    cfg.validate()
    dims = [in_dim, *cfg.dims]
    owners = [""] if cfg.share_weights else [f"v{v}." for v in range(n_views)]
    for owner in owners:
        for l, (a, b) in enumerate(zip(dims[:-1], dims[1:]), start=1):
            params.add(f"sir.{owner}theta{l}", glorot_uniform(rng, a, b))


def sir_weights(params, cfg, view):
    owner = "" if cfg.share_weights else f"v{view}."
    return [params[f"sir.{owner}theta{l}"] for l in range(1, len(cfg.dims) + 1)]


def sir_forward(view, h, thetas, activations):
    """R_l = act(A R_{l-1} theta_l), R_0 = h; returns sigmoid(R_r R_r^T)."""
    r = ad.as_tensor(h)
    if r.shape[0] != view.n:
        raise ValueError(f"embedding has {r.shape[0]} rows, view has {view.n} nodes")
    for theta, kind in zip(thetas, activations):
        r = ad.activation(ad.spmm(view, ad.matmul(r, theta)), kind)
    return ad.sigmoid(ad.matmul(r, ad.transpose(r)))


def consensus_reconstruction(h):
    return ad.sigmoid(ad.matmul(h, ad.transpose(h)))


def recon_loss(targets, hs, sir_outputs=None):
    """Sum over views of ||A^v - (sigmoid(H H^T) + A_s^v)||_F^2.

    ``targets`` are dense arrays or adjacency objects. With ``sir_outputs``
    None the specific term is dropped.
    """
    total = None
    for v, (target, h) in enumerate(zip(targets, hs)):
        A = target.toarray() if hasattr(target, "toarray") else np.asarray(target, dtype=float)
        recon = consensus_reconstruction(h)
        if sir_outputs is not None:
            recon = ad.add(recon, sir_outputs[v])
        if recon.shape != A.shape:
            raise ValueError(f"view {v}: reconstruction {recon.shape} vs target {A.shape}")
        term = ad.frobenius_sq(ad.sub(ad.Tensor(A), recon))
        total = term if total is None else ad.add(total, term)
    return total


# -------------------------------------------------------------- clustering head


def soft_assign(S, mu, dof=1.0):
    """Student's-t soft assignment of rows of S to centroids mu."""
    S, mu = ad.as_tensor(S), ad.as_tensor(mu)
    if S.shape[1] != mu.shape[1]:
        raise ValueError(f"embedding width {S.shape[1]} vs centroid width {mu.shape[1]}")
    cols = []
    for j in range(mu.shape[0]):
        centroid = ad.Tensor(mu.data[j:j + 1]) if not mu.requires_grad else _row(mu, j)
        diff = ad.sub(S, centroid)
        cols.append(ad.row_sum(ad.mul(diff, diff)))
    d2 = ad.concat_cols(cols)
    kernel = ad.power(ad.add(d2, 1.0), -(dof + 1.0) / 2.0)
    return ad.div(kernel, ad.row_sum(kernel))


def _row(t, j):
    """Row j of ``t`` as a (1, k) tensor, differentiable."""
    sel = np.zeros((1, t.shape[0]))
    sel[0, j] = 1.0
    return ad.matmul(ad.Tensor(sel), t)


def target_distribution(Q):
    """Sharpened target: q_ij^2 / f_j, renormalized per row; f_j = sum_i q_ij.

    Returns a plain array; it is treated as a constant in training.
    """
    Q = np.asarray(getattr(Q, "data", Q), dtype=np.float64)
    f = Q.sum(axis=0)
    if np.any(f <= 0):
        raise ValueError("a cluster has zero total soft assignment")
    w = Q**2 / f
    return w / w.sum(axis=1, keepdims=True)


def kl_loss(P, Q):
    """KL(P || Q) summed over all rows. Gradient flows to Q only."""
    P = np.asarray(getattr(P, "data", P), dtype=np.float64)
    Q = ad.as_tensor(Q)
    if P.shape != Q.shape:
        raise ValueError(f"shape mismatch {P.shape} vs {Q.shape}")
    if np.any(Q.data <= 0):
        raise ValueError("Q must be strictly positive")
    pos = P > 0
    entropy_term = float(np.sum(P[pos] * np.log(P[pos])))
    cross = ad.sum_all(ad.mul(ad.Tensor(P), ad.log(Q)))
    return ad.sub(entropy_term, cross)


def total_loss(l_i, l_r, l_kl, alpha):
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    out = ad.add(l_i, l_r)
    if l_kl is not None and alpha != 0:
        out = ad.add(out, ad.scalar_mul(l_kl, alpha))
    return out

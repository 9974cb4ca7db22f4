"""The DIAGC clustering estimator: initialization, joint training, prediction
and ablation variants, behind the scikit-learn estimator interface."""

import logging
import time
import zlib
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.exceptions import NotFittedError

from . import autodiff as ad
from . import objectives as obj
from .cluster import kmeans
from .encoder import EncoderConfig, encode, encoder_weights, ge_forward, init_encoder
from .graphdata import MultiViewGraph, SparseAdjacency
from .metrics import evaluate

log = logging.getLogger(__name__)

VARIANTS = ("full", "no_mim", "no_sir", "no_sc")
TERMS = ("L", "L_I", "L_R", "L_KL")


class NumericalError(FloatingPointError):
    """A loss term went non-finite during training."""


def sub_seed(seed, name):
    """Deterministic child seed for a named source of randomness."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def append(self, iteration, seconds, **terms):
        self.records.append({"iteration": iteration, **terms, "seconds": seconds})

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([r[name] for r in self.records])

    def write_table(self, path, delimiter="\t"):
        cols = ("iteration", *TERMS, "seconds")
        with open(path, "w") as fh:
            fh.write(delimiter.join(cols) + "\n")
            for r in self.records:
                fh.write(delimiter.join(repr(r[c]) for c in cols) + "\n")

    @classmethod
    def read_table(cls, path, delimiter="\t"):
        out = cls()
        with open(path) as fh:
            cols = fh.readline().strip().split(delimiter)
            for line in fh:
                vals = line.strip().split(delimiter)
                rec = {c: float(v) for c, v in zip(cols, vals)}
                rec["iteration"] = int(rec["iteration"])
                out.records.append(rec)
        return out


def check_multiview(X, views=None, labels=None):
    """Coerce ``X`` (a MultiViewGraph or feature matrix plus ``views``) to a MultiViewGraph."""
    if isinstance(X, MultiViewGraph):
        if views is not None:
            raise ValueError("pass views either inside the MultiViewGraph or separately, not both")
        return X
    if views is None:
        raise ValueError("a feature matrix needs a list of adjacency views")
    adjs = []
    for v in views:
        if isinstance(v, SparseAdjacency):
            adjs.append(v)
        else:
            m = v.tocsr() if hasattr(v, "tocsr") else np.asarray(v, dtype=float)
            adjs.append(SparseAdjacency(m))
    return MultiViewGraph(np.asarray(X, dtype=np.float64), adjs, labels)


class DIAGC(ClusterMixin, BaseEstimator):
    """Multi-view attributed graph clustering with consensus/specific disentangling.

    A shared graph-convolutional encoder embeds every view, an MLP fuses the
    view embeddings into S, and training jointly minimizes the contrastive
    view/fusion loss, the adjacency reconstruction loss (consensus plus a
    per-view specific decoder) and ``alpha`` times the self-training KL term.
    Final labels come from k-means on S.

    Parameters
    ----------
    n_clusters : int
    alpha : float
        Weight of the KL clustering term.
    max_iter : int
        Number of full-batch optimizer steps.
    ablation : {"full", "no_mim", "no_sir", "no_sc"}
        ``no_mim`` replaces S by the mean view embedding and drops the
        contrastive term; ``no_sir`` drops the specific decoder; ``no_sc``
        drops the KL term.
    recon_target : {"normalized", "raw"}
        Which adjacency the reconstruction loss targets.
    assign : {"kmeans", "argmax"}
        Final labels from k-means on S or argmax of the soft assignment.
    """

    def __init__(
        self,
        n_clusters=3,
        alpha=0.01,
        max_iter=400,
        learning_rate=1e-3,
        beta1=0.9,
        beta2=0.999,
        adam_eps=1e-8,
        hidden_dims=(256, 64),
        encoder_activations=("relu", "identity"),
        mlp_dims=(128, 64),
        mlp_activations=("relu", "identity"),
        sir_dims=(64, 64, 32),
        sir_activations=("relu", "relu", "identity"),
        share_encoder_weights=True,
        share_sir_weights=False,
        dof=1.0,
        temperature=1.0,
        ablation="full",
        p_update_every=1,
        recon_target="normalized",
        assign="kmeans",
        kmeans_n_init=10,
        random_state=0,
        verbose=0,
    ):
        self.n_clusters = n_clusters
        self.alpha = alpha
        self.max_iter = max_iter
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.hidden_dims = hidden_dims
        self.encoder_activations = encoder_activations
        self.mlp_dims = mlp_dims
        self.mlp_activations = mlp_activations
        self.sir_dims = sir_dims
        self.sir_activations = sir_activations
        self.share_encoder_weights = share_encoder_weights
        self.share_sir_weights = share_sir_weights
        self.dof = dof
        self.temperature = temperature
        self.ablation = ablation
        self.p_update_every = p_update_every
        self.recon_target = recon_target
        self.assign = assign
        self.kmeans_n_init = kmeans_n_init
        self.random_state = random_state
        self.verbose = verbose

    # ------------------------------------------------------------ config

    def _validate_params(self):
        if self.ablation not in VARIANTS:
            raise ValueError(f"unknown ablation variant {self.ablation!r}; expected one of {VARIANTS}")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if int(self.n_clusters) < 2:
            raise ValueError("n_clusters must be >= 2")
        if self.dof <= 0:
            raise ValueError("dof must be > 0")
        if int(self.p_update_every) < 1:
            raise ValueError("p_update_every must be >= 1")
        if self.recon_target not in ("normalized", "raw"):
            raise ValueError(f"unknown recon_target {self.recon_target!r}")
        if self.assign not in ("kmeans", "argmax"):
            raise ValueError(f"unknown assign {self.assign!r}")
        self.encoder_config_ = EncoderConfig(
            tuple(self.hidden_dims),
            tuple(self.encoder_activations),
            tuple(self.mlp_dims),
            tuple(self.mlp_activations),
            bool(self.share_encoder_weights),
        )
        self.sir_config_ = obj.SirConfig(
            tuple(self.sir_dims), tuple(self.sir_activations), bool(self.share_sir_weights)
        )
        self.encoder_config_.validate()
        self.sir_config_.validate()

    @property
    def effective_alpha(self):
        return 0.0 if self.ablation == "no_sc" else float(self.alpha)

    # ------------------------------------------------------------ forward

    def _embed(self, graph):
        """Per-view H and the clustering representation (S, or the mean of H for no_mim)."""
        views = graph.normalized_views
        cfg = self.encoder_config_
        if self.ablation == "no_mim":
            Xt = ad.Tensor(graph.features)
            hs = [
                ge_forward(view, Xt, encoder_weights(self.params_, cfg, v), cfg.activations)
                for v, view in enumerate(views)
            ]
            return hs, ad.mean_of(hs)
        emb = encode(self.params_, cfg, graph.features, views)
        return emb.hs, emb.S

    def _loss_terms(self, graph, targets, P=None):
        hs, S = self._embed(graph)
        terms = {}
        terms["L_I"] = (
            None if self.ablation == "no_mim" else obj.mim_loss(hs, S, self.temperature)
        )
        sir = None
        if self.ablation != "no_sir":
            sir = [
                obj.sir_forward(
                    view, h, obj.sir_weights(self.params_, self.sir_config_, v),
                    self.sir_config_.activations,
                )
                for v, (view, h) in enumerate(zip(graph.normalized_views, hs))
            ]
        terms["L_R"] = obj.recon_loss(targets, hs, sir)
        Q = None
        terms["L_KL"] = None
        if self.effective_alpha > 0:
            Q = obj.soft_assign(S, self.params_["mu"], self.dof)
            if P is None:
                P = obj.target_distribution(Q)
            terms["L_KL"] = obj.kl_loss(P, Q)
        loss = terms["L_R"]
        if terms["L_I"] is not None:
            loss = ad.add(loss, terms["L_I"])
        if terms["L_KL"] is not None:
            loss = ad.add(loss, ad.scalar_mul(terms["L_KL"], self.effective_alpha))
        terms["L"] = loss
        return terms, S, Q

    def _targets(self, graph):
        if self.recon_target == "raw":
            return [a.toarray() for a in graph.views]
        return [a.toarray() for a in graph.normalized_views]

    # ------------------------------------------------------------ fitting

    def _initialize(self, graph):
        self._validate_params()
        if graph.n < self.n_clusters:
            raise ValueError(f"{graph.n} nodes cannot form {self.n_clusters} clusters")
        rng = np.random.default_rng(sub_seed(self.random_state, "init"))
        self.params_ = ad.ParamStore()
        cfg = self.encoder_config_
        init_encoder(self.params_, rng, graph.features.shape[1], graph.n_views, cfg)
        if self.ablation == "no_mim":
            for k in [k for k in self.params_ if k.startswith("mlp.")]:
                del self.params_[k]
        if self.ablation != "no_sir":
            obj.init_sir(self.params_, rng, cfg.hidden_dims[-1], graph.n_views, self.sir_config_)
        _, S = self._embed(graph)
        _, centroids = kmeans(
            S.data, self.n_clusters, seed=sub_seed(self.random_state, "kmeans-init"),
            n_init=self.kmeans_n_init,
        )
        self.params_.add("mu", centroids)
        self.adam_ = ad.AdamState(self.learning_rate, self.beta1, self.beta2, self.adam_eps)
        self.n_features_in_ = graph.features.shape[1]
        self.n_views_ = graph.n_views
        return self

    def initialize(self, X, y=None, views=None):
        """Random weights plus k-means centroids on the initial S; no training."""
        graph = check_multiview(X, views)
        self._initialize(graph)
        self.history_ = TrainHistory()
        self._finalize(graph)
        return self

    def fit(self, X, y=None, views=None):
        graph = check_multiview(X, views)
        self._initialize(graph)
        self.history_ = TrainHistory()
        targets = self._targets(graph)
        P = None
        start = time.perf_counter()
        for t in range(1, int(self.max_iter) + 1):
            refresh = (t - 1) % int(self.p_update_every) == 0
            try:
                terms, _, Q = self._loss_terms(graph, targets, None if refresh else P)
            except FloatingPointError as exc:
                raise NumericalError(f"iteration {t}: {exc}") from exc
            if Q is not None and refresh:
                P = obj.target_distribution(Q)
            values = {k: (0.0 if v is None else v.item()) for k, v in terms.items()}
            bad = [k for k, v in values.items() if not np.isfinite(v)]
            if bad:
                raise NumericalError(f"iteration {t}: non-finite loss term(s) {', '.join(bad)}")
            self.params_.zero_grad()
            ad.backward(terms["L"], self.params_)
            ad.adam_step(self.params_, self.adam_)
            self.history_.append(t, time.perf_counter() - start, **values)
            if self.verbose and (t == 1 or t % max(1, int(self.verbose)) == 0):
                log.info("iter %d  L=%.6g  L_I=%.6g  L_R=%.6g  L_KL=%.6g", t, *(values[k] for k in TERMS))
        self._finalize(graph)
        return self

    def _finalize(self, graph):
        self.labels_ = self._assign(graph)
        self.cluster_centers_ = self.params_["mu"].data.copy()

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("this DIAGC instance is not fitted yet; call fit first")

    def transform(self, X, views=None):
        """Clustering representation S (mean view embedding for ``no_mim``)."""
        self._check_fitted()
        graph = check_multiview(X, views)
        return self._embed(graph)[1].data.copy()

    def soft_assignments(self, X, views=None):
        S = self.transform(X, views)
        return obj.soft_assign(S, self.params_["mu"].data, self.dof).data

    def _assign(self, graph):
        S = self._embed(graph)[1].data
        if self.assign == "argmax":
            return obj.soft_assign(S, self.params_["mu"].data, self.dof).data.argmax(axis=1)
        labels, _ = kmeans(
            S, self.n_clusters, seed=sub_seed(self.random_state, "kmeans"), n_init=self.kmeans_n_init
        )
        return labels

    def predict(self, X, views=None):
        self._check_fitted()
        return self._assign(check_multiview(X, views))

    def fit_predict(self, X, y=None, views=None):
        return self.fit(X, y, views=views).labels_

    def loss(self, X, views=None):
        """Current total loss and its terms, evaluated without training."""
        self._check_fitted()
        graph = check_multiview(X, views)
        terms, _, _ = self._loss_terms(graph, self._targets(graph))
        return {k: (0.0 if v is None else v.item()) for k, v in terms.items()}

    # ------------------------------------------------------------ persistence

    def save_checkpoint(self, path):
        self._check_fitted()
        extra = {
            "estimator_params": _jsonable(self.get_params()),
            "n_features_in": int(self.n_features_in_),
            "n_views": int(self.n_views_),
        }
        ad.save_checkpoint(path, self.params_, self.adam_, extra)

    @classmethod
    def load_checkpoint(cls, path):
        params, adam, extra = ad.load_checkpoint(path)
        est = cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in extra["estimator_params"].items()})
        est._validate_params()
        est.params_ = params
        est.adam_ = adam or ad.AdamState(est.learning_rate, est.beta1, est.beta2, est.adam_eps)
        est.n_features_in_ = extra["n_features_in"]
        est.n_views_ = extra["n_views"]
        est.cluster_centers_ = params["mu"].data.copy()
        return est


def _jsonable(params):
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()}


# ------------------------------------------------------------------ functional


def train(graph, **params):
    """Fit a DIAGC model; returns ``(model, history)``."""
    model = DIAGC(**params).fit(graph)
    return model, model.history_


def predict(model, graph):
    return model.predict(graph)


def ablate(graph, variant, **params):
    """Train one ablation variant and evaluate it against ``graph.labels``."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}; expected one of {VARIANTS}")
    if graph.labels is None:
        raise ValueError("ablation needs ground-truth labels")
    params = {**params, "ablation": variant}
    model = DIAGC(**params).fit(graph)
    notes = {"alpha_effective": model.effective_alpha}
    if variant == "no_sc" and params.get("alpha", 0.01) > 0:
        notes["alpha_overridden"] = True
    return evaluate(
        graph.labels, model.labels_, seed=model.random_state, variant=variant,
        config=_jsonable(model.get_params()), notes=notes,
    )

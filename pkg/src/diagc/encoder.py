"""Graph-convolutional view encoder and the MLP that fuses views into S."""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


@dataclass
class EncoderConfig:
    """Widths for the view encoder and fusion MLP.

    ``hidden_dims`` excludes the input feature dimension, so the encoder has
    ``len(hidden_dims)`` layers. The fusion MLP input width is
    ``n_views * hidden_dims[-1]``.
    """

    hidden_dims: tuple = (256, 64)
    activations: tuple = ("relu", "identity")
    mlp_dims: tuple = (128, 64)
    mlp_activations: tuple = ("relu", "identity")
    share_weights: bool = True

    def validate(self):
        if len(self.hidden_dims) < 1:
            raise ValueError("encoder needs at least one layer")
        if len(self.activations) != len(self.hidden_dims):
            raise ValueError("one activation per encoder layer required")
        if len(self.mlp_dims) < 1 or len(self.mlp_activations) != len(self.mlp_dims):
            raise ValueError("one activation per MLP layer required")
        if self.mlp_dims[-1] != self.hidden_dims[-1]:
            raise ValueError(
                "fusion output width must equal the view embedding width "
                f"({self.mlp_dims[-1]} != {self.hidden_dims[-1]}) for cosine similarity"
            )
        for kind in tuple(self.activations) + tuple(self.mlp_activations):
            if kind not in ad.ACTIVATIONS:
                raise ValueError(f"unknown activation {kind!r}")


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_encoder(params, rng, n_features, n_views, cfg):
    """Register encoder and fusion weights in ``params``."""
    cfg.validate()
    dims = [n_features, *cfg.hidden_dims]
    owners = [""] if cfg.share_weights else [f"v{v}." for v in range(n_views)]
    for owner in owners:
        for l, (a, b) in enumerate(zip(dims[:-1], dims[1:]), start=1):
            params.add(f"enc.{owner}W{l}", glorot_uniform(rng, a, b))
    mdims = [n_views * cfg.hidden_dims[-1], *cfg.mlp_dims]
    for l, (a, b) in enumerate(zip(mdims[:-1], mdims[1:]), start=1):
        params.add(f"mlp.W{l}", glorot_uniform(rng, a, b))
        params.add(f"mlp.b{l}", np.zeros((1, b)))


def encoder_weights(params, cfg, view):
    owner = "" if cfg.share_weights else f"v{view}."
    return [params[f"enc.{owner}W{l}"] for l in range(1, len(cfg.hidden_dims) + 1)]


def mlp_weights(params, cfg):
    return [
        (params[f"mlp.W{l}"], params[f"mlp.b{l}"]) for l in range(1, len(cfg.mlp_dims) + 1)
    ]


def ge_forward(view, X, weights, activations):
    """Z_l = act(A Z_{l-1} W_l) with Z_0 = X; returns the last Z."""
    if len(weights) != len(activations):
        raise ValueError("one activation per layer required")
    z = ad.as_tensor(X)
    if z.shape[0] != view.n:
        raise ValueError(f"features have {z.shape[0]} rows, view has {view.n} nodes")
    for W, kind in zip(weights, activations):
        z = ad.activation(ad.spmm(view, ad.matmul(z, W)), kind)
    return z


def fuse(hs, weights, activations):
    """S = MLP(concat_cols(H^1, ..., H^V)).

    ``weights`` is a list of ``W`` or ``(W, b)`` per fully connected layer.
    """
    if not hs:
        raise ValueError("fuse needs at least one view embedding")
    widths = {h.shape[1] for h in hs}
    if len(widths) != 1:
        raise ValueError(f"view embeddings have inconsistent widths {sorted(widths)}")
    x = ad.concat_cols(hs)
    for layer, kind in zip(weights, activations):
        W, b = layer if isinstance(layer, tuple) else (layer, None)
        if W.shape[0] != x.shape[1]:
            raise ValueError(f"MLP layer expects width {W.shape[0]}, got {x.shape[1]}")
        x = ad.matmul(x, W)
        if b is not None:
            x = ad.add(x, b)
        x = ad.activation(x, kind)
    return x


@dataclass
class Embeddings:
    hs: list
    S: ad.Tensor
    extras: dict = field(default_factory=dict)


def encode(params, cfg, X, views):
    """Forward every view through the encoder, then fuse."""
    Xt = ad.Tensor(X)
    hs = [
        ge_forward(view, Xt, encoder_weights(params, cfg, v), cfg.activations)
        for v, view in enumerate(views)
    ]
    S = fuse(hs, mlp_weights(params, cfg), cfg.mlp_activations)
    return Embeddings(hs, S)

"""Dense 2-D tensors with a reverse-mode tape, plus Adam and a gradient checker.

Every tensor is a float64 matrix. Scalars are 1x1 matrices. Broadcasting is
limited to row vectors (1, k), column vectors (n, 1) and 1x1 scalars.
"""

import json
from collections import OrderedDict

import numpy as np
import scipy.sparse as sp

LOG_FLOOR = 1e-12
CHECKPOINT_FORMAT = "diagc-checkpoint"
CHECKPOINT_VERSION = 1


class Tensor:
    """A dense matrix node in a computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"Tensor must be at most 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self):
        return self.data.copy()

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = False
    out._parents = ()
    out._backward = None
    out.name = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _check_finite(data, op):
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite value produced by {op}")
    return data


def _broadcast_shape(a, b, op):
    (ra, ca), (rb, cb) = a, b
    if ra != rb and 1 not in (ra, rb):
        raise ValueError(f"{op}: incompatible shapes {a} and {b}")
    if ca != cb and 1 not in (ca, cb):
        raise ValueError(f"{op}: incompatible shapes {a} and {b}")
    return max(ra, rb), max(ca, cb)


def _unbroadcast(grad, shape):
    if grad.shape[0] != shape[0]:
        grad = grad.sum(axis=0, keepdims=True)
    if grad.shape[1] != shape[1]:
        grad = grad.sum(axis=1, keepdims=True)
    return grad


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "div")
    if np.any(b.data == 0):
        raise ZeroDivisionError("div: zero in denominator")
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * out / b.data, b.shape)
        return ga, gb

    return _result(out, (a, b), backward)


def elementwise(a, b, kind):
    try:
        op = {"add": add, "sub": sub, "mul": mul, "div": div}[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    return op(a, b)


def scalar_mul(a, c):
    a, c = as_tensor(a), float(c)

    def backward(g):
        return (g * c,)

    return _result(a.data * c, (a,), backward)


def power(a, p):
    """Elementwise a**p for a constant exponent; a must be positive when p is fractional."""
    a, p = as_tensor(a), float(p)
    if not float(p).is_integer() and np.any(a.data <= 0):
        raise ValueError("power: non-positive base with fractional exponent")
    out = _check_finite(a.data**p, "power")

    def backward(g):
        return (g * p * a.data ** (p - 1.0),)

    return _result(out, (a,), backward)


def sqrt(a):
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise ValueError("sqrt of negative value")
    out = np.sqrt(a.data)

    def backward(g):
        return (g / (2.0 * out),)

    return _result(out, (a,), backward)


def log(a):
    """Natural log with inputs floored at LOG_FLOOR; rejects non-positive inputs."""
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise ValueError("log of non-positive value")
    x = np.maximum(a.data, LOG_FLOOR)
    mask = a.data >= LOG_FLOOR

    def backward(g):
        return (g * mask / x,)

    return _result(np.log(x), (a,), backward)


def exp(a):
    a = as_tensor(a)
    out = _check_finite(np.exp(a.data), "exp")

    def backward(g):
        return (g * out,)

    return _result(out, (a,), backward)


def clamp_min(a, floor):
    a = as_tensor(a)
    mask = a.data >= floor

    def backward(g):
        return (g * mask,)

    return _result(np.maximum(a.data, floor), (a,), backward)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return _result(x.data * mask, (x,), backward)


def sigmoid(x):
    x = as_tensor(x)
    # numerically stable for large |x|
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _result(out, (x,), backward)


def identity(x):
    return as_tensor(x)


ACTIVATIONS = ("relu", "sigmoid", "identity")


def activation(x, kind):
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind in ("identity", "linear", None):
        return identity(x)
    raise ValueError(f"unknown activation {kind!r}")


# ------------------------------------------------------------------ products


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _result(a.data @ b.data, (a, b), backward)


def spmm(adj, b):
    """Constant sparse (or dense) matrix times tensor; no gradient w.r.t. ``adj``."""
    b = as_tensor(b)
    mat = getattr(adj, "matrix", adj)
    if mat.shape[1] != b.shape[0]:
        raise ValueError(f"spmm: shape mismatch {mat.shape} @ {b.shape}")
    if sp.issparse(mat):
        mat = mat.tocsr()
        mat_t = mat.T.tocsr()
    else:
        mat = np.asarray(mat, dtype=np.float64)
        mat_t = mat.T

    def backward(g):
        return (np.asarray(mat_t @ g),)

    return _result(np.asarray(mat @ b.data), (b,), backward)


def transpose(a):
    a = as_tensor(a)

    def backward(g):
        return (g.T,)

    return _result(a.data.T.copy(), (a,), backward)


def concat_cols(tensors):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat_cols needs at least one tensor")
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1:
        raise ValueError(f"concat_cols: row counts differ {sorted(rows)}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward(g):
        return tuple(g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _result(np.hstack([t.data for t in tensors]), tuple(tensors), backward)


def mean_of(tensors):
    """Elementwise mean of equally shaped tensors."""
    total = tensors[0]
    for t in tensors[1:]:
        total = add(total, t)
    return scalar_mul(total, 1.0 / len(tensors))


# ---------------------------------------------------------------- reductions


def sum_all(a):
    a = as_tensor(a)

    def backward(g):
        return (np.full(a.shape, g[0, 0]),)

    return _result(a.data.sum().reshape(1, 1), (a,), backward)


def row_sum(a):
    a = as_tensor(a)

    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(a.data.sum(axis=1, keepdims=True), (a,), backward)


def col_sum(a):
    a = as_tensor(a)

    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(a.data.sum(axis=0, keepdims=True), (a,), backward)


def frobenius_sq(a):
    a = as_tensor(a)

    def backward(g):
        return (2.0 * g[0, 0] * a.data,)

    return _result(np.sum(a.data * a.data).reshape(1, 1), (a,), backward)


def logsumexp_rows(a, mask=None):
    """Row-wise log(sum(exp(a))) over entries where ``mask`` is True.

    Uses max-subtraction. Every row must keep at least one entry.
    """
    a = as_tensor(a)
    if mask is None:
        mask = np.ones(a.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ValueError("logsumexp_rows: mask shape mismatch")
    if not mask.any(axis=1).all():
        raise ValueError("logsumexp_rows: a row has no unmasked entries")
    masked = np.where(mask, a.data, -np.inf)
    m = masked.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(masked - m), 0.0)
    s = e.sum(axis=1, keepdims=True)
    soft = e / s

    def backward(g):
        return (g * soft,)

    return _result(m + np.log(s), (a,), backward)


def diag_col(a):
    """Diagonal of a square tensor as an (n, 1) column."""
    a = as_tensor(a)
    n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError("diag_col needs a square tensor")

    def backward(g):
        out = np.zeros(a.shape)
        out[np.arange(n), np.arange(n)] = g[:, 0]
        return (out,)

    return _result(np.diag(a.data).reshape(-1, 1).copy(), (a,), backward)


# ------------------------------------------------------------------ backward


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss, params=None):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    When ``params`` is given, parameters the loss does not depend on get a
    zero gradient so every parameter ends up holding one.
    """
    if loss.shape != (1, 1):
        raise ValueError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    grads = {id(loss): np.ones((1, 1))}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    if params is not None:
        for p in params.values():
            if p.grad is None:
                p.grad = np.zeros(p.shape)


# ------------------------------------------------------------------ params


class ParamStore(OrderedDict):
    """Named trainable tensors. Shapes are fixed once registered."""

    def add(self, name, value):
        if name in self:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = True
        t.name = name
        self[name] = t
        return t

    def zero_grad(self):
        for p in self.values():
            p.grad = None

    def state(self):
        return {k: v.data.copy() for k, v in self.items()}

    def load_state(self, state):
        for k, arr in state.items():
            arr = np.asarray(arr, dtype=np.float64)
            if self[k].shape != arr.shape:
                raise ValueError(f"shape mismatch for {k}: {self[k].shape} vs {arr.shape}")
            self[k].data = arr.copy()


class AdamState:
    """Adam moments, step counter and hyperparameters."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {}
        self.v = {}


def adam_step(params, state):
    """One bias-corrected Adam update in place; gradients are cleared afterwards."""
    missing = [k for k, p in params.items() if p.grad is None]
    if missing:
        raise ValueError(f"missing gradients for {missing}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for k, p in params.items():
        g = p.grad
        if k not in state.m:
            state.m[k] = np.zeros_like(p.data)
            state.v[k] = np.zeros_like(p.data)
        m = state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        if state.lr != 0.0:
            p.data = p.data - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.grad = None
    return params


def finite_difference_check(f, params, eps=1e-5, atol=1e-6):
    """Worst per-coordinate relative error between backward grads and central differences.

    ``f`` is a zero-argument callable that rebuilds the scalar loss from the
    current parameter values. The relative error of a coordinate is
    ``|a - n| / max(|a|, |n|, atol)``.
    """
    if not eps > 0:
        raise ValueError(f"invalid epsilon {eps!r}")
    params.zero_grad()
    backward(f(), params)
    analytic = {k: p.grad.copy() for k, p in params.items()}
    params.zero_grad()
    worst = 0.0
    for k, p in params.items():
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f().item()
            flat[i] = orig - eps
            down = f().item()
            flat[i] = orig
            num = (up - down) / (2.0 * eps)
            a = analytic[k].reshape(-1)[i]
            err = abs(a - num) / max(abs(a), abs(num), atol)
            worst = max(worst, err)
    return worst


# --------------------------------------------------------------- checkpoint


def save_checkpoint(path, params, adam=None, extra=None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "params": {
            k: {"shape": list(p.shape), "values": p.data.ravel().tolist()}
            for k, p in params.items()
        },
    }
    if adam is not None:
        doc["adam"] = {
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "step": adam.step,
            "m": {k: v.ravel().tolist() for k, v in adam.m.items()},
            "v": {k: v.ravel().tolist() for k, v in adam.v.items()},
        }
    if extra is not None:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """Returns ``(params, adam_state_or_None, extra_or_None)``."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    params = ParamStore()
    shapes = {}
    for k, entry in doc["params"].items():
        shape = tuple(entry["shape"])
        shapes[k] = shape
        params.add(k, np.asarray(entry["values"], dtype=np.float64).reshape(shape))
    adam = None
    if "adam" in doc:
        a = doc["adam"]
        adam = AdamState(a["lr"], a["beta1"], a["beta2"], a["eps"])
        adam.step = a["step"]
        adam.m = {k: np.asarray(v).reshape(shapes[k]) for k, v in a["m"].items()}
        adam.v = {k: np.asarray(v).reshape(shapes[k]) for k, v in a["v"].items()}
    return params, adam, doc.get("extra")

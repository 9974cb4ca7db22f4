"""Clustering metrics: ACC (optimal matching), mapped macro-F1, NMI and ARI."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment


def _check(y_true, y_pred):
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if y_true.size != y_pred.size:
        raise ValueError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size == 0:
        raise ValueError("empty label vectors")
    _, t = np.unique(y_true, return_inverse=True)
    _, p = np.unique(y_pred, return_inverse=True)
    return t.ravel(), p.ravel()


def contingency(y_true, y_pred):
    """Counts table, rows = true classes, columns = predicted clusters."""
    t, p = _check(y_true, y_pred)
    table = np.zeros((t.max() + 1, p.max() + 1), dtype=np.int64)
    np.add.at(table, (t, p), 1)
    return table


def best_mapping(y_true, y_pred):
    """Optimal cluster -> class assignment maximizing matched count.

    Ties between count-optimal assignments are broken by the summed per-pair
    F1, so the mapped F1 does not depend on how clusters are numbered.
    Returns ``(table, mapping)`` where ``mapping[cluster] = class`` or -1
    for clusters left unmatched.
    """
    table = contingency(y_true, y_pred)
    k = max(table.shape)
    pair_f1 = 2.0 * table / (table.sum(1)[:, None] + table.sum(0)[None, :])
    # the F1 sum is < k + 1, so it cannot outweigh one extra matched node
    score = np.zeros((k, k))
    score[: table.shape[0], : table.shape[1]] = table * (k + 1.0) + pair_f1
    rows, cols = linear_sum_assignment(score, maximize=True)
    mapping = np.full(table.shape[1], -1)
    for r, c in zip(rows, cols):
        if c < table.shape[1] and r < table.shape[0]:
            mapping[c] = r
    return table, mapping


def accuracy(y_true, y_pred):
    table, mapping = best_mapping(y_true, y_pred)
    matched = sum(table[mapping[c], c] for c in range(table.shape[1]) if mapping[c] >= 0)
    return float(matched) / table.sum()


def f1_score(y_true, y_pred, average="macro"):
    """Macro F1 over true classes after the accuracy-optimal mapping.

    ``average="pairwise"`` gives the pair-counting F1 instead.
    """
    if average == "pairwise":
        return _pairwise_f1(y_true, y_pred)
    if average != "macro":
        raise ValueError(f"unknown average {average!r}")
    table, mapping = best_mapping(y_true, y_pred)
    scores = []
    for k in range(table.shape[0]):
        clusters = np.flatnonzero(mapping == k)
        tp = table[k, clusters].sum()
        predicted = table[:, clusters].sum()
        actual = table[k].sum()
        if tp == 0:
            scores.append(0.0)
            continue
        pr, re = tp / predicted, tp / actual
        scores.append(2 * pr * re / (pr + re))
    return float(np.mean(scores))


def _pair_counts(table):
    n = table.sum()
    same_both = (table * (table - 1)).sum() // 2
    same_true = (table.sum(1) * (table.sum(1) - 1)).sum() // 2
    same_pred = (table.sum(0) * (table.sum(0) - 1)).sum() // 2
    tp = same_both
    fp = same_pred - same_both
    fn = same_true - same_both
    tn = n * (n - 1) // 2 - tp - fp - fn
    return int(tp), int(fp), int(fn), int(tn)


def _pairwise_f1(y_true, y_pred):
    tp, fp, fn, _ = _pair_counts(contingency(y_true, y_pred))
    if tp == 0:
        return 0.0
    pr, re = tp / (tp + fp), tp / (tp + fn)
    return 2 * pr * re / (pr + re)


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(y_true, y_pred):
    """Mutual information over the arithmetic mean of the two entropies."""
    table = contingency(y_true, y_pred)
    n = table.sum()
    a, b = table.sum(1), table.sum(0)
    nz = table > 0
    outer = np.outer(a, b)
    mi = float((table[nz] / n * np.log(n * table[nz] / outer[nz])).sum())
    h = _entropy(a, n) + _entropy(b, n)
    if h == 0:
        return 1.0  # both partitions are a single cluster
    return float(np.clip(2.0 * mi / h, 0.0, 1.0))


def ari(y_true, y_pred):
    """Adjusted Rand index under the fixed-margins permutation model."""
    table = contingency(y_true, y_pred)
    n = int(table.sum())
    if n < 2:
        raise ValueError("ARI needs at least 2 samples")
    pairs = n * (n - 1) / 2.0
    index = (table * (table - 1)).sum() / 2.0
    sa = (table.sum(1) * (table.sum(1) - 1)).sum() / 2.0
    sb = (table.sum(0) * (table.sum(0) - 1)).sum() / 2.0
    expected = sa * sb / pairs
    maximum = (sa + sb) / 2.0
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def rand_index(y_true, y_pred):
    tp, fp, fn, tn = _pair_counts(contingency(y_true, y_pred))
    return (tp + tn) / (tp + fp + fn + tn)


METRIC_NAMES = ("acc", "f1", "nmi", "ari")


@dataclass
class MetricsReport:
    acc: float
    f1: float
    nmi: float
    ari: float
    n: int
    c: int
    seed: int = None
    variant: str = "full"
    config: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def evaluate(y_true, y_pred, seed=None, variant="full", config=None, notes=None):
    t, _ = _check(y_true, y_pred)
    return MetricsReport(
        acc=accuracy(y_true, y_pred),
        f1=f1_score(y_true, y_pred),
        nmi=nmi(y_true, y_pred),
        ari=ari(y_true, y_pred),
        n=int(t.size),
        c=int(t.max()) + 1,
        seed=seed,
        variant=variant,
        config=dict(config or {}),
        notes=dict(notes or {}),
    )


def aggregate(reports):
    """Mean and standard deviation of each metric over a list of reports."""
    if not reports:
        raise ValueError("nothing to aggregate")
    out = {"runs": len(reports), "variant": reports[0].variant}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r, name) for r in reports])
        out[name] = float(vals.mean())
        out[f"{name}_std"] = float(vals.std())
    return out

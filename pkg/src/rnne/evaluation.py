"""Evaluation tasks: reconstruction ranking, link prediction, classification.

All three tasks score embeddings by how well geometry recovers structure.
Reconstruction ranks every live node pair by embedding distance and checks
the top of the list against the true edge set.  Link prediction does the
same after part of the edges were hidden from training, excluding the edges
the model could see.  Classification trains a small linear classifier on a
fraction of labeled nodes and reports micro/macro F1 on the rest.
"""

import dataclasses
import logging

import numpy as np

from .exceptions import ValidationError
from .graphs import GraphSnapshot

log = logging.getLogger(__name__)


@dataclasses.dataclass
class RankedPairList:
    """Unordered node pairs sorted by ascending embedding distance.

    Ties break by (i, j) lexicographic order so the ranking is a total
    order; ``excluded`` records the pairs that were left out.
    """

    pairs: np.ndarray
    distances: np.ndarray
    excluded: frozenset

    def __len__(self):
        return len(self.distances)

    def __iter__(self):
        for (i, j), dist in zip(self.pairs, self.distances):
            yield int(i), int(j), float(dist)

    def top(self, k):
        return [(int(i), int(j)) for i, j in self.pairs[:k]]


@dataclasses.dataclass
class F1Report:
    micro_f1: float
    macro_f1: float
    precision: dict
    recall: dict
    train_fraction: float = None


def normalize_pair(i, j):
    """Canonical unordered form (min, max); self-pairs are invalid."""
    i, j = int(i), int(j)
    if i == j:
        raise ValidationError(f"self-pair ({i},{i}) is not a rankable pair")
    return (i, j) if i < j else (j, i)


def rank_pairs(y, live_mask=None, exclude=()):
    """Rank all unordered live node pairs by Euclidean embedding distance.

    Distance ties order by (i, j); excluded pairs never appear.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValidationError(f"expected (N, d) embeddings, got shape {y.shape}")
    n = y.shape[0]
    if live_mask is None:
        live_mask = np.ones(n, dtype=bool)
    live = np.flatnonzero(live_mask)
    if live.size < 2:
        raise ValidationError("need at least 2 live nodes to rank pairs")
    ii, jj = np.triu_indices(live.size, k=1)
    pi, pj = live[ii], live[jj]
    if exclude:
        excl = frozenset(normalize_pair(a, b) for a, b in exclude)
        keep = np.fromiter(
            ((int(a), int(b)) not in excl for a, b in zip(pi, pj)),
            dtype=bool, count=pi.size,
        )
        pi, pj = pi[keep], pj[keep]
    else:
        excl = frozenset()
    diff = y[pi] - y[pj]
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    order = np.lexsort((pj, pi, dist))
    return RankedPairList(
        pairs=np.column_stack([pi, pj])[order],
        distances=dist[order],
        excluded=excl,
    )


def precision_at_k(ranked, truth, k):
    """Fraction of the k nearest pairs that are true edges."""
    if not 1 <= k <= len(ranked):
        raise ValidationError(f"k={k} outside [1, {len(ranked)}]")
    truth = {normalize_pair(a, b) for a, b in truth}
    hits = sum(1 for i, j in ranked.top(k) if (i, j) in truth)
    return hits / k


def hide_edges(snapshot, fraction=0.15, seed=0):
    """Split a snapshot into an observed copy and a hidden edge set.

    Uniformly removes floor(fraction * |E|) edges without replacement;
    deterministic by seed.  The observed snapshot keeps the same node ids
    and time index.
    """
    if not 0 < fraction < 1:
        raise ValidationError(f"fraction must be in (0,1), got {fraction}")
    edges = [(i, j) for i, j, _ in snapshot.edges()]
    if not edges:
        raise ValidationError("snapshot has no edges to hide")
    n_hide = int(fraction * len(edges))
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(edges), size=n_hide, replace=False)
    hidden = {edges[p] for p in picked}
    adj = snapshot.adjacency.copy()
    for i, j in hidden:
        adj[i, j] = 0.0
        adj[j, i] = 0.0
    observed = GraphSnapshot(
        snapshot.time_index, snapshot.node_ids, adj, directed=snapshot.directed
    )
    return observed, hidden


def link_prediction_eval(ys, originals, hidden_sets, ks):
    """precision@k for recovering hidden edges, averaged over snapshots.

    ``ys`` are embeddings trained on the observed (post-hiding) series;
    pairs still present in the observed graph are excluded from the ranking
    so only unseen pairs compete.
    """
    if not len(ys) == len(originals) == len(hidden_sets):
        raise ValidationError("ys, originals, hidden_sets must align")
    per_snapshot = []
    for y, snap, hidden in zip(ys, originals, hidden_sets):
        hidden = {normalize_pair(a, b) for a, b in hidden}
        observed = {(i, j) for i, j, _ in snap.edges()} - hidden
        ranked = rank_pairs(y, snap.live_mask, exclude=observed)
        per_snapshot.append(
            {k: precision_at_k(ranked, hidden, k) for k in ks}
        )
    return {
        k: float(np.mean([row[k] for row in per_snapshot])) for k in ks
    }, per_snapshot


def _one_hot(labels, classes):
    index = {c: i for i, c in enumerate(classes)}
    out = np.zeros((len(labels), len(classes)))
    out[np.arange(len(labels)), [index[l] for l in labels]] = 1.0
    return out


@dataclasses.dataclass
class LinearClassifier:
    """Multinomial logistic regression fit by full-batch gradient descent."""

    classes: tuple
    weights: np.ndarray
    bias: np.ndarray
    iterations: int
    converged: bool

    def scores(self, x):
        return np.asarray(x, float) @ self.weights + self.bias

    def predict(self, x):
        idx = np.argmax(self.scores(x), axis=1)
        return [self.classes[i] for i in idx]


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_classifier(y_train, labels_train, l2_strength=1.0, seed=0,
                     tol=1e-6, max_iters=5000):
    """L2-regularized multinomial logistic regression, from scratch.

    Full-batch gradient descent with a fixed step sized from a power-method
    bound on the Hessian; stops at gradient norm <= tol.  Deterministic
    given seed.
    """
    x = np.asarray(y_train, dtype=np.float64)
    labels = list(labels_train)
    if x.ndim != 2 or x.shape[0] != len(labels):
        raise ValidationError("y_train rows must match labels_train length")
    classes = tuple(sorted(set(labels), key=str))
    if len(classes) < 2:
        raise ValidationError("training labels contain a single class")
    n, d = x.shape
    c = len(classes)
    t = _one_hot(labels, classes)

    # power method for the top eigenvalue of X^T X / n; the softmax Hessian
    # is bounded by half of it plus the ridge term
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(50):
        u = x.T @ (x @ v) / n
        norm = np.linalg.norm(u)
        if norm == 0:
            break
        lam = norm
        v = u / norm
    step = 1.0 / (0.5 * lam + l2_strength + 1.0)

    w = np.zeros((d, c))
    b = np.zeros(c)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        p = _softmax(x @ w + b)
        err = (p - t) / n
        gw = x.T @ err + l2_strength * w
        gb = err.sum(axis=0)
        gnorm = np.sqrt(np.sum(gw * gw) + np.sum(gb * gb))
        if gnorm <= tol:
            converged = True
            break
        w -= step * gw
        b -= step * gb
    if not converged:
        log.debug("classifier stopped at max_iters=%d (grad norm above tol)", max_iters)
    return LinearClassifier(classes, w, b, it, converged)


def f1_scores(predicted, truth, train_fraction=None):
    """Micro and macro F1 with the zero-denominator-means-zero convention."""
    predicted = list(predicted)
    truth = list(truth)
    if len(predicted) != len(truth):
        raise ValidationError(
            f"{len(predicted)} predictions vs {len(truth)} truth labels"
        )
    labels = sorted(set(truth) | set(predicted), key=str)
    tp = {l: 0 for l in labels}
    fp = {l: 0 for l in labels}
    fn = {l: 0 for l in labels}
    for p, t in zip(predicted, truth):
        if p == t:
            tp[p] += 1
        else:
            fp[p] += 1
            fn[t] += 1

    def ratio(num, den):
        return num / den if den else 0.0

    precision = {l: ratio(tp[l], tp[l] + fp[l]) for l in labels}
    recall = {l: ratio(tp[l], tp[l] + fn[l]) for l in labels}
    per_label_f1 = [
        ratio(2 * precision[l] * recall[l], precision[l] + recall[l]) for l in labels
    ]
    macro = float(np.mean(per_label_f1)) if per_label_f1 else 0.0
    tp_all = sum(tp.values())
    p_all = ratio(tp_all, tp_all + sum(fp.values()))
    r_all = ratio(tp_all, tp_all + sum(fn.values()))
    micro = ratio(2 * p_all * r_all, p_all + r_all)
    return F1Report(micro, macro, precision, recall, train_fraction)


DEFAULT_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(1, 10))


def classification_sweep(ys, labels, fractions=DEFAULT_FRACTIONS, repeats=5,
                         seed=0, l2_strength=1.0):
    """Train/test the classifier at several training fractions.

    ``ys`` is one (n, d) embedding matrix or a list of them (one per
    snapshot); ``labels`` aligns row-for-row.  Each fraction draws
    ``repeats`` uniform splits (redrawn up to 10 times if the training side
    collapses to one class), and results average over repeats and
    snapshots.
    """
    if isinstance(ys, np.ndarray) and ys.ndim == 2:
        ys = [ys]
        labels = [labels]
    ys = [np.asarray(y, dtype=np.float64) for y in ys]
    labels = [list(l) for l in labels]
    if len(ys) != len(labels):
        raise ValidationError("one label sequence per embedding matrix")
    for y, l in zip(ys, labels):
        if y.shape[0] != len(l):
            raise ValidationError("labels must align with embedding rows")

    if isinstance(seed, np.random.SeedSequence):
        root = seed
    else:
        root = np.random.SeedSequence(seed)
    table = {}
    for fraction in fractions:
        if not 0 < fraction < 1:
            raise ValidationError(f"fraction must be in (0,1), got {fraction}")
        per_snapshot = []
        for s, (y, labs) in enumerate(zip(ys, labels)):
            n = y.shape[0]
            n_train = int(round(fraction * n))
            if not 2 <= n_train <= n - 1:
                raise ValidationError(
                    f"fraction {fraction} leaves no usable split of {n} nodes"
                )
            micros, macros = [], []
            for r in range(repeats):
                rng = np.random.default_rng(
                    np.random.SeedSequence(
                        entropy=root.entropy,
                        spawn_key=(*root.spawn_key, s, r, int(fraction * 1000)),
                    )
                )
                for attempt in range(10):
                    perm = rng.permutation(n)
                    train_idx, test_idx = perm[:n_train], perm[n_train:]
                    train_labs = [labs[i] for i in train_idx]
                    if len(set(train_labs)) >= 2:
                        break
                else:
                    raise ValidationError(
                        f"10 redraws at fraction {fraction} all gave one-class training sets"
                    )
                clf = train_classifier(y[train_idx], train_labs,
                                       l2_strength=l2_strength, seed=r)
                pred = clf.predict(y[test_idx])
                rep = f1_scores(pred, [labs[i] for i in test_idx], fraction)
                micros.append(rep.micro_f1)
                macros.append(rep.macro_f1)
            per_snapshot.append((float(np.mean(micros)), float(np.mean(macros))))
        table[fraction] = {
            "micro_f1": float(np.mean([m for m, _ in per_snapshot])),
            "macro_f1": float(np.mean([m for _, m in per_snapshot])),
            "per_snapshot": per_snapshot,
        }
    return table

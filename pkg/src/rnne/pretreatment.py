"""Snapshot pretreatment: padding states, drift screening, feature construction.

New snapshots are lifted to the fixed slot count N, vacant slots are marked
virtual, and slots whose adjacency row drifted anomalously since the previous
snapshot are marked dangerous via the Grubbs test.  Node features come from
row-normalized one/two/three-step transition structure.
"""

import enum
import logging

import numpy as np

from .exceptions import SequencingError, ValidationError
from .grubbs import grubbs_outliers

log = logging.getLogger(__name__)


class NodeState(enum.IntEnum):
    NORMAL = 0
    VIRTUAL = 1
    DANGEROUS = 2

    def label(self):
        return self.name.lower()


STATE_LABELS = {s: s.label() for s in NodeState}
STATE_FROM_LABEL = {s.label(): s for s in NodeState}


def row_normalize(matrix):
    """Divide each row by its largest entry; all-zero rows stay zero."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if (matrix < 0).any():
        raise ValidationError("row_normalize requires non-negative entries")
    row_max = matrix.max(axis=1, keepdims=True) if matrix.size else matrix
    out = np.zeros_like(matrix)
    np.divide(matrix, row_max, out=out, where=row_max > 0)
    return out


def feature_matrix(adjacency):
    """Blend row-normalized one/two/three-step walk matrices into node features.

    X = rn(rn(M)/2 + rn(M^2)/3 + rn(M^3)/6); every entry lies in [0, 1] and
    rows of isolated (virtual) slots are all zero.
    """
    m = np.asarray(adjacency, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError("adjacency must be square")
    m2 = m @ m
    m3 = m2 @ m
    u = row_normalize(m)
    v = row_normalize(m2)
    w = row_normalize(m3)
    return row_normalize(u / 2.0 + v / 3.0 + w / 6.0)


def row_diff_scores(adjacency, prev_adjacency):
    """Per-slot squared change of the adjacency row between two snapshots."""
    a = np.asarray(adjacency, dtype=np.float64)
    b = np.asarray(prev_adjacency, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    return np.einsum("ij,ij->i", d, d)


class PaddedSnapshot:
    """A slot-aligned snapshot plus its per-slot states and feature matrix.

    ``hidden`` holds the slot representations from the latest training pass
    over a window containing this snapshot (None before any training).
    """

    __slots__ = ("base", "states", "features", "hidden")

    def __init__(self, base, states, features):
        states = np.asarray(states, dtype=np.int8)
        if states.shape != (base.n_slots,):
            raise ValidationError("states must have one value per slot")
        self.base = base
        self.states = states
        self.features = features
        self.hidden = None

    @property
    def time_index(self):
        return self.base.time_index

    @property
    def n_slots(self):
        return self.base.n_slots

    def state_labels(self):
        return [NodeState(s).label() for s in self.states]


def mark_states(snapshot, prev=None, grubbs_alpha=0.05):
    """Pad and state-mark a new aligned snapshot against its predecessor.

    Vacant slots become virtual; slots virtual in either snapshot are ignored
    by the drift test; Grubbs outliers of the adjacency-row change become
    dangerous; everything else is normal.  Without a predecessor all live
    slots are normal.
    """
    live = snapshot.live_mask
    states = np.where(live, NodeState.NORMAL, NodeState.VIRTUAL).astype(np.int8)
    if prev is not None:
        if prev.n_slots != snapshot.n_slots:
            raise ValidationError(
                f"slot count changed between snapshots: {prev.n_slots} -> {snapshot.n_slots}"
            )
        exclude = ~live | (prev.states == NodeState.VIRTUAL)
        scores = row_diff_scores(snapshot.adjacency, prev.base.adjacency)
        for slot in grubbs_outliers(scores, exclude=exclude, alpha=grubbs_alpha):
            states[slot] = NodeState.DANGEROUS
    return PaddedSnapshot(snapshot, states, feature_matrix(snapshot.adjacency))


class TrainingWindow:
    """Fixed-length queue of consecutive padded snapshots with hidden carry.

    ``carry_hidden`` is the trained hidden matrix of the snapshot that
    precedes the window (zero before any snapshot has been evicted).
    """

    def __init__(self, capacity, n_slots, embedding_dim, grubbs_alpha=0.05):
        if capacity < 2:
            raise ValidationError("window capacity must be >= 2")
        self.capacity = int(capacity)
        self.n_slots = int(n_slots)
        self.embedding_dim = int(embedding_dim)
        self.grubbs_alpha = float(grubbs_alpha)
        self.entries = []
        self.carry_hidden = np.zeros((n_slots, embedding_dim))

    def __len__(self):
        return len(self.entries)

    @property
    def full(self):
        return len(self.entries) == self.capacity

    def push(self, snapshot):
        """Mark and append one aligned snapshot, evicting the oldest when full.

        The evicted entry's trained hidden matrix becomes the carry for the
        remaining window.
        """
        if snapshot.n_slots != self.n_slots:
            raise ValidationError(
                f"snapshot has {snapshot.n_slots} slots, window expects {self.n_slots}"
            )
        if self.entries and snapshot.time_index != self.entries[-1].time_index + 1:
            raise SequencingError(
                f"snapshot {snapshot.time_index} does not follow "
                f"{self.entries[-1].time_index}"
            )
        prev = self.entries[-1] if self.entries else None
        padded = mark_states(snapshot, prev, grubbs_alpha=self.grubbs_alpha)
        if self.full:
            evicted = self.entries.pop(0)
            if evicted.hidden is not None:
                self.carry_hidden = evicted.hidden
            else:
                log.warning(
                    "evicting snapshot %d before it was trained; carry stays zero",
                    evicted.time_index,
                )
                self.carry_hidden = np.zeros((self.n_slots, self.embedding_dim))
        self.entries.append(padded)
        return padded

    def eligible_slots(self):
        """Slots that are normal in every window entry (batch candidates)."""
        if not self.entries:
            return np.empty(0, dtype=np.intp)
        ok = np.ones(self.n_slots, dtype=bool)
        for entry in self.entries:
            ok &= entry.states == NodeState.NORMAL
        return np.nonzero(ok)[0]

    def batch_slices(self, batch):
        """Gather per-step kernel inputs for the given slot indices.

        Returns (features (n,b,N), adjacency rows (n,b,N), adjacency slice
        among the batch (n,b,b), hidden carry rows (b,d)).
        """
        batch = np.asarray(batch, dtype=np.intp)
        n = len(self.entries)
        b = batch.size
        x = np.empty((n, b, self.n_slots))
        rows = np.empty((n, b, self.n_slots))
        pair = np.empty((n, b, b))
        for k, entry in enumerate(self.entries):
            x[k] = entry.features[batch]
            rows[k] = entry.base.adjacency[batch]
            pair[k] = rows[k][:, batch]
        h0 = np.ascontiguousarray(self.carry_hidden[batch])
        return x, rows, pair, h0

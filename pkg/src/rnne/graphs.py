"""Snapshot storage, edge-list parsing, and slot alignment for snapshot series.

A snapshot series is a directory of files named ``snapshot_<k>.edges`` with
consecutive ``k`` starting at 0.  Edge-list files are UTF-8, whitespace
separated, ``u v`` or ``u v w`` per line, with ``#`` starting a comment.
"""

import heapq
import os
import re

import numpy as np

from .exceptions import CapacityError, ParseError, SequencingError, ValidationError

_SNAPSHOT_FILE = re.compile(r"snapshot_(\d+)\.edges$")


class GraphSnapshot:
    """One timestamped state of the network.

    Node ids are opaque strings; slot ``i`` of ``adjacency`` belongs to
    ``node_ids[i]``.  Aligned snapshots may carry ``None`` in vacant slots
    (their rows and columns are all zero).  The adjacency array is frozen
    after construction.
    """

    __slots__ = ("time_index", "node_ids", "adjacency", "directed")

    def __init__(self, time_index, node_ids, adjacency, directed=False):
        adjacency = np.asarray(adjacency, dtype=np.float64)
        node_ids = tuple(node_ids)
        if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
            raise ValidationError(f"adjacency must be square, got {adjacency.shape}")
        if adjacency.shape[0] != len(node_ids):
            raise ValidationError(
                f"adjacency dimension {adjacency.shape[0]} != {len(node_ids)} node ids"
            )
        if adjacency.size:
            if not np.all(np.isfinite(adjacency)):
                raise ValidationError("adjacency contains non-finite weights")
            if (adjacency < 0).any():
                raise ValidationError("edge weights must be >= 0")
            if np.diagonal(adjacency).any():
                raise ValidationError("self-loops are not allowed (non-zero diagonal)")
            if not directed and not np.array_equal(adjacency, adjacency.T):
                raise ValidationError("undirected snapshot requires a symmetric adjacency")
        live = [v for v in node_ids if v is not None]
        if len(set(live)) != len(live):
            raise ValidationError("duplicate node ids in snapshot")
        vacant = [s for s, v in enumerate(node_ids) if v is None]
        if vacant and (adjacency[vacant, :].any() or adjacency[:, vacant].any()):
            raise ValidationError("vacant slots must have all-zero adjacency rows")
        if time_index < 0:
            raise ValidationError("time_index must be >= 0")
        adjacency = adjacency.copy()
        adjacency.setflags(write=False)
        self.time_index = int(time_index)
        self.node_ids = node_ids
        self.adjacency = adjacency
        self.directed = bool(directed)

    @property
    def n_slots(self):
        return len(self.node_ids)

    @property
    def live_mask(self):
        """Boolean array marking slots occupied by a real node."""
        return np.array([v is not None for v in self.node_ids], dtype=bool)

    def live_ids(self):
        return [v for v in self.node_ids if v is not None]

    def edge_count(self):
        nz = int(np.count_nonzero(self.adjacency))
        return nz if self.directed else nz // 2

    def edges(self):
        """Yield (i, j, w) for non-zero entries; i < j when undirected."""
        if self.directed:
            ii, jj = np.nonzero(self.adjacency)
        else:
            ii, jj = np.nonzero(np.triu(self.adjacency, 1))
        for i, j in zip(ii.tolist(), jj.tolist()):
            yield i, j, float(self.adjacency[i, j])

    def neighbors(self, slot):
        """Non-zero entries of one adjacency row as (index array, weight array)."""
        row = self.adjacency[slot]
        idx = np.nonzero(row)[0]
        return idx, row[idx]

    def __repr__(self):
        return (
            f"GraphSnapshot(t={self.time_index}, slots={self.n_slots}, "
            f"live={len(self.live_ids())}, edges={self.edge_count()})"
        )


def load_edge_list(text, directed=False, time_index=0):
    """Parse edge-list text into a snapshot.

    Lines are ``u v`` or ``u v w`` with w > 0; ``#`` starts a comment.  Nodes
    register in first-appearance order, a missing weight defaults to 1.0, and
    duplicate edge lines accumulate weight by summation.
    """
    if hasattr(text, "read"):
        text = text.read()
    order = {}
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) not in (2, 3):
            raise ParseError(f"expected 'u v' or 'u v w', got {raw!r}", lineno)
        u, v = tokens[0], tokens[1]
        if len(tokens) == 3:
            try:
                w = float(tokens[2])
            except ValueError:
                raise ParseError(f"bad weight {tokens[2]!r}", lineno) from None
            if not np.isfinite(w):
                raise ParseError(f"non-finite weight {tokens[2]!r}", lineno)
        else:
            w = 1.0
        if w <= 0:
            raise ValidationError(f"line {lineno}: edge weight must be > 0, got {w}")
        if u == v:
            raise ValidationError(f"line {lineno}: self-loop on {u!r}")
        for node in (u, v):
            if node not in order:
                order[node] = len(order)
        i, j = order[u], order[v]
        entries[(i, j)] = entries.get((i, j), 0.0) + w
        if not directed:
            entries[(j, i)] = entries.get((j, i), 0.0) + w
    n = len(order)
    adjacency = np.zeros((n, n))
    for (i, j), w in entries.items():
        adjacency[i, j] = w
    return GraphSnapshot(time_index, list(order), adjacency, directed=directed)


def write_edge_list(snapshot):
    """Serialize a snapshot to edge-list text (one line per edge).

    Isolated nodes have no representation in the format and are dropped on a
    round trip; loaded snapshots never contain any.
    """
    lines = []
    for i, j, w in snapshot.edges():
        u, v = snapshot.node_ids[i], snapshot.node_ids[j]
        lines.append(f"{u} {v} {w!r}")
    return "\n".join(lines) + ("\n" if lines else "")


class NodeIndexMap:
    """Injective map from live node ids to global slot indices.

    Slots released by permanently departed nodes go on a free heap and are
    reused (smallest first) by later arrivals.
    """

    def __init__(self):
        self.slot_of = {}
        self._free = []
        self._next_fresh = 0

    @property
    def n_slots(self):
        return self._next_fresh

    def allocate(self, node_id, capacity=None):
        if node_id in self.slot_of:
            return self.slot_of[node_id]
        if self._free:
            slot = heapq.heappop(self._free)
        else:
            if capacity is not None and self._next_fresh >= capacity:
                raise CapacityError(
                    f"cannot place node {node_id!r}: all {capacity} slots in use "
                    "(layer expansion is out of scope)"
                )
            slot = self._next_fresh
            self._next_fresh += 1
        self.slot_of[node_id] = slot
        return slot

    def release(self, node_id):
        slot = self.slot_of.pop(node_id)
        heapq.heappush(self._free, slot)


def align_series(snapshots, capacity=None):
    """Assign every node id a stable global slot across a snapshot series.

    Returns (aligned snapshots, NodeIndexMap).  Each aligned snapshot has
    ``capacity`` slots (or the minimum needed when capacity is None); absent
    ids leave zero rows/columns, and a slot frees up for reuse only once its
    id never appears again.
    """
    snapshots = list(snapshots)
    last_seen = {}
    for t, snap in enumerate(snapshots):
        if capacity is not None and len(snap.live_ids()) > capacity:
            raise CapacityError(
                f"snapshot {snap.time_index} has {len(snap.live_ids())} nodes, "
                f"capacity is {capacity}"
            )
        for node_id in snap.live_ids():
            last_seen[node_id] = t

    index_map = NodeIndexMap()
    placements = []
    for t, snap in enumerate(snapshots):
        slots = {v: index_map.allocate(v, capacity) for v in snap.live_ids()}
        placements.append(slots)
        for node_id in list(index_map.slot_of):
            if last_seen[node_id] == t:
                index_map.release(node_id)

    n = index_map.n_slots if capacity is None else capacity
    aligned = []
    for snap, slots in zip(snapshots, placements):
        node_ids = [None] * n
        positions = np.empty(len(snap.node_ids), dtype=np.intp)
        for local, node_id in enumerate(snap.node_ids):
            if node_id is None:
                continue
            slot = slots[node_id]
            node_ids[slot] = node_id
            positions[local] = slot
        live_local = [k for k, v in enumerate(snap.node_ids) if v is not None]
        adjacency = np.zeros((n, n))
        if live_local:
            loc = np.asarray(live_local, dtype=np.intp)
            adjacency[np.ix_(positions[loc], positions[loc])] = snap.adjacency[np.ix_(loc, loc)]
        aligned.append(
            GraphSnapshot(snap.time_index, node_ids, adjacency, directed=snap.directed)
        )
    return aligned, index_map


def load_snapshot_series(dirpath, directed=False):
    """Load ``snapshot_<k>.edges`` files with consecutive k starting at 0."""
    found = {}
    for name in os.listdir(dirpath):
        m = _SNAPSHOT_FILE.fullmatch(name)
        if m:
            found[int(m.group(1))] = os.path.join(dirpath, name)
    if not found:
        raise ValidationError(f"no snapshot_<k>.edges files in {dirpath}")
    count = max(found) + 1
    missing = sorted(set(range(count)) - set(found))
    if missing:
        raise SequencingError(f"missing snapshot files for indices {missing} in {dirpath}")
    series = []
    for k in range(count):
        with open(found[k], encoding="utf-8") as fh:
            series.append(load_edge_list(fh, directed=directed, time_index=k))
    return series


def write_snapshot_series(dirpath, snapshots):
    os.makedirs(dirpath, exist_ok=True)
    for snap in snapshots:
        path = os.path.join(dirpath, f"snapshot_{snap.time_index}.edges")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(write_edge_list(snap))


def load_labels(path):
    """Read a ``node_id label`` file into a dict."""
    labels = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 2:
                raise ParseError(f"expected 'node_id label', got {raw!r}", lineno)
            node_id, label = tokens
            if node_id in labels:
                raise ValidationError(f"line {lineno}: duplicate label for {node_id!r}")
            labels[node_id] = label
    return labels


def write_labels(path, labels):
    with open(path, "w", encoding="utf-8") as fh:
        for node_id in sorted(labels):
            fh.write(f"{node_id} {labels[node_id]}\n")

"""Synthetic dynamic-network generation.

A seed graph evolves by small random perturbations per step: uniform edge
removal, uniform random edge addition, uniform node removal, and new nodes
attached by preferential attachment.  The generator also builds labeled
planted-partition graphs used as classification fixtures.
"""

import dataclasses
import logging

import numpy as np

from .exceptions import GenerationError, ValidationError
from .graphs import GraphSnapshot

log = logging.getLogger(__name__)


@dataclasses.dataclass
class PerturbationConfig:
    """Per-step change rates; all rates are fractions of the current graph."""

    series_length: int = 14
    node_add_rate: float = 0.0
    node_remove_rate: float = 0.0
    edge_add_rate: float = 0.0
    edge_remove_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.series_length < 2:
            raise ValidationError("series_length must be >= 2")
        for name in ("node_add_rate", "node_remove_rate",
                     "edge_add_rate", "edge_remove_rate"):
            rate = getattr(self, name)
            if not 0 <= rate <= 0.5:
                raise ValidationError(f"{name} must be in [0, 0.5], got {rate}")


def _snapshot_from_sets(time_index, order, edges):
    """Build a snapshot over node ids (given order) with unit-weight edges."""
    idx = {v: i for i, v in enumerate(order)}
    adj = np.zeros((len(order), len(order)))
    for u, v in edges:
        adj[idx[u], idx[v]] = 1.0
        adj[idx[v], idx[u]] = 1.0
    return GraphSnapshot(time_index, tuple(order), adj)


def perturb_series(seed_graph, cfg):
    """Evolve a seed graph into a snapshot series by random perturbation.

    Snapshot 0 is the seed graph itself.  Each later step removes
    floor(rate * count) edges and nodes uniformly, adds random new edges
    among existing nodes, and attaches new nodes by preferential attachment
    with m = round(average degree).  Deterministic by cfg.seed.
    """
    if seed_graph.edge_count() == 0:
        raise ValidationError("seed graph has no edges")
    rng = np.random.default_rng(cfg.seed)

    order = list(seed_graph.live_ids())
    nodes = set(order)
    id_of = dict(zip(range(seed_graph.n_slots), seed_graph.node_ids))
    edges = {tuple(sorted((id_of[i], id_of[j]))) for i, j, _ in seed_graph.edges()}
    series = [seed_graph]
    fresh = 0

    for k in range(1, cfg.series_length):
        # uniform edge removal
        n_remove = int(cfg.edge_remove_rate * len(edges))
        if n_remove:
            pool = sorted(edges)
            for p in rng.choice(len(pool), size=n_remove, replace=False):
                edges.discard(pool[p])
        # uniform node removal takes incident edges along
        n_drop = int(cfg.node_remove_rate * len(nodes))
        if n_drop:
            pool = sorted(nodes)
            for p in rng.choice(len(pool), size=n_drop, replace=False):
                victim = pool[p]
                nodes.discard(victim)
                edges = {e for e in edges if victim not in e}
        if not nodes or not edges:
            raise GenerationError(f"perturbation emptied the graph at step {k}")
        # uniform random new edges among existing nodes
        n_new_edges = int(cfg.edge_add_rate * len(edges))
        pool = sorted(nodes)
        attempts = 0
        added = 0
        while added < n_new_edges and attempts < 50 * n_new_edges:
            u, v = rng.choice(len(pool), size=2, replace=False)
            e = tuple(sorted((pool[u], pool[v])))
            attempts += 1
            if e not in edges:
                edges.add(e)
                added += 1
        # new nodes by preferential attachment
        n_new_nodes = int(cfg.node_add_rate * len(nodes))
        for _ in range(n_new_nodes):
            degree = {v: 0 for v in nodes}
            for u, v in edges:
                degree[u] += 1
                degree[v] += 1
            m = max(1, round(2 * len(edges) / len(nodes)))
            m = min(m, len(nodes))
            pool = sorted(nodes)
            weights = np.array([degree[v] for v in pool], dtype=np.float64)
            if weights.sum() == 0:
                weights[:] = 1.0
            weights /= weights.sum()
            targets = rng.choice(len(pool), size=m, replace=False, p=weights)
            new_id = f"g{fresh}"
            fresh += 1
            nodes.add(new_id)
            order.append(new_id)
            for t in targets:
                edges.add(tuple(sorted((new_id, pool[t]))))
        order = [v for v in order if v in nodes]
        series.append(_snapshot_from_sets(k, order, edges))
    return series


def synth_community_graph(communities, nodes_per, p_in, p_out, seed=0):
    """Planted-partition graph with per-node community labels.

    Returns (snapshot, labels) where labels maps node id to community index.
    Intra-community pairs connect with probability p_in, inter-community
    with p_out.
    """
    if not 0 <= p_out < p_in <= 1:
        raise ValidationError(
            f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )
    if communities < 1 or nodes_per < 1:
        raise ValidationError("communities and nodes_per must be >= 1")
    n = communities * nodes_per
    rng = np.random.default_rng(seed)
    block = np.repeat(np.arange(communities), nodes_per)
    prob = np.where(block[:, None] == block[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < prob, k=1)
    adj = (upper | upper.T).astype(np.float64)
    ids = tuple(f"c{block[i]}_{i}" for i in range(n))
    snap = GraphSnapshot(0, ids, adj)
    labels = {ids[i]: int(block[i]) for i in range(n)}
    return snap, labels

"""Orchestration: sliding-window training, evaluation runs, file outputs.

The in-memory entry point is :func:`train_series`; the ``run_*`` functions
wrap it with file I/O so that a rerun with the same config and seeds writes
byte-identical outputs.
"""

import csv
import logging
import os

import numpy as np

from . import evaluation
from . import model
from .config import RunConfig
from .dynamics import PerturbationConfig, perturb_series, synth_community_graph
from .exceptions import RnneError, ValidationError
from .graphs import (
    align_series,
    load_labels,
    load_snapshot_series,
    write_labels,
    write_snapshot_series,
)
from .pretreatment import STATE_LABELS, NodeState, TrainingWindow

log = logging.getLogger(__name__)

FLOAT_FMT = "%.12g"


class SeriesResult:
    """Everything produced by training over one snapshot series."""

    def __init__(self, params, snapshots, index_map):
        self.params = params
        self.snapshots = snapshots
        self.index_map = index_map
        self.y = [None] * len(snapshots)
        self.states = [None] * len(snapshots)
        self.history = []

    def live_embedding(self, k):
        """(ids, rows, states) for live slots of snapshot k, slot order."""
        snap = self.snapshots[k]
        live = np.flatnonzero(snap.live_mask)
        ids = [snap.node_ids[i] for i in live]
        return ids, self.y[k][live], self.states[k][live]


def _window_seeds(master_seed, count):
    return [
        np.random.SeedSequence(entropy=master_seed, spawn_key=(0, w))
        for w in range(count)
    ]


def train_series(snapshots, hyper, window_size=3, layer_sizes=None,
                 grubbs_alpha=0.05, seed=0, warm_start=True):
    """Slide the training window across an aligned series.

    Training runs at every position where the window is full (or once at the
    end if the series is shorter than the window).  The first full window
    emits embeddings for all its snapshots; each later position emits the
    newest snapshot's.  Parameters warm-start across positions unless
    ``warm_start`` is false.
    """
    if not snapshots:
        raise ValidationError("empty snapshot series")
    n_slots = snapshots[0].n_slots
    window = TrainingWindow(window_size, n_slots, hyper.embedding_dim,
                            grubbs_alpha=grubbs_alpha)
    if layer_sizes:
        full_sizes = [n_slots + hyper.embedding_dim, *layer_sizes, hyper.embedding_dim]
    else:
        full_sizes = None

    result = SeriesResult(None, snapshots, None)
    seeds = _window_seeds(seed, len(snapshots))
    params = None
    trained_any = False

    def train_now(k):
        nonlocal params, trained_any
        train = model.train_window(
            window,
            params=params if warm_start else None,
            hyper=hyper,
            seed=seeds[k],
            layer_sizes=full_sizes,
        )
        params = train.params
        result.history.append(train.history)
        emitted = train.embeddings
        if not trained_any:
            for pos, t in enumerate(emitted.time_indices):
                result.y[t] = emitted.y[pos]
                result.states[t] = emitted.states[pos]
            trained_any = True
        else:
            result.y[k] = emitted.y[-1]
            result.states[k] = emitted.states[-1]

    for k, snap in enumerate(snapshots):
        window.push(snap)
        if window.full:
            train_now(k)
    if not trained_any:
        # series shorter than the window: train once on the partial window
        train_now(len(snapshots) - 1)
    result.params = params
    return result


def _prepare_series(config):
    raw = load_snapshot_series(config.snapshot_dir)
    capacity = config.capacity_n if config.capacity_n > 0 else None
    aligned, index_map = align_series(raw, capacity=capacity)
    return aligned, index_map


def _train_from_config(config, snapshots, hyper=None, seed=None):
    hyper = hyper or config.hyperparams()
    result = train_series(
        snapshots,
        hyper,
        window_size=config.window_size,
        layer_sizes=config.layer_sizes,
        grubbs_alpha=config.grubbs_alpha,
        seed=config.seed if seed is None else seed,
        warm_start=config.warm_start,
    )
    return result, hyper


def write_embedding_file(path, ids, rows):
    d = rows.shape[1] if len(rows) else 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node_id " + " ".join(f"dim_{i}" for i in range(d)) + "\n")
        for node_id, row in zip(ids, rows):
            fh.write(node_id + " " + " ".join(FLOAT_FMT % v for v in row) + "\n")


def read_embedding_file(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if not header or header[0] != "node_id":
            raise ValidationError(f"{path} is not an embedding file")
        ids, rows = [], []
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    return ids, np.array(rows, dtype=np.float64)


def _write_states_file(path, ids, states):
    with open(path, "w", encoding="utf-8") as fh:
        for node_id, state in zip(ids, states):
            fh.write(f"{node_id} {STATE_LABELS[NodeState(state)]}\n")


def write_metrics_csv(path, rows):
    """rows: (task, snapshot, k_or_fraction, metric, value); value may be NA."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "snapshot", "k_or_fraction", "metric", "value"])
        for task, snap, kf, metric, value in rows:
            if isinstance(value, float):
                value = FLOAT_FMT % value
            writer.writerow([task, snap, kf, metric, value])


def run_generation(config):
    """Build the synthetic labeled series and write it as a snapshot dir."""
    snap, labels = synth_community_graph(
        config.communities, config.nodes_per_community,
        config.p_in, config.p_out, seed=config.seed,
    )
    cfg = PerturbationConfig(
        series_length=config.series_length,
        node_add_rate=config.node_add_rate,
        node_remove_rate=config.node_remove_rate,
        edge_add_rate=config.edge_add_rate,
        edge_remove_rate=config.edge_remove_rate,
        seed=config.seed,
    )
    series = perturb_series(snap, cfg)
    os.makedirs(config.snapshot_dir, exist_ok=True)
    write_snapshot_series(config.snapshot_dir, series)
    labels_path = config.labels_path or os.path.join(config.snapshot_dir, "labels.txt")
    write_labels(labels_path, labels)
    log.info("wrote %d snapshots to %s", len(series), config.snapshot_dir)
    return config.snapshot_dir, labels_path


def run_training(config):
    """Train over the configured series; write embeddings, states, logs."""
    snapshots, index_map = _prepare_series(config)
    result, hyper = _train_from_config(config, snapshots)
    result.index_map = index_map

    out = config.output_dir
    emb_dir = os.path.join(out, "embeddings")
    os.makedirs(emb_dir, exist_ok=True)
    for k in range(len(snapshots)):
        ids, rows, states = result.live_embedding(k)
        write_embedding_file(os.path.join(emb_dir, f"snapshot_{k}.emb"), ids, rows)
        # hidden state equals the representation by construction (h = y)
        write_embedding_file(os.path.join(emb_dir, f"snapshot_{k}.hid"), ids, rows)
        _write_states_file(os.path.join(emb_dir, f"snapshot_{k}.states"), ids, states)

    with open(os.path.join(out, "loss_log.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "total", "L1", "L2", "Ltime"])
        i = 0
        for block in result.history:
            for row in block:
                writer.writerow(
                    [i] + [FLOAT_FMT % row[c] for c in ("total", "l1", "l2", "l_time")]
                )
                i += 1
    model.save_checkpoint(os.path.join(out, "checkpoint.npz"),
                          result.params, hyper, config.seed)
    return result


def _auto_ks(config, count):
    if config.precision_ks:
        return [k for k in config.precision_ks if 1 <= k <= count]
    return [max(1, count // 2), count] if count > 1 else [1]


def _eval_reconstruct(config, result=None):
    snapshots, _ = _prepare_series(config)
    rows = []
    per_k = {}
    if result is None:
        result = _load_embeddings_for(config, snapshots)
    for k, snap in enumerate(snapshots):
        ids, y, _a = result.live_embedding(k)
        slot_of = {node_id: i for i, node_id in enumerate(ids)}
        live = np.flatnonzero(snap.live_mask)
        local = {int(s): slot_of[snap.node_ids[s]] for s in live}
        edges = {
            evaluation.normalize_pair(local[i], local[j]) for i, j, _ in snap.edges()
        }
        if not edges:
            log.warning("snapshot %d has no edges; skipped", k)
            continue
        ranked = evaluation.rank_pairs(y)
        for kk in _auto_ks(config, len(edges)):
            p = evaluation.precision_at_k(ranked, edges, kk)
            rows.append(("reconstruct", k, kk, "precision_at_k", p))
            per_k.setdefault(kk, []).append(p)
    for kk, vals in sorted(per_k.items()):
        rows.append(("reconstruct", "mean", kk, "precision_at_k", float(np.mean(vals))))
    return rows


def _eval_linkpred(config):
    """Hide edges per snapshot, retrain on the observed series, score."""
    snapshots, _ = _prepare_series(config)
    observed, hidden_sets = [], []
    for k, snap in enumerate(snapshots):
        seed = np.random.SeedSequence(entropy=config.seed, spawn_key=(1, k))
        obs, hidden = evaluation.hide_edges(snap, config.hide_fraction, seed=seed)
        observed.append(obs)
        hidden_sets.append(hidden)
    result, _hyper = _train_from_config(config, observed)

    rows = []
    per_k = {}
    for k, (orig, obs, hidden) in enumerate(zip(snapshots, observed, hidden_sets)):
        if not hidden:
            log.warning("snapshot %d hid no edges; skipped", k)
            continue
        live = np.flatnonzero(orig.live_mask)
        y = result.y[k][live]
        local = {int(s): i for i, s in enumerate(live)}
        hid = {evaluation.normalize_pair(local[i], local[j]) for i, j in hidden}
        obs_edges = {
            evaluation.normalize_pair(local[i], local[j]) for i, j, _ in obs.edges()
        }
        ranked = evaluation.rank_pairs(y, exclude=obs_edges)
        ks = config.precision_ks or [max(1, len(hid) // 2), len(hid)]
        ks = [kk for kk in ks if 1 <= kk <= len(ranked)]
        for kk in ks:
            p = evaluation.precision_at_k(ranked, hid, kk)
            rows.append(("linkpred", k, kk, "precision_at_k", p))
            per_k.setdefault(kk, []).append(p)
    for kk, vals in sorted(per_k.items()):
        rows.append(("linkpred", "mean", kk, "precision_at_k", float(np.mean(vals))))
    return rows


def _eval_classify(config, result=None):
    if not config.labels_path:
        raise ValidationError("classification needs labels_path")
    labels = load_labels(config.labels_path)
    snapshots, _ = _prepare_series(config)
    if result is None:
        result = _load_embeddings_for(config, snapshots)
    ys, labs = [], []
    for k in range(len(snapshots)):
        ids, y, _a = result.live_embedding(k)
        missing = [i for i in ids if i not in labels]
        if missing:
            raise ValidationError(
                f"snapshot {k}: no label for node(s) {', '.join(missing[:3])}"
            )
        ys.append(y)
        labs.append([labels[i] for i in ids])
    table = evaluation.classification_sweep(
        ys, labs,
        fractions=config.fractions,
        repeats=config.repeats,
        seed=np.random.SeedSequence(entropy=config.seed, spawn_key=(2,)),
        l2_strength=config.l2_strength,
    )
    rows = []
    for fraction in config.fractions:
        cell = table[fraction]
        for s, (micro, macro) in enumerate(cell["per_snapshot"]):
            rows.append(("classify", s, fraction, "micro_f1", micro))
            rows.append(("classify", s, fraction, "macro_f1", macro))
        rows.append(("classify", "mean", fraction, "micro_f1", cell["micro_f1"]))
        rows.append(("classify", "mean", fraction, "macro_f1", cell["macro_f1"]))
    return rows


def _load_embeddings_for(config, snapshots):
    """Rehydrate a SeriesResult from embedding files written by run_training."""
    emb_dir = os.path.join(config.output_dir, "embeddings")
    result = SeriesResult(None, snapshots, None)
    for k, snap in enumerate(snapshots):
        path = os.path.join(emb_dir, f"snapshot_{k}.emb")
        if not os.path.exists(path):
            raise ValidationError(f"missing embeddings {path}; run training first")
        ids, rows = read_embedding_file(path)
        slot_of = {node_id: s for s, node_id in enumerate(snap.node_ids)
                   if node_id is not None}
        y = np.zeros((snap.n_slots, rows.shape[1]))
        states = np.zeros(snap.n_slots, dtype=np.int8)
        for node_id, row in zip(ids, rows):
            if node_id not in slot_of:
                raise ValidationError(f"{path} names unknown node {node_id}")
            y[slot_of[node_id]] = row
        result.y[k] = y
        result.states[k] = states
    return result


def run_eval(config, task=None, result=None):
    """Score the requested task and write the metrics CSV."""
    task = task or config.task
    if task == "reconstruct":
        rows = _eval_reconstruct(config, result=result)
    elif task == "linkpred":
        rows = _eval_linkpred(config)
    elif task == "classify":
        rows = _eval_classify(config, result=result)
    else:
        raise ValidationError(f"unknown task {task!r}")
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, f"metrics_{task}.csv")
    write_metrics_csv(path, rows)
    return rows


def run_sweep(config):
    """Full train+eval per grid point at reduced iterations; NA on failure."""
    rows = []
    for alpha in config.alpha_grid:
        for beta in config.beta_grid:
            for gamma in config.gamma_grid:
                sub = RunConfig(**{
                    **config.as_dict(),
                    "loss_alpha": alpha, "beta": beta, "gamma": gamma,
                    "max_iters": config.sweep_max_iters,
                    "output_dir": os.path.join(
                        config.output_dir,
                        f"sweep_a{alpha:g}_b{beta:g}_g{gamma:g}",
                    ),
                })
                try:
                    result = run_training(sub)
                    cell = run_eval(sub, result=result if sub.task != "linkpred" else None)
                    for task, snap, kf, metric, value in cell:
                        if snap != "mean":
                            continue
                        rows.append((alpha, beta, gamma, task, kf, metric, value))
                except RnneError as exc:
                    log.error("sweep cell a=%g b=%g g=%g failed: %s",
                              alpha, beta, gamma, exc)
                    rows.append((alpha, beta, gamma, config.task, "", "error", "NA"))
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, "sweep.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "beta", "gamma", "task",
                         "k_or_fraction", "metric", "value"])
        for row in rows:
            out = list(row)
            if isinstance(out[-1], float):
                out[-1] = FLOAT_FMT % out[-1]
            writer.writerow(out)
    return rows

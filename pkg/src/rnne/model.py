"""Shared recurrent autoencoder cell, losses, training loop, and checkpoints.

One cell is reused for every window step: the encoder maps the concatenation
of a node's previous hidden state and its current feature row to a d-vector,
the decoder reconstructs that concatenation, and the hidden state carried to
the next step is the representation itself.  Training minimizes a weighted
reconstruction term, an edge-weighted closeness term among the batch, and a
temporal stability term, by plain gradient descent through the unrolled
window.
"""

import dataclasses
import json
import logging

import numpy as np

from . import kernels
from .exceptions import (
    CorruptionError,
    TrainingError,
    ValidationError,
)
from .pretreatment import NodeState

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1


class ModelParams:
    """Encoder/decoder layer weights of the shared cell.

    ``layer_sizes`` lists the encoder widths from input (N+d) to the
    embedding width d; the decoder mirrors them in reverse.
    """

    def __init__(self, layer_sizes, enc_w, enc_b, dec_w, dec_b):
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        self.enc_w = enc_w
        self.enc_b = enc_b
        self.dec_w = dec_w
        self.dec_b = dec_b
        self.validate()

    @classmethod
    def initialize(cls, layer_sizes, seed=0):
        """Glorot-uniform weights, zero biases, deterministic by seed."""
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2:
            raise ValidationError("need at least input and embedding widths")
        if any(s < 1 for s in sizes):
            raise ValidationError(f"layer sizes must be >= 1, got {sizes}")
        if sizes[-1] >= sizes[0]:
            raise ValidationError(
                f"embedding width {sizes[-1]} must be smaller than input width {sizes[0]}"
            )
        rng = np.random.default_rng(seed)

        def glorot(fan_in, fan_out):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-bound, bound, size=(fan_in, fan_out))

        enc_w = [glorot(a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        enc_b = [np.zeros(b) for b in sizes[1:]]
        rsizes = sizes[::-1]
        dec_w = [glorot(a, b) for a, b in zip(rsizes[:-1], rsizes[1:])]
        dec_b = [np.zeros(b) for b in rsizes[1:]]
        return cls(sizes, enc_w, enc_b, dec_w, dec_b)

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def embedding_dim(self):
        return self.layer_sizes[-1]

    @property
    def n_slots(self):
        return self.layer_sizes[0] - self.layer_sizes[-1]

    def arrays(self):
        """All parameter arrays with stable names (checkpoints, tests)."""
        out = []
        for kind, group in (
            ("enc_w", self.enc_w),
            ("enc_b", self.enc_b),
            ("dec_w", self.dec_w),
            ("dec_b", self.dec_b),
        ):
            out.extend((f"{kind}_{i}", arr) for i, arr in enumerate(group))
        return out

    def validate(self):
        sizes = self.layer_sizes
        rsizes = sizes[::-1]
        if len(self.enc_w) != len(sizes) - 1 or len(self.dec_w) != len(sizes) - 1:
            raise ValidationError("layer count does not match layer_sizes")
        for i, (w, b) in enumerate(zip(self.enc_w, self.enc_b)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ValidationError(f"encoder layer {i} has wrong shape {w.shape}")
        for i, (w, b) in enumerate(zip(self.dec_w, self.dec_b)):
            if w.shape != (rsizes[i], rsizes[i + 1]) or b.shape != (rsizes[i + 1],):
                raise ValidationError(f"decoder layer {i} has wrong shape {w.shape}")
        for name, arr in self.arrays():
            if not np.all(np.isfinite(arr)):
                raise CorruptionError(f"non-finite values in {name}")

    def copy(self):
        return ModelParams(
            self.layer_sizes,
            [w.copy() for w in self.enc_w],
            [b.copy() for b in self.enc_b],
            [w.copy() for w in self.dec_w],
            [b.copy() for b in self.dec_b],
        )


@dataclasses.dataclass
class Hyperparams:
    """Training knobs; beta >= 1 weights non-zero reconstruction entries."""

    loss_alpha: float = 0.1
    beta: float = 5.0
    gamma: float = 1.0
    eta: float = 0.5
    batch_size: int = 32
    embedding_dim: int = 32
    max_iters: int = 2000
    tol: float = 1e-5
    patience: int = 20
    lr_decay: float = 1.0

    def __post_init__(self):
        if self.loss_alpha < 0:
            raise ValidationError("loss_alpha must be >= 0")
        if self.beta < 1:
            raise ValidationError("beta must be >= 1")
        if self.gamma < 0:
            raise ValidationError("gamma must be >= 0")
        if self.eta <= 0:
            raise ValidationError("learning rate must be > 0")
        if self.batch_size < 1 or self.embedding_dim < 1:
            raise ValidationError("batch_size and embedding_dim must be >= 1")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if not 0 < self.lr_decay <= 1:
            raise ValidationError("lr_decay must be in (0, 1]")

    def as_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass
class EmbeddingSet:
    """Per-snapshot representations and states from the final forward pass.

    The hidden state equals the representation after a forward pass, so ``y``
    serves both; virtual rows are present but flagged by ``states``.
    """

    time_indices: list
    node_ids: list
    y: list
    states: list

    def hidden(self, position):
        return self.y[position]

    def __len__(self):
        return len(self.y)


@dataclasses.dataclass
class TrainResult:
    params: ModelParams
    embeddings: EmbeddingSet
    history: list
    iterations: int
    converged: bool


def _as_batch(v, width, name):
    v = np.asarray(v, dtype=np.float64)
    squeeze = v.ndim == 1
    if squeeze:
        v = v[None, :]
    if v.ndim != 2 or v.shape[1] != width:
        raise ValidationError(f"{name} must have width {width}, got {v.shape}")
    return v, squeeze


def encode(h_prev, x, params):
    """Map previous hidden state and feature row to the representation."""
    d = params.embedding_dim
    h, squeeze_h = _as_batch(h_prev, d, "h_prev")
    xv, squeeze_x = _as_batch(x, params.n_slots, "x")
    if h.shape[0] != xv.shape[0]:
        raise ValidationError("h_prev and x must have matching row counts")
    y = kernels.mlp_forward(np.concatenate([h, xv], axis=1), params.enc_w, params.enc_b)[-1]
    if not np.all(np.isfinite(y)):
        raise CorruptionError("encoder produced non-finite output")
    return y[0] if (squeeze_h and squeeze_x) else y


def decode(y, params):
    """Map a representation back to reconstruction space (width N+d)."""
    yv, squeeze = _as_batch(y, params.embedding_dim, "y")
    x_hat = kernels.mlp_forward(yv, params.dec_w, params.dec_b)[-1]
    if not np.all(np.isfinite(x_hat)):
        raise CorruptionError("decoder produced non-finite output")
    return x_hat[0] if squeeze else x_hat


def reconstruction_weights(adjacency_row, d, beta):
    """Per-coordinate weights: beta over non-zero adjacency entries, else 1.

    The d hidden coordinates of the target always weigh 1 (no adjacency
    entry governs them).
    """
    if beta < 1:
        raise ValidationError("beta must be >= 1")
    row = np.asarray(adjacency_row, dtype=np.float64)
    w = np.ones(row.shape[-1] + d)
    w[d:] = np.where(row != 0.0, beta, 1.0)
    return w


def reconstruction_loss(x_hat, h_prev, x, adjacency_row, beta):
    """Weighted squared reconstruction error for one node at one step."""
    target = np.concatenate([np.asarray(h_prev, float), np.asarray(x, float)])
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x_hat.shape != target.shape:
        raise ValidationError(
            f"reconstruction width {x_hat.shape} != target width {target.shape}"
        )
    w = reconstruction_weights(adjacency_row, len(h_prev), beta)
    diff = (x_hat - target) * w
    return float(diff @ diff)


def first_order_loss(y_batch, adjacency_batch):
    """Edge-weighted squared distances over ordered batch pairs."""
    y = np.asarray(y_batch, dtype=np.float64)
    m = np.asarray(adjacency_batch, dtype=np.float64)
    if m.shape != (y.shape[0], y.shape[0]):
        raise ValidationError("adjacency slice must be square over the batch")
    diff = y[:, None, :] - y[None, :, :]
    return float(np.sum(m * np.einsum("ijk,ijk->ij", diff, diff)))


def stability_loss(y_over_time):
    """Sum of squared deviations of one node's representations from their mean."""
    y = np.asarray(y_over_time, dtype=np.float64)
    if y.ndim != 2:
        raise ValidationError("expected an (n, d) array of representations over time")
    if y.shape[0] < 2:
        log.debug("stability loss over %d step(s) is identically 0", y.shape[0])
        return 0.0
    dev = y - y.mean(axis=0)
    return float(np.sum(dev * dev))


def _check_batch(window, batch):
    batch = np.asarray(batch, dtype=np.intp)
    if batch.size == 0:
        raise ValidationError("batch is empty")
    for entry in window.entries:
        bad = batch[entry.states[batch] != NodeState.NORMAL]
        if bad.size:
            raise ValidationError(
                f"batch slot {int(bad[0])} is not normal at snapshot {entry.time_index}"
            )
    return batch


def total_loss(window, batch, params, hyper):
    """Combined window loss for a batch, with the per-term breakdown."""
    batch = _check_batch(window, batch)
    x, rows, pair, h0 = window.batch_slices(batch)
    l1, l2, l_time, _ = kernels.window_forward_backward(
        params.enc_w, params.enc_b, params.dec_w, params.dec_b,
        x, rows, pair, h0,
        hyper.loss_alpha, hyper.beta, hyper.gamma, need_grads=False,
    )
    total = hyper.loss_alpha * l1.sum() + l2.sum() + hyper.gamma * l_time
    return float(total), {"l1": l1, "l2": l2, "l_time": l_time}


def gradients(window, batch, params, hyper):
    """Exact gradients of the combined loss for every weight and bias."""
    batch = _check_batch(window, batch)
    x, rows, pair, h0 = window.batch_slices(batch)
    _, _, _, grads = kernels.window_forward_backward(
        params.enc_w, params.enc_b, params.dec_w, params.dec_b,
        x, rows, pair, h0,
        hyper.loss_alpha, hyper.beta, hyper.gamma, need_grads=True,
    )
    for group in grads:
        for g in group:
            if not np.all(np.isfinite(g)):
                raise CorruptionError("non-finite gradient")
    return grads


def sgd_step(params, grads, eta):
    """In-place plain gradient descent (no momentum, no weight decay)."""
    enc_dw, enc_db, dec_dw, dec_db = grads
    for target, grad in (
        (params.enc_w, enc_dw),
        (params.enc_b, enc_db),
        (params.dec_w, dec_dw),
        (params.dec_b, dec_db),
    ):
        for arr, g in zip(target, grad):
            arr -= eta * g
            if not np.all(np.isfinite(arr)):
                raise CorruptionError("parameter became non-finite during update")
    return params


def sample_batch(window, batch_size, rng):
    """Uniform sample (no replacement) of slots normal at every window step."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    eligible = window.eligible_slots()
    if eligible.size == 0:
        raise TrainingError("no slot is normal across the whole window")
    if eligible.size < batch_size:
        log.warning(
            "only %d eligible slots for batch size %d; batch shrinks",
            eligible.size, batch_size,
        )
        batch_size = eligible.size
    return rng.choice(eligible, size=batch_size, replace=False)


def train_window(window, params=None, hyper=None, seed=0, layer_sizes=None):
    """Train the cell on the current window contents.

    Initializes parameters when none are given (Glorot weights, zero biases,
    ``layer_sizes`` defaulting to a single encoder layer [N+d, d]), otherwise
    warm-starts from the provided ones.  Stops when the relative total-loss
    improvement stays below ``hyper.tol`` for ``hyper.patience`` consecutive
    iterations, or at ``hyper.max_iters``.  Afterwards a forward pass over
    all slots (normal, dangerous, and virtual) produces the representations;
    the trained hidden matrix is written back to every window entry.
    """
    if hyper is None:
        hyper = Hyperparams()
    if not window.entries:
        raise ValidationError("window is empty")
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    # stateless child derivation: spawn() would mutate the parent
    init_ss, batch_ss = (
        np.random.SeedSequence(entropy=seed.entropy, spawn_key=(*seed.spawn_key, c))
        for c in (0, 1)
    )
    if params is None:
        if layer_sizes is None:
            layer_sizes = [window.n_slots + hyper.embedding_dim, hyper.embedding_dim]
        params = ModelParams.initialize(layer_sizes, seed=init_ss)
    if params.n_slots != window.n_slots:
        raise ValidationError(
            f"model expects {params.n_slots} slots, window has {window.n_slots}"
        )
    if params.embedding_dim != hyper.embedding_dim:
        raise ValidationError("hyper.embedding_dim does not match params")

    rng = np.random.default_rng(batch_ss)
    eta = hyper.eta
    best = np.inf
    stall = 0
    history = []
    converged = False
    iterations = 0

    for it in range(hyper.max_iters):
        batch = sample_batch(window, hyper.batch_size, rng)
        x, rows, pair, h0 = window.batch_slices(batch)
        l1, l2, l_time, grads = kernels.window_forward_backward(
            params.enc_w, params.enc_b, params.dec_w, params.dec_b,
            x, rows, pair, h0,
            hyper.loss_alpha, hyper.beta, hyper.gamma, need_grads=True,
        )
        total = float(hyper.loss_alpha * l1.sum() + l2.sum() + hyper.gamma * l_time)
        if not np.isfinite(total):
            raise TrainingError(f"loss diverged at iteration {it}")
        sgd_step(params, grads, eta)
        history.append(
            {
                "iteration": it,
                "total": total,
                "l1": float(l1.sum()),
                "l2": float(l2.sum()),
                "l_time": float(l_time),
            }
        )
        iterations = it + 1
        if np.isfinite(best):
            improvement = (best - total) / max(best, 1e-12)
        else:
            improvement = np.inf
        if improvement < hyper.tol:
            stall += 1
            if stall >= hyper.patience:
                converged = True
                break
        else:
            stall = 0
        best = min(best, total)
        if hyper.lr_decay != 1.0 and iterations % 100 == 0:
            eta *= hyper.lr_decay

    embeddings = embed_window(window, params, write_back=True)
    return TrainResult(params, embeddings, history, iterations, converged)


def embed_window(window, params, write_back=False):
    """Forward pass over every slot of every window entry with hidden carry."""
    x_seq = np.stack([entry.features for entry in window.entries])
    ys = kernels.forward_sequence(params.enc_w, params.enc_b, x_seq, window.carry_hidden)
    if write_back:
        for entry, y in zip(window.entries, ys):
            entry.hidden = y
    return EmbeddingSet(
        time_indices=[e.time_index for e in window.entries],
        node_ids=[e.base.node_ids for e in window.entries],
        y=ys,
        states=[e.states.copy() for e in window.entries],
    )


def save_checkpoint(path, params, hyper, seed, extra=None):
    """Round-trippable dump of layer sizes, weights, hyperparams, and seed."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "layer_sizes": list(params.layer_sizes),
        "hyperparams": hyper.as_dict(),
        "seed": int(seed),
        "extra": extra or {},
    }
    arrays = dict(params.arrays())
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path):
    """Returns (params, hyper, seed, extra) previously saved."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValidationError(f"unsupported checkpoint format {meta.get('format')!r}")
        sizes = meta["layer_sizes"]
        n_layers = len(sizes) - 1
        params = ModelParams(
            sizes,
            [data[f"enc_w_{i}"] for i in range(n_layers)],
            [data[f"enc_b_{i}"] for i in range(n_layers)],
            [data[f"dec_w_{i}"] for i in range(n_layers)],
            [data[f"dec_b_{i}"] for i in range(n_layers)],
        )
    hyper = Hyperparams(**meta["hyperparams"])
    return params, hyper, meta["seed"], meta["extra"]

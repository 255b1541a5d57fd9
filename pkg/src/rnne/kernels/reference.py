"""Pure-numpy window kernels: forward losses and full backpropagation.

The compiled extension implements the same contract; this module is the
reference and the fallback.  One call covers one training iteration over the
unrolled window: encoder/decoder forward for every step with hidden carry,
the three loss terms, and (optionally) exact reverse-mode gradients,
including the paths through the hidden-state carry and the reconstruction
target.
"""

import numpy as np


# clamp keeps outputs strictly inside (0,1) where doubles would round to the
# endpoints; the derivative y(1-y) is ~0 there either way
_SIG_LO = np.nextafter(0.0, 1.0)
_SIG_HI = np.nextafter(1.0, 0.0)


def sigmoid(z):
    """Numerically stable logistic function with open-interval output."""
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, _SIG_LO, _SIG_HI, out=out)


def mlp_forward(first, weights, biases):
    """Forward through sigmoid layers; returns all activations (input first)."""
    acts = [first]
    a = first
    for w, b in zip(weights, biases):
        a = sigmoid(a @ w + b)
        acts.append(a)
    return acts


def _mlp_backward(acts, weights, g_out, dw, db):
    """Backprop g_out through cached activations; accumulates into dw/db.

    Returns the gradient with respect to the layer-stack input.
    """
    delta = g_out * acts[-1] * (1.0 - acts[-1])
    for layer in range(len(weights) - 1, -1, -1):
        dw[layer] += acts[layer].T @ delta
        db[layer] += delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * acts[layer] * (1.0 - acts[layer])
    return delta @ weights[0].T


def _pair_sq_dists(y):
    diff = y[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def window_forward_backward(
    enc_w, enc_b, dec_w, dec_b, x, a_rows, a_pair, h0, alpha, beta, gamma,
    need_grads=True,
):
    """Losses and gradients for one batch over the whole window.

    Inputs: per-layer weights/biases; x (n,b,N) feature slices; a_rows (n,b,N)
    adjacency rows of the batch; a_pair (n,b,b) adjacency among the batch;
    h0 (b,d) hidden carry.  Returns (l1 per step, l2 per step, l_time, grads)
    where the loss terms are unweighted and grads (if requested) belong to
    sum_k(alpha*l1_k + l2_k) + gamma*l_time.
    """
    x = np.asarray(x, dtype=np.float64)
    n, b, n_slots = x.shape
    d = enc_w[-1].shape[1]

    enc_acts = []
    dec_acts = []
    diffs = []
    wsq = []
    ys = np.empty((n, b, d))
    l1 = np.empty(n)
    l2 = np.empty(n)

    h = np.asarray(h0, dtype=np.float64)
    for k in range(n):
        target = np.concatenate([h, x[k]], axis=1)
        acts = mlp_forward(target, enc_w, enc_b)
        y = acts[-1]
        dacts = mlp_forward(y, dec_w, dec_b)
        x_hat = dacts[-1]

        w = np.ones((b, n_slots + d))
        w[:, d:] = np.where(a_rows[k] != 0.0, beta, 1.0)
        diff = x_hat - target
        w2 = w * w
        l2[k] = np.sum(diff * diff * w2)
        l1[k] = np.sum(a_pair[k] * _pair_sq_dists(y))

        enc_acts.append(acts)
        dec_acts.append(dacts)
        diffs.append(diff)
        wsq.append(w2)
        ys[k] = y
        h = y

    y_mean = ys.mean(axis=0)
    dev = ys - y_mean
    l_time = float(np.sum(dev * dev))

    if not need_grads:
        return l1, l2, l_time, None

    enc_dw = [np.zeros_like(w) for w in enc_w]
    enc_db = [np.zeros_like(v) for v in enc_b]
    dec_dw = [np.zeros_like(w) for w in dec_w]
    dec_db = [np.zeros_like(v) for v in dec_b]

    g_h_next = np.zeros((b, d))
    for k in range(n - 1, -1, -1):
        y = ys[k]
        g_y = g_h_next + 2.0 * gamma * dev[k]
        if alpha != 0.0:
            s = a_pair[k] + a_pair[k].T
            g_y += 2.0 * alpha * (s.sum(axis=1)[:, None] * y - s @ y)
        g_xhat = 2.0 * diffs[k] * wsq[k]
        g_y += _mlp_backward(dec_acts[k], dec_w, g_xhat, dec_dw, dec_db)
        g_target = _mlp_backward(enc_acts[k], enc_w, g_y, enc_dw, enc_db)
        g_target = g_target - g_xhat  # reconstruction target is part of the graph
        g_h_next = g_target[:, :d].copy()

    return l1, l2, l_time, (enc_dw, enc_db, dec_dw, dec_db)


def forward_sequence(enc_w, enc_b, x_seq, h0):
    """Encoder-only forward over a step sequence with hidden carry.

    x_seq is (n, rows, N); returns the (n, rows, d) representations.
    Used for the final full-slot pass after training.
    """
    x_seq = np.asarray(x_seq, dtype=np.float64)
    n = x_seq.shape[0]
    h = np.asarray(h0, dtype=np.float64)
    out = []
    for k in range(n):
        target = np.concatenate([h, x_seq[k]], axis=1)
        h = mlp_forward(target, enc_w, enc_b)[-1]
        out.append(h)
    return out

"""Independent reference implementations used to check the library.

These deliberately avoid the library's sparse code paths: the dense oracle
evaluates every expert and multiplies by the full gate matrix, and the
loss oracle recomputes the forward pass naively for finite differencing.
"""

import numpy as np

from sparsegate import moe
from sparsegate.tensor_core import Rng


def dense_gate_oracle(layer, x, eps=None):
    """Full (batch, n) gate matrix computed densely: noisy logits, top-k
    mask via explicit sorting, masked softmax by direct exponentiation."""
    H = x @ layer.W_g
    if eps is not None:
        noise_logits = x @ layer.W_noise
        shifted = np.exp(noise_logits - noise_logits.max(axis=1, keepdims=True))
        H = H + eps * (shifted / shifted.sum(axis=1, keepdims=True))
    G = np.zeros_like(H)
    for b in range(H.shape[0]):
        row = H[b]
        # kth largest with lowest-index tie preference
        order = sorted(range(len(row)), key=lambda i: (-row[i], i))
        kept = order[:layer.k]
        e = np.exp(row[kept] - max(row[kept]))
        G[b, kept] = e / e.sum()
    return G


def dense_forward_oracle(layer, x, eps=None):
    """Term-by-term dense forward: evaluate all n experts, weight by G."""
    G = dense_gate_oracle(layer, x, eps)
    y = np.zeros((x.shape[0], layer.out_dim))
    for i in range(layer.n):
        y += G[:, i:i + 1] * (x @ layer.experts[i])
    return y, G


def replayed_loss(layer, x, targets, eps, w_importance):
    """Scalar MSE + balance loss with the noise draws held fixed; used as the
    function under finite differences."""
    y, G = dense_forward_oracle(layer, x, eps)
    task = np.mean((y - targets) ** 2)
    imp = G.sum(axis=0)
    mu = imp.mean()
    cv2 = np.mean((imp - mu) ** 2) / mu ** 2
    return task + w_importance * cv2


def random_small_instance(seed, n=4, k=2, in_dim=5, out_dim=3, batch=6):
    """Small trainable layer with randomized gating/noise weights plus data."""
    r = Rng(seed)
    layer = moe.init_layer(n, k, in_dim, out_dim, r.child(0))
    layer.W_g += 0.3 * r.child(1).standard_normal((in_dim, n))
    layer.W_noise += 0.3 * r.child(2).standard_normal((in_dim, n))
    x = r.child(3).standard_normal((batch, in_dim))
    targets = r.child(4).standard_normal((batch, out_dim))
    return layer, x, targets, r.child(5)


def topk_gap(H, k):
    """Smallest gap between the k-th and (k+1)-th logits over the batch."""
    s = np.sort(H, axis=1)
    return float(np.min(s[:, -k] - s[:, -k - 1]))


def finite_diff_grads(layer, x, targets, eps, w_importance, h=1e-6):
    """Central finite differences of replayed_loss w.r.t. every parameter."""
    def fd_array(arr):
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            lp = replayed_loss(layer, x, targets, eps, w_importance)
            arr[idx] = orig - h
            lm = replayed_loss(layer, x, targets, eps, w_importance)
            arr[idx] = orig
            g[idx] = (lp - lm) / (2 * h)
        return g

    return {
        "W_g": fd_array(layer.W_g),
        "W_noise": fd_array(layer.W_noise),
        "experts": [fd_array(e) for e in layer.experts],
        "x": fd_array(x),
    }


def max_rel_err(numeric, analytic, floor=1e-3):
    denom = np.maximum(np.abs(numeric), floor)
    return float(np.max(np.abs(numeric - analytic) / denom))

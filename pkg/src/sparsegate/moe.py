"""Sparsely-gated mixture-of-experts layer.

A layer holds n expert weight matrices plus a gating matrix W_g and a noise
matrix W_noise. Gating picks the top-k experts per sample: logits get a
per-sample noise perturbation in train mode, non-top-k logits are masked to
-inf, and a row-wise softmax produces the blend weights. Only the selected
experts are evaluated, so inference cost tracks active parameters.

Analytic gradients treat the top-k mask as a constant (straight-through on
the selection); noise draws are recorded at forward time and replayed in
backward so train-mode passes are reproducible bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import Rng, matmul, softmax, softmax_backward


@dataclass
class MoELayer:
    n: int
    k: int
    in_dim: int
    out_dim: int
    W_g: np.ndarray          # (in_dim, n)
    W_noise: np.ndarray      # (in_dim, n)
    experts: list            # n matrices, each (in_dim, out_dim), no bias
    mode: str = "train"      # "train" | "inference"

    def __post_init__(self):
        if not (1 <= self.k <= self.n):
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if len(self.experts) != self.n:
            raise ValueError(f"expected {self.n} experts, got {len(self.experts)}")
        for e in self.experts:
            if e.shape != (self.in_dim, self.out_dim):
                raise ValueError(f"expert shape {e.shape} != ({self.in_dim}, {self.out_dim})")


def init_layer(n: int, k: int, in_dim: int, out_dim: int, rng: Rng,
               mode: str = "train", dtype=np.float64) -> MoELayer:
    """Fresh layer: W_g and W_noise all-zero, experts scaled-uniform init.

    Zero gating init means every expert starts with an equal shot at the
    top-k; experts need nonzero init to break symmetry.
    """
    bound = np.sqrt(1.0 / in_dim)
    experts = [rng.uniform(-bound, bound, (in_dim, out_dim)).astype(dtype) for _ in range(n)]
    zeros = np.zeros((in_dim, n), dtype=dtype)
    return MoELayer(n, k, in_dim, out_dim, zeros.copy(), zeros.copy(), experts, mode)


@dataclass
class GateResult:
    H: np.ndarray               # (batch, n) pre-top-k logits
    G: np.ndarray               # (batch, n) final gate weights, k nonzeros/row
    active_indices: np.ndarray  # (batch, k) expert indices, descending logit


@dataclass
class ForwardRecord:
    """Everything backward() needs to replay a forward pass."""
    x: np.ndarray
    y: np.ndarray
    gate: GateResult
    eps: np.ndarray | None        # (batch, n) recorded normal draws, None in inference
    noise_scale: np.ndarray | None  # softmax(x @ W_noise), None in inference
    kept: np.ndarray              # (batch, n) boolean top-k mask


@dataclass
class MoEGrads:
    W_g: np.ndarray
    W_noise: np.ndarray
    experts: list
    x: np.ndarray


@dataclass
class LoadBalanceReport:
    importance: np.ndarray
    cv: float
    loss: float
    w_importance: float


def _topk_mask(H: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean keep-mask and (batch, k) indices; ties go to the lowest index."""
    order = np.argsort(-H, axis=1, kind="stable")
    active = order[:, :k]
    kept = np.zeros(H.shape, dtype=bool)
    np.put_along_axis(kept, active, True, axis=1)
    return kept, active


def _gate_record(layer: MoELayer, x: np.ndarray, rng: Rng | None) -> ForwardRecord:
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise ValueError(f"input dim {x.shape} incompatible with in_dim {layer.in_dim}")
    logits = matmul(x, layer.W_g)
    if layer.mode == "train":
        if rng is None:
            raise ValueError("train-mode gating needs an rng for the noise term")
        noise_scale = softmax(matmul(x, layer.W_noise), axis=1)
        eps = rng.standard_normal((x.shape[0], layer.n)).astype(x.dtype)
        H = logits + eps * noise_scale
    else:
        noise_scale = None
        eps = None
        H = logits
    kept, active = _topk_mask(H, layer.k)
    masked = np.where(kept, H, -np.inf)
    G = softmax(masked, axis=1)
    gate_res = GateResult(H=H, G=G, active_indices=active)
    return ForwardRecord(x=x, y=None, gate=gate_res, eps=eps,
                         noise_scale=noise_scale, kept=kept)


def gate(layer: MoELayer, x: np.ndarray, rng: Rng | None = None) -> GateResult:
    """Noisy top-k gating: logits, -inf masking, row-wise softmax."""
    return _gate_record(layer, x, rng).gate


def forward(layer: MoELayer, x: np.ndarray, rng: Rng | None = None,
            record: bool = False):
    """Sparse forward pass: only the k active experts per sample run.

    Returns (y, GateResult), or a ForwardRecord when record=True.
    """
    rec = _gate_record(layer, x, rng)
    G = rec.gate.G
    y = np.zeros((x.shape[0], layer.out_dim), dtype=x.dtype)
    for i in range(layer.n):
        rows = np.nonzero(rec.kept[:, i])[0]
        if rows.size == 0:
            continue
        y[rows] += G[rows, i:i + 1] * matmul(x[rows], layer.experts[i])
    rec.y = y
    if record:
        return rec
    return y, rec.gate


def importance(G: np.ndarray) -> np.ndarray:
    """Per-expert sum of gate weights across the batch (column sums)."""
    return np.asarray(G).sum(axis=0)


def load_balance_loss(G: np.ndarray, w_importance: float) -> LoadBalanceReport:
    """w * CV(importance)^2 with the population standard deviation."""
    imp = importance(G)
    mean = imp.mean()
    if mean <= 0:
        raise ValueError("mean importance must be positive")
    cv = float(np.sqrt(np.mean((imp - mean) ** 2)) / mean)
    return LoadBalanceReport(importance=imp, cv=cv,
                             loss=w_importance * cv ** 2,
                             w_importance=w_importance)


def _importance_grad(G: np.ndarray, w_importance: float) -> np.ndarray:
    """dL_balance/dG, broadcast over the batch (dImportance_j/dG_bj = 1)."""
    imp = importance(G)
    n = imp.shape[0]
    mu = imp.mean()
    var = np.mean((imp - mu) ** 2)
    d_imp = w_importance * (2.0 * (imp - mu) / (n * mu ** 2) - 2.0 * var / (n * mu ** 3))
    return np.broadcast_to(d_imp, G.shape)


def backward(layer: MoELayer, rec: ForwardRecord, grad_y: np.ndarray,
             w_importance: float = 0.0) -> MoEGrads:
    """Analytic gradients for W_g, W_noise, active experts, and the input.

    The scalar loss is any differentiable function of y (supplied as
    dL/dy = grad_y) plus the load-balancing term w * CV(importance)^2.
    Inactive experts get exactly-zero gradient blocks.
    """
    if rec.y is None:
        raise ValueError("backward needs a recorded forward pass")
    x, G, kept = rec.x, rec.gate.G, rec.kept

    # dL/dG: through y (active experts only) plus the balance term.
    grad_G = np.zeros_like(G)
    expert_out = {}
    for i in range(layer.n):
        rows = np.nonzero(kept[:, i])[0]
        if rows.size == 0:
            continue
        out_i = matmul(x[rows], layer.experts[i])
        expert_out[i] = (rows, out_i)
        grad_G[rows, i] = np.sum(grad_y[rows] * out_i, axis=1)
    if w_importance != 0.0:
        grad_G = grad_G + _importance_grad(G, w_importance)

    # Softmax over kept logits; masked entries have G == 0 so get no gradient.
    grad_H = softmax_backward(G, grad_G)

    grad_Wg = x.T @ grad_H
    grad_x = grad_H @ layer.W_g.T

    if layer.mode == "train":
        grad_scale = rec.eps * grad_H
        grad_noise_logits = softmax_backward(rec.noise_scale, grad_scale)
        grad_Wnoise = x.T @ grad_noise_logits
        grad_x += grad_noise_logits @ layer.W_noise.T
    else:
        grad_Wnoise = np.zeros_like(layer.W_noise)

    grad_experts = [np.zeros_like(e) for e in layer.experts]
    for i, (rows, _out) in expert_out.items():
        weighted = G[rows, i:i + 1] * grad_y[rows]
        grad_experts[i] = x[rows].T @ weighted
        grad_x[rows] += weighted @ layer.experts[i].T

    return MoEGrads(W_g=grad_Wg, W_noise=grad_Wnoise, experts=grad_experts, x=grad_x)


@dataclass
class TrainTrace:
    epochs: list = field(default_factory=list)
    task_loss: list = field(default_factory=list)
    balance_loss: list = field(default_factory=list)
    cv: list = field(default_factory=list)
    final_cv: float = float("nan")  # deterministic-gating CV after training

    def __len__(self):
        return len(self.epochs)


def make_regime_dataset(rng: Rng, samples: int, in_dim: int, out_dim: int,
                        scale: float = 1.0,
                        regime_bias: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear regression with 4 regimes keyed on the sign pattern
    of the first two input coordinates; each regime has its own linear map.

    regime_bias shifts those coordinates so regime frequencies are uneven,
    which gives ungated training a reason to concentrate on few experts.
    """
    x = rng.standard_normal((samples, in_dim))
    x[:, :2] += regime_bias
    maps = [scale * rng.standard_normal((in_dim, out_dim)) for _ in range(4)]
    regime = (x[:, 0] > 0).astype(int) * 2 + (x[:, 1] > 0).astype(int)
    t = np.empty((samples, out_dim))
    for r in range(4):
        rows = regime == r
        t[rows] = x[rows] @ maps[r]
    return x, t


def train_lite(layer: MoELayer, inputs: np.ndarray, targets: np.ndarray,
               epochs: int, lr: float, w_importance: float, rng: Rng) -> TrainTrace:
    """Full-batch gradient descent on MSE plus the load-balancing loss.

    A miniature loop meant to exercise the balance term, not a trainer:
    returns per-epoch task loss, balance loss, and CV(importance).
    """
    trace = TrainTrace()
    batch = inputs.shape[0]
    for epoch in range(epochs):
        rec = forward(layer, inputs, rng, record=True)
        err = rec.y - targets
        task = float(np.mean(err ** 2))
        report = load_balance_loss(rec.gate.G, w_importance)
        if not (np.isfinite(task) and np.isfinite(report.loss)):
            raise FloatingPointError(
                f"non-finite loss at epoch {epoch}: task={task}, balance={report.loss}")
        grad_y = 2.0 * err / err.size
        grads = backward(layer, rec, grad_y, w_importance)
        layer.W_g -= lr * grads.W_g
        layer.W_noise -= lr * grads.W_noise
        for e, ge in zip(layer.experts, grads.experts):
            e -= lr * ge
        trace.epochs.append(epoch)
        trace.task_loss.append(task)
        trace.balance_loss.append(report.loss)
        trace.cv.append(report.cv)
    # Per-epoch CVs include gate noise; the headline number comes from one
    # deterministic pass over the training set.
    saved_mode = layer.mode
    layer.mode = "inference"
    try:
        _, gate_result = forward(layer, inputs)
        trace.final_cv = load_balance_loss(gate_result.G, 1.0).cv
    finally:
        layer.mode = saved_mode
    return trace

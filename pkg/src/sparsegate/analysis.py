"""Expert-utilization and gate-sensitivity analysis over observation replays.

Traces capture the gate weights at every timestep of a deterministic
replay. Utilization is the fraction of steps each expert is active.
Sensitivity is the average absolute gradient of each expert's gate weight
with respect to the observation, grouped by observation span; padded
observation entries are constants and carry exactly-zero sensitivity.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from . import moe
from .policy_net import LAYOUT, OBS_SPANS, PolicyNetwork, forward_policy
from .tensor_core import elu, elu_grad, matmul, softmax

SPAN_NAMES = tuple(name for name, _ in OBS_SPANS)

OBS_FILE_MAGIC = b"SGOB"
OBS_FILE_VERSION = 1


@dataclass
class GateTrace:
    weights: np.ndarray         # (timesteps, n) gate values
    active: np.ndarray          # (timesteps, k) expert indices

    @property
    def timesteps(self) -> int:
        return self.weights.shape[0]


@dataclass
class SensitivityReport:
    per_entry: np.ndarray       # (n, obs_dim) mean |dG_i/dobs|; nan rows for absent experts
    per_span: np.ndarray        # (n, len(SPAN_NAMES)) span-averaged values
    present: np.ndarray         # (n,) expert appeared in at least one top-k
    span_names: tuple = SPAN_NAMES


def _require_moe(net: PolicyNetwork) -> moe.MoELayer:
    layer = net.moe_layer
    if layer is None:
        raise ValueError("analysis requires a gated-experts actor, got a dense one")
    return layer


def record_trace(net: PolicyNetwork, obs_sequence: np.ndarray) -> GateTrace:
    """Gate weights per step during deterministic inference."""
    layer = _require_moe(net)
    obs_sequence = np.atleast_2d(np.asarray(obs_sequence, dtype=float))
    if obs_sequence.size == 0:
        return GateTrace(weights=np.zeros((0, layer.n)),
                         active=np.zeros((0, layer.k), dtype=int))
    _, gate_result = forward_policy(net, obs_sequence)
    return GateTrace(weights=gate_result.G.copy(),
                     active=np.sort(gate_result.active_indices, axis=1))


def utilization(trace: GateTrace) -> np.ndarray:
    """Fraction of timesteps each expert sits in the active set."""
    if trace.timesteps == 0:
        raise ValueError("utilization of an empty trace is undefined")
    n = trace.weights.shape[1]
    counts = np.zeros(n)
    for i in range(n):
        counts[i] = np.count_nonzero(np.any(trace.active == i, axis=1))
    return counts / trace.timesteps


def gate_input_jacobian(net: PolicyNetwork, obs: np.ndarray) -> np.ndarray:
    """Analytic dG/dobs for one observation: (n, obs_dim).

    The top-k selection is held fixed; gradients flow through the gating
    matrix and the softmax over kept logits, then back through the first
    dense layer's ELU. Padding entries are constants, so their columns are
    zeroed.
    """
    layer = _require_moe(net)
    first = net.layers[0]
    obs = np.asarray(obs, dtype=float).reshape(1, -1)
    z1 = matmul(obs, first.W) + first.b
    u = elu(z1)
    logits = matmul(u, layer.W_g)
    kept, _ = moe._topk_mask(logits, layer.k)
    G = softmax(np.where(kept, logits, -np.inf), axis=1)[0]

    jac = np.zeros((layer.n, obs.shape[1]))
    du = elu_grad(z1)[0]
    for i in np.nonzero(kept[0])[0]:
        # dG_i/dlogit_j = G_i (delta_ij - G_j) on kept entries, 0 elsewhere
        g_logit = -G[i] * G
        g_logit[i] += G[i]
        g_logit[~kept[0]] = 0.0
        g_u = layer.W_g @ g_logit
        jac[i] = first.W @ (g_u * du)
    jac[:, LAYOUT.padding_indices()] = 0.0
    return jac


def sensitivity(net: PolicyNetwork, obs_sequence: np.ndarray) -> SensitivityReport:
    """Average absolute gate gradient per expert, over steps where the
    expert's gradient is nonzero, grouped by observation span."""
    layer = _require_moe(net)
    obs_sequence = np.atleast_2d(np.asarray(obs_sequence, dtype=float))
    n, dim = layer.n, LAYOUT.dim
    acc = np.zeros((n, dim))
    counts = np.zeros(n, dtype=int)
    for obs in obs_sequence:
        jac = gate_input_jacobian(net, obs)
        live = np.any(jac != 0.0, axis=1)
        acc[live] += np.abs(jac[live])
        counts[live] += 1
    present = counts > 0
    per_entry = np.full((n, dim), np.nan)
    per_entry[present] = acc[present] / counts[present, None]
    per_span = np.full((n, len(SPAN_NAMES)), np.nan)
    for s, name in enumerate(SPAN_NAMES):
        sl = LAYOUT.slice(name)
        per_span[present, s] = per_entry[present, sl].mean(axis=1)
    return SensitivityReport(per_entry=per_entry, per_span=per_span, present=present)


# --- CSV / binary containers ------------------------------------------------

def export_trace_csv(trace: GateTrace, path: str) -> None:
    n = trace.weights.shape[1]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["timestep", *[f"expert_{i}" for i in range(n)]])
        for t in range(trace.timesteps):
            writer.writerow([t, *[repr(float(v)) for v in trace.weights[t]]])


def load_trace_csv(path: str) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ValueError(f"{path}: empty trace file")
    return np.array([[float(v) for v in row[1:]] for row in rows[1:]])


def export_sensitivity_csv(report: SensitivityReport, path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["expert", "present", *report.span_names])
        for i in range(report.per_span.shape[0]):
            writer.writerow([i, int(report.present[i]),
                             *[repr(float(v)) for v in report.per_span[i]]])


def load_sensitivity_csv(path: str) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return np.array([[float(v) for v in row[2:]] for row in rows[1:]])


def save_obs_sequence(path: str, obs_sequence: np.ndarray) -> None:
    """Binary container: 16-byte header (magic, version, timesteps, dim)
    followed by float32 little-endian samples."""
    obs = np.atleast_2d(np.asarray(obs_sequence, dtype=np.float32))
    t, dim = obs.shape
    with open(path, "wb") as f:
        f.write(OBS_FILE_MAGIC)
        f.write(struct.pack("<III", OBS_FILE_VERSION, t, dim))
        f.write(obs.astype("<f4").tobytes())


def load_obs_sequence(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != OBS_FILE_MAGIC:
            raise ValueError(f"{path}: not an observation-sequence file")
        version, t, dim = struct.unpack("<III", header[4:])
        if version != OBS_FILE_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        data = f.read(t * dim * 4)
        if len(data) != t * dim * 4:
            raise ValueError(f"{path}: truncated payload")
    return np.frombuffer(data, dtype="<f4").reshape(t, dim).astype(np.float64)

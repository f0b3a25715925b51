"""Actor networks and the structured observation layout.

The actor maps a 591-dim observation to 12 joint-position targets. Two
families: a gated-experts actor (dense in-layer, expert-mixture middle
layer, dense out-layer, linear head) and plain sequential MLP baselines in
four preset sizes. Parameter accounting distinguishes total parameters
from the parameters actually touched at inference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import moe
from .tensor_core import Rng, elu, matmul

OBS_DIM = 591
ACTION_DIM = 12

# (name, length) pairs, concatenated in order. proprio breaks down as
# ang_vel 3, roll/pitch 2, command 3 (v_x plus two zero pads), q 12,
# dq 12, prev_action 12, foot_contacts 4.
OBS_SPANS = (
    ("proprio", 48),
    ("proprio_history", 480),
    ("perception_latent", 32),
    ("heading", 2),
    ("phys_latent", 20),
    ("robot_info", 9),
)

PROPRIO_FIELDS = (
    ("ang_vel", 3),
    ("roll_pitch", 2),
    ("command", 3),
    ("q", 12),
    ("dq", 12),
    ("prev_action", 12),
    ("foot_contacts", 4),
)


class ObservationLayout:
    """Named contiguous spans of the 591-dim observation vector."""

    def __init__(self):
        self.spans = {}
        off = 0
        for name, length in OBS_SPANS:
            self.spans[name] = (off, length)
            off += length
        if off != OBS_DIM:
            raise AssertionError(f"span lengths sum to {off}, expected {OBS_DIM}")
        self.dim = off

    def offset(self, name: str) -> int:
        return self.spans[name][0]

    def slice(self, name: str) -> slice:
        off, length = self.spans[name]
        return slice(off, off + length)

    def proprio_field_slice(self, field_name: str) -> slice:
        off = self.offset("proprio")
        for name, length in PROPRIO_FIELDS:
            if name == field_name:
                return slice(off, off + length)
            off += length
        raise KeyError(field_name)

    def padding_indices(self) -> np.ndarray:
        """Indices that are zero-padding constants: the two command pads and
        the six trailing robot_info pads."""
        cmd = self.proprio_field_slice("command")
        info_off, info_len = self.spans["robot_info"]
        pads = [cmd.start + 1, cmd.start + 2]
        pads += list(range(info_off + 3, info_off + info_len))
        return np.array(pads, dtype=int)


LAYOUT = ObservationLayout()


def assemble_observation(ang_vel, roll_pitch, command_vx, q, dq, prev_action,
                         foot_contacts, proprio_history, perception_latent,
                         heading, phys_latent, velocity) -> np.ndarray:
    """Concatenate components into the 591-dim observation.

    command_vx is a scalar padded with two zeros; velocity (3) is padded
    with six zeros to the 9-dim robot_info span.
    """
    def check(name, arr, length):
        arr = np.asarray(arr, dtype=float).ravel()
        if arr.shape != (length,):
            raise ValueError(f"span '{name}' expects length {length}, got {arr.shape}")
        return arr

    command = np.array([float(command_vx), 0.0, 0.0])
    robot_info = np.concatenate([check("velocity", velocity, 3), np.zeros(6)])
    parts = [
        check("ang_vel", ang_vel, 3),
        check("roll_pitch", roll_pitch, 2),
        command,
        check("q", q, 12),
        check("dq", dq, 12),
        check("prev_action", prev_action, 12),
        check("foot_contacts", foot_contacts, 4),
        check("proprio_history", proprio_history, 480),
        check("perception_latent", perception_latent, 32),
        check("heading", heading, 2),
        check("phys_latent", phys_latent, 20),
        robot_info,
    ]
    obs = np.concatenate(parts)
    assert obs.shape == (OBS_DIM,)
    return obs


@dataclass
class ActorSpec:
    kind: str                       # "moe" | "dense"
    hidden: tuple = (512, 256, 256)
    n: int = 16
    k: int = 4
    w_importance: float = 0.1
    expert_out: int | None = None   # override expert width (param-matched variant)
    input_dim: int = OBS_DIM
    output_dim: int = ACTION_DIM
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("moe", "dense"):
            raise ValueError(f"unknown actor kind {self.kind!r}")
        if any(h <= 0 for h in self.hidden) or self.input_dim <= 0 or self.output_dim <= 0:
            raise ValueError("all layer dims must be positive")


DENSE_PRESETS = {
    "small": (256, 128, 64),
    "medium": (512, 256, 128),
    "large": (512, 512, 387),
    "extra_large": (1024, 620, 512),
}


def dense_spec(preset: str) -> ActorSpec:
    return ActorSpec(kind="dense", hidden=DENSE_PRESETS[preset], name=f"dense-{preset}")


def moe_default_spec() -> ActorSpec:
    return ActorSpec(kind="moe", hidden=(512, 256, 256), n=16, k=4,
                     w_importance=0.1, name="moe-top4of16")


@dataclass
class DenseLayer:
    W: np.ndarray
    b: np.ndarray


@dataclass
class PolicyNetwork:
    spec: ActorSpec
    layers: list = field(default_factory=list)  # DenseLayer | moe.MoELayer

    @property
    def moe_layer(self) -> moe.MoELayer | None:
        for layer in self.layers:
            if isinstance(layer, moe.MoELayer):
                return layer
        return None


def _init_dense(in_dim: int, out_dim: int, rng: Rng, dtype) -> DenseLayer:
    bound = np.sqrt(1.0 / in_dim)
    W = rng.uniform(-bound, bound, (in_dim, out_dim)).astype(dtype)
    return DenseLayer(W=W, b=np.zeros(out_dim, dtype=dtype))


def build_actor(spec: ActorSpec, rng: Rng, dtype=np.float64) -> PolicyNetwork:
    """Build the actor. Dense: in -> h1 -> h2 -> h3 -> out with ELU between
    layers and a linear head. Gated: the middle layer is the expert mixture."""
    layers: list = []
    if spec.kind == "dense":
        dims = [spec.input_dim, *spec.hidden]
        for a, b in zip(dims[:-1], dims[1:]):
            layers.append(_init_dense(a, b, rng, dtype))
        layers.append(_init_dense(dims[-1], spec.output_dim, rng, dtype))
    else:
        h1, h2, h3 = spec.hidden
        expert_out = spec.expert_out if spec.expert_out is not None else h2
        layers.append(_init_dense(spec.input_dim, h1, rng, dtype))
        layers.append(moe.init_layer(spec.n, spec.k, h1, expert_out, rng,
                                     mode="inference", dtype=dtype))
        layers.append(_init_dense(expert_out, h3, rng, dtype))
        layers.append(_init_dense(h3, spec.output_dim, rng, dtype))
    return PolicyNetwork(spec=spec, layers=layers)


def forward_policy(net: PolicyNetwork, obs: np.ndarray,
                   rng: Rng | None = None):
    """Deterministic actor forward. Returns (actions, GateResult-or-None).

    ELU after every layer except the final head.
    """
    x = np.atleast_2d(np.asarray(obs))
    if x.shape[1] != net.spec.input_dim:
        raise ValueError(f"observation dim {x.shape[1]} != {net.spec.input_dim}")
    gate_result = None
    last = len(net.layers) - 1
    for idx, layer in enumerate(net.layers):
        if isinstance(layer, moe.MoELayer):
            x, gate_result = moe.forward(layer, x, rng)
        else:
            x = matmul(x, layer.W) + layer.b
        if idx != last:
            x = elu(x)
    return x, gate_result


@dataclass
class LayerParams:
    name: str
    weights: int
    biases: int


@dataclass
class ParamReport:
    layers: list
    total_params: int
    active_params_at_inference: int
    weight_only_total: int
    weight_only_active: int


def count_params(net: PolicyNetwork) -> ParamReport:
    """Exact per-layer counts; active counts drop the (n - k) unused experts."""
    rows = []
    total = 0
    weight_only = 0
    inactive = 0
    for idx, layer in enumerate(net.layers):
        if isinstance(layer, moe.MoELayer):
            per_expert = layer.in_dim * layer.out_dim
            w = 2 * layer.in_dim * layer.n + layer.n * per_expert
            rows.append(LayerParams(name=f"layer{idx}:moe(n={layer.n},k={layer.k})",
                                    weights=w, biases=0))
            total += w
            weight_only += w
            inactive += (layer.n - layer.k) * per_expert
        else:
            w = layer.W.size
            b = layer.b.size
            rows.append(LayerParams(name=f"layer{idx}:dense{layer.W.shape}", weights=w, biases=b))
            total += w + b
            weight_only += w
    return ParamReport(layers=rows, total_params=total,
                       active_params_at_inference=total - inactive,
                       weight_only_total=weight_only,
                       weight_only_active=weight_only - inactive)


def dense_spec_matched_to(target_weights: int, name: str = "dense-matched") -> ActorSpec:
    """Dense spec whose weight-only count approximates target_weights, by
    scaling the extra-large preset's layer proportions."""
    base = np.array(DENSE_PRESETS["extra_large"], dtype=float)

    def weights(scale: float) -> int:
        h = np.maximum(np.round(base * scale).astype(int), 1)
        dims = [OBS_DIM, *h, ACTION_DIM]
        return sum(a * b for a, b in zip(dims[:-1], dims[1:]))

    lo, hi = 0.01, 50.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if weights(mid) < target_weights:
            lo = mid
        else:
            hi = mid
    scale = 0.5 * (lo + hi)
    hidden = tuple(int(v) for v in np.maximum(np.round(base * scale).astype(int), 1))
    return ActorSpec(kind="dense", hidden=hidden, name=name)

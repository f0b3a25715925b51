"""Reward terms for the locomotion task, as pure functions of a state snapshot.

Fourteen terms: two tracking bonuses and twelve penalties, each with a
fixed coefficient. The per-step reward is the weighted sum floored at
zero; a trajectory-cumulative flooring variant is available behind a flag.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

DT = 0.02  # control timestep, 50 Hz

HIP_INDICES = (0, 3, 6, 9)

COEFFICIENTS = {
    "tracking_yaw": 0.5,
    "lin_vel_z": -1.5,
    "ang_vel_xy": -0.05,
    "orientation": -1.0,
    "dof_acc": -2.5e-7,
    "collision": -10.0,
    "action_rate": -0.1,
    "delta_torques": -1.0e-7,
    "torques": -1e-5,
    "hip_pos": -0.5,
    "dof_error": -0.04,
    "feet_stumble": -1.0,
    "feet_edge": -1.0,
    "tracking_goal_vel": 1.5,
}

TERM_NAMES = tuple(COEFFICIENTS)


@dataclass
class RewardState:
    psi: float = None                 # yaw, radians
    psi_goal: float = None
    v: np.ndarray = None              # base linear velocity, 3
    omega: np.ndarray = None          # base angular velocity, 3
    gravity: np.ndarray = None        # projected gravity, 3
    q: np.ndarray = None              # joint positions, 12
    dq: np.ndarray = None
    dq_prev: np.ndarray = None
    action: np.ndarray = None
    action_prev: np.ndarray = None
    tau: np.ndarray = None            # joint torques, 12
    tau_prev: np.ndarray = None
    collision_forces: np.ndarray = None  # (n_bodies, 3) contact forces on collision bodies
    feet_forces: np.ndarray = None       # (4, 3)
    foot_contacts: np.ndarray = None     # (4,) booleans
    foot_near_edge: np.ndarray = None    # (4,) edge indicator at foot positions
    default_pose: np.ndarray = None      # 12
    p_robot: np.ndarray = None           # world position, 3
    p_goal: np.ndarray = None
    vx_target: float = None
    is_walking_env: bool = False
    hip_indices: tuple = HIP_INDICES
    dt: float = DT


def _require(state: RewardState, term: str, *names: str):
    for name in names:
        if getattr(state, name) is None:
            raise ValueError(f"reward term '{term}' needs state field '{name}'")


def tracking_yaw(state: RewardState) -> float:
    _require(state, "tracking_yaw", "psi", "psi_goal")
    return float(np.exp(-abs(state.psi_goal - state.psi)))


def lin_vel_z(state: RewardState) -> float:
    _require(state, "lin_vel_z", "v")
    vz = float(state.v[2])
    return vz if state.is_walking_env else 0.5 * vz


def ang_vel_xy(state: RewardState) -> float:
    _require(state, "ang_vel_xy", "omega")
    return float(state.omega[0] ** 2 + state.omega[1] ** 2)


def orientation(state: RewardState) -> float:
    if not state.is_walking_env:
        return 0.0
    _require(state, "orientation", "gravity")
    return float(state.gravity[0] ** 2 + state.gravity[1] ** 2)


def dof_acc(state: RewardState) -> float:
    _require(state, "dof_acc", "dq", "dq_prev")
    return float(np.sum(((np.asarray(state.dq) - np.asarray(state.dq_prev)) / state.dt) ** 2))


def collision(state: RewardState) -> float:
    _require(state, "collision", "collision_forces")
    norms = np.linalg.norm(np.atleast_2d(state.collision_forces), axis=1)
    return float(np.sum(norms > 0.1))


def action_rate(state: RewardState) -> float:
    _require(state, "action_rate", "action", "action_prev")
    return float(np.linalg.norm(np.asarray(state.action) - np.asarray(state.action_prev)))


def delta_torques(state: RewardState) -> float:
    _require(state, "delta_torques", "tau", "tau_prev")
    return float(np.sum((np.asarray(state.tau) - np.asarray(state.tau_prev)) ** 2))


def torques(state: RewardState) -> float:
    _require(state, "torques", "tau")
    return float(np.sum(np.asarray(state.tau) ** 2))


def hip_pos(state: RewardState) -> float:
    _require(state, "hip_pos", "q", "default_pose")
    idx = list(state.hip_indices)
    diff = np.asarray(state.q)[idx] - np.asarray(state.default_pose)[idx]
    return float(np.sum(diff ** 2))


def dof_error(state: RewardState) -> float:
    _require(state, "dof_error", "q", "default_pose")
    return float(np.sum((np.asarray(state.q) - np.asarray(state.default_pose)) ** 2))


def feet_stumble(state: RewardState) -> float:
    # Triggers when any single foot's tangential force exceeds 4x its
    # normal force.
    _require(state, "feet_stumble", "feet_forces")
    f = np.atleast_2d(state.feet_forces)
    lateral = np.linalg.norm(f[:, :2], axis=1)
    return float(np.any(lateral > 4.0 * np.abs(f[:, 2])))


def feet_edge(state: RewardState) -> float:
    _require(state, "feet_edge", "foot_contacts", "foot_near_edge")
    c = np.asarray(state.foot_contacts, dtype=float)
    m = np.asarray(state.foot_near_edge, dtype=float)
    return float(np.sum(c * m))


def tracking_goal_vel(state: RewardState) -> float:
    """Velocity toward the goal, capped at the commanded forward speed."""
    _require(state, "tracking_goal_vel", "v", "p_robot", "p_goal", "vx_target")
    d = np.asarray(state.p_goal, dtype=float) - np.asarray(state.p_robot, dtype=float)
    dist = np.linalg.norm(d)
    if dist == 0.0:
        raise ValueError("tracking_goal_vel undefined at zero goal distance")
    return float(min(np.dot(np.asarray(state.v, dtype=float), d / dist), state.vx_target))


_TERM_FNS = {
    "tracking_yaw": tracking_yaw,
    "lin_vel_z": lin_vel_z,
    "ang_vel_xy": ang_vel_xy,
    "orientation": orientation,
    "dof_acc": dof_acc,
    "collision": collision,
    "action_rate": action_rate,
    "delta_torques": delta_torques,
    "torques": torques,
    "hip_pos": hip_pos,
    "dof_error": dof_error,
    "feet_stumble": feet_stumble,
    "feet_edge": feet_edge,
    "tracking_goal_vel": tracking_goal_vel,
}


def reward_term(name: str, state: RewardState) -> float:
    """Raw (uncoefficiented) value of one term."""
    try:
        fn = _TERM_FNS[name]
    except KeyError:
        raise KeyError(f"unknown reward term {name!r}") from None
    return fn(state)


@dataclass
class RewardBreakdown:
    terms: dict = field(default_factory=dict)  # name -> (raw, coefficient, weighted)
    total: float = 0.0
    floored_total: float = 0.0


def step_reward(state: RewardState) -> RewardBreakdown:
    """All 14 weighted terms, their sum, and the sum floored at zero."""
    breakdown = RewardBreakdown()
    total = 0.0
    for name in TERM_NAMES:
        raw = reward_term(name, state)
        coeff = COEFFICIENTS[name]
        weighted = coeff * raw
        breakdown.terms[name] = (raw, coeff, weighted)
        total += weighted
    breakdown.total = total
    breakdown.floored_total = max(0.0, total)
    return breakdown


def trajectory_return(states, floor_mode: str = "per_step") -> float:
    """Sum of rewards over a trajectory.

    per_step floors each step's sum at zero (so the return is >= 0 by
    construction); trajectory floors only the cumulative sum.
    """
    if floor_mode not in ("per_step", "trajectory"):
        raise ValueError(f"unknown floor_mode {floor_mode!r}")
    totals = [step_reward(s) for s in states]
    if floor_mode == "per_step":
        return sum(b.floored_total for b in totals)
    return max(0.0, sum(b.total for b in totals))


# --- trajectory text format -------------------------------------------------
#
# One trajectory per file. Steps are blocks separated by blank lines; each
# line is "field: v1 v2 ..." with booleans as 0/1. Array fields use
# whitespace-separated floats; collision_forces/feet_forces flatten rows.

_SCALAR_FIELDS = {"psi", "psi_goal", "vx_target", "dt"}
_BOOL_FIELDS = {"is_walking_env"}
_MATRIX_FIELDS = {"collision_forces": 3, "feet_forces": 3}


def save_trajectory(path: str, states) -> None:
    skip = {"hip_indices"}
    with open(path, "w") as f:
        for state in states:
            for fld in dc_fields(RewardState):
                if fld.name in skip:
                    continue
                val = getattr(state, fld.name)
                if val is None:
                    continue
                if fld.name in _SCALAR_FIELDS:
                    f.write(f"{fld.name}: {float(val)!r}\n")
                elif fld.name in _BOOL_FIELDS:
                    f.write(f"{fld.name}: {int(val)}\n")
                else:
                    flat = np.asarray(val, dtype=float).ravel()
                    f.write(f"{fld.name}: " + " ".join(repr(float(v)) for v in flat) + "\n")
            f.write("\n")


def load_trajectory(path: str) -> list:
    states = []
    block: dict = {}

    def flush():
        if not block:
            return
        kwargs = {}
        for name, values in block.items():
            if name in _SCALAR_FIELDS:
                kwargs[name] = values[0]
            elif name in _BOOL_FIELDS:
                kwargs[name] = bool(values[0])
            elif name in _MATRIX_FIELDS:
                kwargs[name] = np.array(values).reshape(-1, _MATRIX_FIELDS[name])
            else:
                kwargs[name] = np.array(values)
        states.append(RewardState(**kwargs))
        block.clear()

    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                flush()
                continue
            if ":" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'field: values'")
            name, _, rest = line.partition(":")
            block[name.strip()] = [float(tok) for tok in rest.split()]
    flush()
    return states


def export_breakdowns_csv(path: str, breakdowns) -> None:
    """One row per step: step index, each weighted term, total, floored total."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", *TERM_NAMES, "total", "floored_total"])
        for i, b in enumerate(breakdowns):
            row = [i] + [repr(float(b.terms[name][2])) for name in TERM_NAMES]
            row += [repr(float(b.total)), repr(float(b.floored_total))]
            writer.writerow(row)

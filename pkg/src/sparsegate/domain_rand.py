"""Domain-randomization samplers and observation noising.

Every randomized quantity is described by a RandSpec (uniform, gaussian,
or binomial). The default table covers observation noise, camera pose and
FOV, depth-artifact parameters, the velocity command, and the physics
offsets. Observation noising perturbs only the current proprio frame:
Gaussian noise on angular velocity, roll/pitch, joint positions and
velocities, plus independent Bernoulli flips of the four contact bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy_net import LAYOUT
from .tensor_core import Rng


@dataclass(frozen=True)
class RandSpec:
    name: str
    dist: str                 # "uniform" | "gaussian" | "binomial"
    low: float = 0.0
    high: float = 0.0
    mean: float = 0.0
    sigma: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        if self.dist == "uniform":
            if self.low > self.high:
                raise ValueError(f"{self.name}: uniform needs low <= high")
        elif self.dist == "gaussian":
            if self.sigma < 0:
                raise ValueError(f"{self.name}: gaussian needs sigma >= 0")
        elif self.dist == "binomial":
            if not 0.0 <= self.p <= 1.0:
                raise ValueError(f"{self.name}: binomial needs 0 <= p <= 1")
        else:
            raise ValueError(f"{self.name}: unknown distribution {self.dist!r}")


def u(name, low, high):
    return RandSpec(name, "uniform", low=low, high=high)


def g(name, mean, sigma):
    return RandSpec(name, "gaussian", mean=mean, sigma=sigma)


def b(name, p):
    return RandSpec(name, "binomial", p=p)


DEFAULT_TABLE = {spec.name: spec for spec in [
    g("rotation", 0.0, 0.025),
    g("joint_pos", 0.0, 0.01),
    g("joint_vel", 0.0, 1.5),
    g("ang_vel", 0.0, 0.2),
    b("foot_contact", 0.05),
    g("cam_x_pos", 0.32, 0.01),
    g("cam_y_pos", -0.0175, 0.0025),
    g("cam_z_pos", 0.15, 0.02),
    u("cam_x_rot", -1.0, 1.0),
    u("cam_y_rot", 21.2, 24.6),
    u("cam_z_rot", -1.0, 1.0),
    u("horizontal_fov", 85.0, 89.0),
    b("depth_artifact", 0.001),
    g("depth_artifact_height", 3.0, 3.0),
    g("depth_artifact_width", 3.0, 3.0),
    b("contour_artifact", 0.1),
    u("gaussian_blur_sigma", 0.1, 2.0),
    u("vx_target", 0.3, 0.8),
    u("friction", 0.6, 2.0),
    u("com_offset", -0.2, 0.2),
    u("mass_offset", 0.0, 3.0),
    u("motor_strength", 0.8, 1.2),
]}


def sample(spec: RandSpec, rng: Rng, shape=None):
    """One draw (or an array of draws) from the spec's distribution."""
    if spec.dist == "uniform":
        out = rng.uniform(spec.low, spec.high, shape)
    elif spec.dist == "gaussian":
        out = spec.mean + spec.sigma * rng.standard_normal(shape)
    else:
        out = rng.random(shape) < spec.p
    return out


def load_table(path: str) -> dict:
    """Parse a plain-text randomization table.

    One row per line with the columns term, type, l, h, mu, sigma, p,
    whitespace-separated, '-' for unused entries; '#' starts a comment.
    """
    table = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            cols = line.split()
            if len(cols) != 7:
                raise ValueError(f"{path}:{lineno}: expected 7 columns, got {len(cols)}")
            name, dist = cols[0], cols[1]
            vals = [0.0 if c == "-" else float(c) for c in cols[2:]]
            kind = {"u": "uniform", "g": "gaussian", "b": "binomial"}.get(dist)
            if kind is None:
                raise ValueError(f"{path}:{lineno}: unknown type {dist!r}")
            table[name] = RandSpec(name, kind, low=vals[0], high=vals[1],
                                   mean=vals[2], sigma=vals[3], p=vals[4])
    return table


def save_table(path: str, table: dict) -> None:
    def fmt(v):
        return "-" if v == 0.0 else repr(float(v))

    with open(path, "w") as f:
        f.write("# term type l h mu sigma p\n")
        for spec in table.values():
            letter = {"uniform": "u", "gaussian": "g", "binomial": "b"}[spec.dist]
            if spec.dist == "uniform":
                cols = [repr(float(spec.low)), repr(float(spec.high)), "-", "-", "-"]
            elif spec.dist == "gaussian":
                cols = ["-", "-", repr(float(spec.mean)), repr(float(spec.sigma)), "-"]
            else:
                cols = ["-", "-", "-", "-", repr(float(spec.p))]
            f.write(" ".join([spec.name, letter, *cols]) + "\n")


@dataclass(frozen=True)
class NoiseProfile:
    rotation_sigma: float = 0.025
    joint_pos_sigma: float = 0.01
    joint_vel_sigma: float = 1.5
    ang_vel_sigma: float = 0.2
    contact_flip_p: float = 0.05

    @classmethod
    def from_table(cls, table: dict) -> "NoiseProfile":
        return cls(rotation_sigma=table["rotation"].sigma,
                   joint_pos_sigma=table["joint_pos"].sigma,
                   joint_vel_sigma=table["joint_vel"].sigma,
                   ang_vel_sigma=table["ang_vel"].sigma,
                   contact_flip_p=table["foot_contact"].p)


def noise_observation(obs: np.ndarray, profile: NoiseProfile, rng: Rng) -> np.ndarray:
    """Noise the current proprio frame of a 591-dim observation.

    History, latents, heading, and padding spans are left untouched.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (LAYOUT.dim,):
        raise ValueError(f"expected a {LAYOUT.dim}-dim observation, got {obs.shape}")
    out = obs.copy()
    for field_name, sigma in (("ang_vel", profile.ang_vel_sigma),
                              ("roll_pitch", profile.rotation_sigma),
                              ("q", profile.joint_pos_sigma),
                              ("dq", profile.joint_vel_sigma)):
        sl = LAYOUT.proprio_field_slice(field_name)
        out[sl] += sigma * rng.standard_normal(sl.stop - sl.start)
    contacts = LAYOUT.proprio_field_slice("foot_contacts")
    flips = rng.random(4) < profile.contact_flip_p
    out[contacts] = np.where(flips, 1.0 - out[contacts], out[contacts])
    return out


@dataclass
class PhysicsSample:
    com_offset: np.ndarray      # 3-vector in [-0.2, 0.2]
    mass_offset: float          # [0, 3]
    friction: float             # [0.6, 2.0]
    motor_strength: np.ndarray  # 24 scalars in [0.8, 1.2]
    vx_target: float            # [0.3, 0.8]


def sample_physics(rng: Rng, table: dict | None = None) -> PhysicsSample:
    table = table or DEFAULT_TABLE
    return PhysicsSample(
        com_offset=sample(table["com_offset"], rng, 3),
        mass_offset=float(sample(table["mass_offset"], rng)),
        friction=float(sample(table["friction"], rng)),
        motor_strength=sample(table["motor_strength"], rng, 24),
        vx_target=float(sample(table["vx_target"], rng)),
    )

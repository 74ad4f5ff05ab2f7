"""A small 2-D lander and a scripted PD teacher.

State layout (8 dims): x, y, vx, vy, theta, omega, leg1, leg2.
Actions (2 dims, clipped to [-1, 1]): main engine, side thrusters.

The physics is deliberately simple (point mass plus a rotational degree of
freedom driven by the side thrusters). It exists so the distillation
pipeline can be exercised end to end, and so teacher and surrogate can be
rolled out under identical dynamics for trajectory comparison.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .dataset import Dataset
from .dtw import Trajectory
from .io import load_config

FEATURE_NAMES = ("x", "y", "vx", "vy", "theta", "omega", "leg1", "leg2")
ACTION_NAMES = ("main", "side")
STATE_DIM = len(FEATURE_NAMES)
ACTION_DIM = len(ACTION_NAMES)

X, Y, VX, VY, THETA, OMEGA, LEG1, LEG2 = range(STATE_DIM)


@dataclass(frozen=True)
class TeacherGains:
    # frozen after bring-up: the teacher lands from the whole sampling envelope
    k1: float = 0.4
    k2: float = 1.0
    k3: float = 0.605
    k4: float = 3.3
    k5: float = 6.1
    k6: float = 2.7
    hover_bias: float = 0.5
    y_target: float = -0.3


@dataclass(frozen=True)
class EnvConfig:
    gravity: float = 1.0
    thrust_gain: float = 2.0
    side_gain: float = 0.5
    # signed lever arm; negative means the side thrusters sit above the
    # centre of mass, so a rightward push tilts the thrust axis rightward
    arm: float = -1.0
    dt: float = 0.1
    max_steps: int = 1000
    init_noise_scale: float = 1.0
    seed: int = 42
    pad_half_width: float = 2.0
    # std of Gaussian noise added to the executed action while collecting
    # data; recorded labels stay the clean teacher action
    action_noise: float = 0.3
    teacher: TeacherGains = field(default_factory=TeacherGains)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if int(self.max_steps) < 1:
            raise ValueError("max_steps must be >= 1")
        if not self.action_noise >= 0:
            raise ValueError("action_noise must be >= 0")
        if isinstance(self.teacher, dict):
            object.__setattr__(self, "teacher", TeacherGains(**self.teacher))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "EnvConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown env config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path) -> "EnvConfig":
        return cls.from_dict(load_config(path))

    def replace(self, **changes) -> "EnvConfig":
        doc = asdict(self)
        doc.update(changes)
        return EnvConfig.from_dict(doc)


def env_step(state, action, config: EnvConfig) -> np.ndarray:
    """One semi-implicit Euler step. Velocities update first, positions use the new velocities."""
    s = np.asarray(state, dtype=float)
    main, side = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    x, y, vx, vy, theta, omega, leg1, leg2 = s
    dt = config.dt
    vy = vy + (config.thrust_gain * main * math.cos(theta) - config.gravity) * dt
    vx = vx + (config.thrust_gain * main * math.sin(theta) + config.side_gain * side) * dt
    omega = omega + (-config.side_gain * side * config.arm) * dt
    x = x + vx * dt
    y = y + vy * dt
    theta = theta + omega * dt
    if y <= 0.0:
        # touchdown: come to rest on the ground, legs register only on the pad
        y, vx, vy, omega = 0.0, 0.0, 0.0, 0.0
        on_pad = 1.0 if abs(x) <= config.pad_half_width else 0.0
        leg1 = leg2 = on_pad
    return np.array([x, y, vx, vy, theta, omega, leg1, leg2])


def scripted_teacher(state, gains: TeacherGains | None = None) -> np.ndarray:
    """PD controller: altitude/vertical speed drive the main engine, lateral and attitude errors the side thrusters."""
    g = gains or TeacherGains()
    x, y, vx, vy, theta, omega = np.asarray(state, dtype=float)[:6]
    main = g.k1 * (g.y_target - y) - g.k2 * vy + g.hover_bias
    side = -g.k3 * x - g.k4 * vx - g.k5 * theta - g.k6 * omega
    return np.array([min(1.0, max(-1.0, main)), min(1.0, max(-1.0, side))])


def teacher_policy(config: EnvConfig) -> Callable:
    return lambda s: scripted_teacher(s, config.teacher)


def zero_policy(state) -> np.ndarray:
    return np.zeros(ACTION_DIM)


def landed(state) -> bool:
    return state[LEG1] >= 1.0 and state[LEG2] >= 1.0


def sample_initial_state(rng: np.random.Generator, config: EnvConfig) -> np.ndarray:
    """Random start inside the envelope the teacher is known to recover from."""
    k = config.init_noise_scale
    s = np.zeros(STATE_DIM)
    s[X] = rng.uniform(-1.0, 1.0)
    s[Y] = rng.uniform(1.5, 3.0)
    s[VX] = rng.uniform(-0.4, 0.4) * k
    s[VY] = rng.uniform(-0.4, 0.2) * k
    s[THETA] = rng.uniform(-0.15, 0.15) * k
    s[OMEGA] = rng.uniform(-0.1, 0.1) * k
    return s


def rollout(policy: Callable, config: EnvConfig, initial_state, max_steps: int | None = None,
            noise_rng: np.random.Generator | None = None) -> Trajectory:
    """Run ``policy`` from ``initial_state`` until both legs touch or the step budget is spent.

    Each recorded step is the state seen by the policy and the (clipped)
    action it returned. With ``noise_rng`` the action actually executed is
    perturbed by N(0, config.action_noise) before clipping; the recorded
    action is not.
    """
    budget = int(max_steps if max_steps is not None else config.max_steps)
    s = np.array(initial_state, dtype=float)
    states, actions = [], []
    for _ in range(budget):
        a = np.clip(np.asarray(policy(s), dtype=float), -1.0, 1.0)
        states.append(s)
        actions.append(a)
        if noise_rng is not None and config.action_noise > 0:
            a = a + noise_rng.normal(0.0, config.action_noise, size=a.shape)
        s = env_step(s, a, config)
        if landed(s):
            break
    return Trajectory(np.array(states), np.array(actions))


def initial_states(config: EnvConfig, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.array([sample_initial_state(rng, config) for _ in range(n)])


def generate_dataset(config: EnvConfig, n_samples: int, seed: int | None = None) -> Dataset:
    """Teacher rollouts from random starts, concatenated until ``n_samples`` pairs.

    Executed actions carry ``config.action_noise`` so the data covers states
    slightly off the teacher's own trajectories (labels are noise-free).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    policy = teacher_policy(config)
    states, actions, starts = [], [], []
    while len(states) < n_samples:
        traj = rollout(policy, config, sample_initial_state(rng, config), noise_rng=rng)
        starts.append(len(states))
        take = min(len(traj), n_samples - len(states))
        states.extend(traj.states[:take])
        actions.extend(traj.actions[:take])
    return Dataset(np.array(states), np.array(actions), tuple(starts))


def default_config_path():
    """Path of the shipped TOML holding the frozen default physics and gains."""
    from importlib import resources

    return resources.files(__package__) / "configs" / "lander.toml"

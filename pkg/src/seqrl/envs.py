"""Deterministic toy continuous-control environments plus the evaluation
wrappers (action repeat, observation noise).

All dynamics are deterministic; randomness enters only through the reset
distribution (seeded per episode) and the noise wrapper. (seed, action
sequence) fully determines a trajectory.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputDomainError

CANONICAL_NOISE_GRID = (0.01, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5)


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    action_dim: int
    episode_len: int
    action_repeat: int
    reward_range: tuple[float, float]


class ToyEnv:
    """Base: fixed-length episodes, actions in [-1, 1]^D (clipped with a counter)."""

    spec: EnvSpec

    def __init__(self):
        self.clip_count = 0
        self._t = 0
        self._done = True

    def reset(self, seed: int) -> np.ndarray:
        self._t = 0
        self._done = False
        return self._reset_state(np.random.default_rng(seed))

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if self._done:
            raise InputDomainError("step() called on a finished episode; reset first")
        action = np.atleast_1d(np.asarray(action, dtype=np.float64))
        if action.shape != (self.spec.action_dim,):
            raise InputDomainError(
                f"action shape {action.shape} != ({self.spec.action_dim},)"
            )
        if np.abs(action).max() > 1.0:
            self.clip_count += 1
            action = np.clip(action, -1.0, 1.0)
        obs, reward = self._step_dynamics(action)
        self._t += 1
        self._done = self._t >= self.spec.episode_len
        return obs, reward, self._done

    # subclass hooks
    def _reset_state(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _step_dynamics(self, action: np.ndarray) -> tuple[np.ndarray, float]:
        raise NotImplementedError


class DoubleIntegratorEnv(ToyEnv):
    """Point mass on a line: xdd = a, reward -|x - 1| - 0.01 a^2, start (-1, 0).

    The optimal controller is near-bang-bang: full thrust toward the goal,
    then brake and hold.
    """

    DT = 0.1
    GOAL = 1.0

    def __init__(self, episode_len: int = 200):
        super().__init__()
        self.spec = EnvSpec(
            name="double-integrator",
            obs_dim=2,
            action_dim=1,
            episode_len=episode_len,
            action_repeat=1,
            reward_range=(-202.0, 0.0),
        )
        self._x = 0.0
        self._v = 0.0

    def _reset_state(self, rng):
        self._x = -1.0
        self._v = 0.0
        return self._obs()

    def _obs(self):
        return np.array([self._x, self._v], dtype=np.float64)

    def _step_dynamics(self, action):
        a = float(action[0])
        self._v += a * self.DT
        self._x += self._v * self.DT
        reward = -abs(self._x - self.GOAL) - 0.01 * a * a
        return self._obs(), reward


class PendulumSwingupEnv(ToyEnv):
    """Torque-limited pendulum; theta = 0 is upright, theta = pi hangs down.

    thetadd = 10 sin(theta) + 2 a, dt = 0.05, thetad clipped to [-8, 8].
    Max torque is a fifth of peak gravity, so swinging up from the bottom
    requires periodic pumping.
    """

    DT = 0.05
    GRAVITY = 10.0
    TORQUE = 2.0
    MAX_SPEED = 8.0

    def __init__(self, episode_len: int = 200):
        super().__init__()
        self.spec = EnvSpec(
            name="pendulum-swingup",
            obs_dim=3,
            action_dim=1,
            episode_len=episode_len,
            action_repeat=1,
            reward_range=(-16.28, 0.0),
        )
        self._theta = 0.0
        self._thetad = 0.0

    def _reset_state(self, rng):
        self._theta = float(rng.uniform(-math.pi, math.pi))
        self._thetad = 0.0
        return self._obs()

    def _obs(self):
        return np.array(
            [math.cos(self._theta), math.sin(self._theta), self._thetad],
            dtype=np.float64,
        )

    def _step_dynamics(self, action):
        a = float(action[0])
        acc = self.GRAVITY * math.sin(self._theta) + self.TORQUE * a
        self._thetad = float(np.clip(self._thetad + acc * self.DT, -self.MAX_SPEED, self.MAX_SPEED))
        self._theta += self._thetad * self.DT
        wrapped = (self._theta + math.pi) % (2.0 * math.pi) - math.pi
        reward = -(wrapped**2 + 0.1 * self._thetad**2 + 0.001 * a * a)
        return self._obs(), reward


# Staircase corridor geometry: polyline corners from start to goal, four
# UP/RIGHT repetitions, inflated to axis-aligned rectangles of half-width W.
_CORNERS = [
    (0.05, 0.05), (0.05, 0.275), (0.275, 0.275), (0.275, 0.5), (0.5, 0.5),
    (0.5, 0.725), (0.725, 0.725), (0.725, 0.95), (0.95, 0.95),
]
_HALF_WIDTH = 0.07


def _corridor_rects() -> list[tuple[float, float, float, float]]:
    rects = []
    for (x0, y0), (x1, y1) in zip(_CORNERS[:-1], _CORNERS[1:]):
        rects.append(
            (
                max(0.0, min(x0, x1) - _HALF_WIDTH),
                min(1.0, max(x0, x1) + _HALF_WIDTH),
                max(0.0, min(y0, y1) - _HALF_WIDTH),
                min(1.0, max(y0, y1) + _HALF_WIDTH),
            )
        )
    return rects


class StaircaseNavEnv(ToyEnv):
    """2-D navigation through a staircase corridor.

    Position moves by 0.04 * action per step. A move whose target leaves the
    corridor is cancelled entirely (no wall sliding), so progress requires
    alternating UP-like and RIGHT-like segments. Reward is negative distance
    to the goal plus a 100 bonus on every step spent inside the goal radius;
    collisions do not change the reward.
    """

    SCALE = 0.04
    GOAL = np.array([0.95, 0.95])
    GOAL_RADIUS = 0.05
    START = np.array([0.05, 0.05])
    JITTER = 0.01

    def __init__(self, episode_len: int = 200):
        super().__init__()
        self.spec = EnvSpec(
            name="staircase-nav",
            obs_dim=2,
            action_dim=2,
            episode_len=episode_len,
            action_repeat=1,
            reward_range=(-1.35, 100.0),
        )
        self.rects = _corridor_rects()
        self._pos = self.START.copy()

    def in_corridor(self, p: np.ndarray) -> bool:
        for x0, x1, y0, y1 in self.rects:
            if x0 <= p[0] <= x1 and y0 <= p[1] <= y1:
                return True
        return False

    def _reset_state(self, rng):
        self._pos = self.START + rng.uniform(-self.JITTER, self.JITTER, size=2)
        return self._pos.copy()

    def _step_dynamics(self, action):
        target = self._pos + self.SCALE * action
        if self.in_corridor(target):
            self._pos = target
        dist = float(np.linalg.norm(self._pos - self.GOAL))
        reward = -dist + (100.0 if dist <= self.GOAL_RADIUS else 0.0)
        return self._pos.copy(), reward


class ActionRepeat:
    """Apply each selected action k underlying steps; rewards are summed."""

    def __init__(self, env: ToyEnv, k: int):
        if k < 1:
            raise ConfigError(f"action repeat must be >= 1, got {k}")
        self.env = env
        self.k = k
        base = env.spec
        self.spec = EnvSpec(
            name=base.name,
            obs_dim=base.obs_dim,
            action_dim=base.action_dim,
            episode_len=-(-base.episode_len // k),  # ceil: final partial repeat truncated
            action_repeat=k,
            reward_range=(base.reward_range[0] * k, base.reward_range[1] * k),
        )

    @property
    def clip_count(self):
        return self.env.clip_count

    def reset(self, seed: int) -> np.ndarray:
        return self.env.reset(seed)

    def step(self, action):
        total = 0.0
        obs = None
        done = False
        for _ in range(self.k):
            obs, reward, done = self.env.step(action)
            total += reward
            if done:
                break
        return obs, total, done


class ObservationNoise:
    """Additive Gaussian observation noise; internal dynamics stay clean."""

    def __init__(self, env, sigma: float, noise_salt: int = 0x5EED):
        if sigma < 0:
            raise ConfigError(f"noise sigma must be >= 0, got {sigma}")
        self.env = env
        self.sigma = float(sigma)
        self.noise_salt = noise_salt
        self.spec = env.spec
        self._rng = np.random.default_rng(0)

    @property
    def clip_count(self):
        return self.env.clip_count

    def _perturb(self, obs: np.ndarray) -> np.ndarray:
        if self.sigma == 0.0:
            return obs
        return obs + self._rng.normal(0.0, self.sigma, size=obs.shape)

    def reset(self, seed: int) -> np.ndarray:
        self._rng = np.random.default_rng(np.random.SeedSequence([seed, self.noise_salt]))
        return self._perturb(self.env.reset(seed))

    def step(self, action):
        obs, reward, done = self.env.step(action)
        return self._perturb(obs), reward, done


REGISTRY = {
    "double-integrator": DoubleIntegratorEnv,
    "pendulum-swingup": PendulumSwingupEnv,
    "staircase-nav": StaircaseNavEnv,
}


def make_env(name: str, action_repeat: int = 1, noise_sigma: float = 0.0):
    if name not in REGISTRY:
        raise ConfigError(f"unknown env {name!r}; known: {sorted(REGISTRY)}")
    env = REGISTRY[name]()
    if action_repeat != 1:
        env = ActionRepeat(env, action_repeat)
    if noise_sigma > 0.0:
        env = ObservationNoise(env, noise_sigma)
    return env


def write_trajectory_csv(path, states, actions, rewards):
    states = np.asarray(states)
    actions = np.asarray(actions)
    rewards = np.asarray(rewards)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t"]
            + [f"s{i}" for i in range(states.shape[1])]
            + [f"a{i}" for i in range(actions.shape[1])]
            + ["reward"]
        )
        for t in range(len(rewards)):
            writer.writerow(
                [t] + list(states[t]) + list(actions[t]) + [rewards[t]]
            )


def plot_trajectory(path, env_name: str, states, actions, rewards):
    """Static trajectory image (position trace or time series)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    states = np.asarray(states)
    actions = np.asarray(actions)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    if env_name == "staircase-nav":
        for x0, x1, y0, y1 in _corridor_rects():
            axes[0].add_patch(
                plt.Rectangle((x0, y0), x1 - x0, y1 - y0, color="0.9", zorder=0)
            )
        axes[0].plot(states[:, 0], states[:, 1], "-o", ms=2)
        axes[0].set_xlim(0, 1)
        axes[0].set_ylim(0, 1)
        axes[0].set_title("position")
    else:
        axes[0].plot(states)
        axes[0].set_title("state")
    axes[1].plot(actions)
    axes[1].set_title("actions")
    fig.suptitle(env_name)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)

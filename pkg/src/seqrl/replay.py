"""Episode-aware experience storage with backward-looking action windows.

Transitions are grouped by episode so that every sampled transition can be
returned together with the actions that preceded it inside the same episode;
windows never cross episode boundaries. Eviction drops oldest whole episodes.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from . import checkpoint
from .errors import ConfigError, InputDomainError, InsufficientDataError


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool
    episode_id: int
    step_index: int


@dataclass(frozen=True)
class ActionWindow:
    """Actions preceding a transition within its episode, oldest first."""

    actions: np.ndarray  # (length, action_dim)
    tau: int  # the window budget this batch was drawn with

    @property
    def length(self) -> int:
        return self.actions.shape[0]


class _Episode:
    __slots__ = ("episode_id", "states", "actions", "rewards", "next_states", "terminals", "closed")

    def __init__(self, episode_id: int):
        self.episode_id = episode_id
        self.states: list[np.ndarray] = []
        self.actions: list[np.ndarray] = []
        self.rewards: list[float] = []
        self.next_states: list[np.ndarray] = []
        self.terminals: list[bool] = []
        self.closed = False

    def __len__(self):
        return len(self.rewards)


class EpisodeBuffer:
    """FIFO-by-episode replay buffer."""

    def __init__(self, capacity: int = 1_000_000):
        if capacity < 1:
            raise ConfigError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._episodes: list[_Episode] = []
        self._total = 0

    def __len__(self) -> int:
        return self._total

    @property
    def n_episodes(self) -> int:
        return len(self._episodes)

    def push(self, t: Transition):
        ep = self._episodes[-1] if self._episodes else None
        if ep is None or ep.closed:
            if t.step_index != 0:
                raise InputDomainError(
                    f"new episode must start at step_index 0, got {t.step_index}"
                )
            ep = _Episode(t.episode_id)
            self._episodes.append(ep)
        else:
            if t.episode_id != ep.episode_id:
                raise InputDomainError(
                    "episode_id changed mid-episode; close it with a terminal first"
                )
            if t.step_index != len(ep):
                raise InputDomainError(
                    f"step_index must be {len(ep)}, got {t.step_index}"
                )
        ep.states.append(np.asarray(t.state, dtype=np.float64))
        ep.actions.append(np.asarray(t.action, dtype=np.float64))
        ep.rewards.append(float(t.reward))
        ep.next_states.append(np.asarray(t.next_state, dtype=np.float64))
        ep.terminals.append(bool(t.terminal))
        if t.terminal:
            ep.closed = True
        self._total += 1
        self._evict()

    def _evict(self):
        # never evict the in-progress episode
        while self._total > self.capacity and len(self._episodes) > 1:
            oldest = self._episodes.pop(0)
            self._total -= len(oldest)

    def seed_fill(self, env, n_steps: int, rng: np.random.Generator):
        """Collect n_steps transitions with a uniform random policy."""
        if self._total:
            raise InputDomainError("seed_fill requires an empty buffer")
        dim = env.spec.action_dim
        episode_id = 0
        obs = env.reset(int(rng.integers(0, 2**63 - 1)))
        step_index = 0
        for _ in range(n_steps):
            action = rng.uniform(-1.0, 1.0, size=dim)
            next_obs, reward, done = env.step(action)
            self.push(
                Transition(obs, action, reward, next_obs, done, episode_id, step_index)
            )
            if done:
                episode_id += 1
                obs = env.reset(int(rng.integers(0, 2**63 - 1)))
                step_index = 0
            else:
                obs = next_obs
                step_index += 1

    def _locate(self, flat_index: int) -> tuple[_Episode, int]:
        cum = 0
        for ep in self._episodes:
            if flat_index < cum + len(ep):
                return ep, flat_index - cum
            cum += len(ep)
        raise IndexError(flat_index)

    def sample_batch(
        self,
        batch_size: int,
        tau_min: int,
        tau_max: int,
        rng: np.random.Generator,
    ) -> list[tuple[Transition, ActionWindow]]:
        """Uniformly sample transitions plus their preceding action windows.

        One window budget tau ~ U{tau_min..tau_max} is drawn per batch. A
        transition at step k gets the min(tau, k) preceding actions; step-0
        transitions get a single zero-action pad.
        """
        if self._total < batch_size:
            raise InsufficientDataError(
                f"buffer holds {self._total} transitions, need {batch_size}"
            )
        if not 1 <= tau_min <= tau_max:
            raise ConfigError(f"need 1 <= tau_min <= tau_max, got {tau_min}, {tau_max}")
        tau = int(rng.integers(tau_min, tau_max + 1))
        # flat cumulative index across episodes
        cumlens = np.cumsum([len(ep) for ep in self._episodes])
        flat = rng.integers(0, self._total, size=batch_size)
        out = []
        for fidx in flat:
            ep_idx = bisect_right(cumlens, fidx)
            ep = self._episodes[ep_idx]
            k = int(fidx - (cumlens[ep_idx - 1] if ep_idx else 0))
            t = Transition(
                state=ep.states[k],
                action=ep.actions[k],
                reward=ep.rewards[k],
                next_state=ep.next_states[k],
                terminal=ep.terminals[k],
                episode_id=ep.episode_id,
                step_index=k,
            )
            if k == 0:
                window = np.zeros((1, ep.actions[0].shape[0]), dtype=np.float64)
            else:
                lo = max(0, k - tau)
                window = np.stack(ep.actions[lo:k])
            out.append((t, ActionWindow(actions=window, tau=tau)))
        return out

    # -- serialization -------------------------------------------------------

    def save(self, path):
        arrays = {}
        meta = {
            "capacity": self.capacity,
            "episodes": [
                {"episode_id": ep.episode_id, "length": len(ep), "closed": ep.closed}
                for ep in self._episodes
            ],
        }
        for i, ep in enumerate(self._episodes):
            if len(ep) == 0:
                continue
            arrays[f"ep{i}.states"] = np.stack(ep.states)
            arrays[f"ep{i}.actions"] = np.stack(ep.actions)
            arrays[f"ep{i}.rewards"] = np.asarray(ep.rewards)
            arrays[f"ep{i}.next_states"] = np.stack(ep.next_states)
            arrays[f"ep{i}.terminals"] = np.asarray(ep.terminals, dtype=np.float64)
        checkpoint.save_arrays(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "EpisodeBuffer":
        arrays, meta = checkpoint.load_arrays(path)
        buf = cls(capacity=int(meta["capacity"]))
        for i, info in enumerate(meta["episodes"]):
            ep = _Episode(int(info["episode_id"]))
            if info["length"]:
                ep.states = list(arrays[f"ep{i}.states"])
                ep.actions = list(arrays[f"ep{i}.actions"])
                ep.rewards = [float(r) for r in arrays[f"ep{i}.rewards"]]
                ep.next_states = list(arrays[f"ep{i}.next_states"])
                ep.terminals = [bool(x) for x in arrays[f"ep{i}.terminals"]]
            ep.closed = bool(info["closed"])
            buf._episodes.append(ep)
            buf._total += len(ep)
        return buf

"""Action priors the complexity costs score against.

Four kinds: the uniform prior implicit in plain max-entropy RL, a learnable
state-independent Gaussian, a causal transformer sequence model, and a
sampling prior distilled from the LZ compressor for open-loop control.
"""

from __future__ import annotations

import enum
import itertools
import math

import numpy as np
import torch
import torch.nn as nn

from . import compressor
from .errors import ConfigError, InputDomainError
from .neural import (
    DTYPE,
    LOGSTD_MAX,
    LOGSTD_MIN,
    CausalSequenceModel,
    atanh_clamped,
    gaussian_logprob,
    init_normal_,
    sample_squashed,
    tanh_logprob,
)

MAX_GRID_CANDIDATES = 10_000


class PriorKind(str, enum.Enum):
    UNIFORM = "uniform"
    GAUSSIAN_LEARNED = "gaussian-learned"
    TRANSFORMER = "transformer"
    LZ = "lz"


def uniform_logprob(action) -> torch.Tensor:
    """Log-density of the uniform distribution over the action cube (-1, 1)^D.

    Constant -D*log(2); kept so cost units stay comparable across priors.
    """
    action = torch.as_tensor(action, dtype=DTYPE)
    d = action.shape[-1]
    value = -d * math.log(2.0)
    return torch.full(action.shape[:-1], value, dtype=DTYPE)


class GaussianActionPrior(nn.Module):
    """Isotropic Gaussian over untransformed actions with the tanh correction.

    Learnable mean vector and a single (isotropic) log standard deviation.
    Densities are over squashed actions, the same parameterization as the
    policy, so log-ratios are unit-consistent.
    """

    def __init__(self, action_dim: int, gen: torch.Generator):
        super().__init__()
        self.action_dim = action_dim
        self.mean = nn.Parameter(torch.empty(action_dim, dtype=DTYPE))
        self.log_std = nn.Parameter(torch.zeros(1, dtype=DTYPE))
        init_normal_(self.mean, gen, std=0.1)

    def logprob(self, action: torch.Tensor) -> torch.Tensor:
        u = atanh_clamped(action)
        log_std = self.log_std.clamp(LOGSTD_MIN, LOGSTD_MAX).expand(self.action_dim)
        return tanh_logprob(u, gaussian_logprob(u, self.mean, log_std))

    def sample(self, gen: torch.Generator | None = None, deterministic: bool = False):
        log_std = self.log_std.clamp(LOGSTD_MIN, LOGSTD_MAX).expand(self.action_dim)
        action, _ = sample_squashed(self.mean, log_std, gen=gen, deterministic=deterministic)
        return action


# The transformer prior is CausalSequenceModel from the neural module; its
# logprob/sample methods already apply context truncation and the tanh
# correction. Re-exported here so agents can treat all priors uniformly.
SequencePrior = CausalSequenceModel


def action_grid(grid_size: int, action_dim: int) -> np.ndarray:
    """Uniform grid over [-1, 1]^D including the extremes and (for odd sizes) zero."""
    if grid_size < 2:
        raise ConfigError(f"grid_size must be >= 2, got {grid_size}")
    n_candidates = grid_size**action_dim
    if n_candidates > MAX_GRID_CANDIDATES:
        raise ConfigError(
            f"grid of {n_candidates} candidates exceeds the {MAX_GRID_CANDIDATES} budget; "
            "use per-dimension factorized sampling for high-dimensional actions"
        )
    axis = np.linspace(-1.0, 1.0, grid_size)
    return np.array(list(itertools.product(axis, repeat=action_dim)), dtype=np.float64)


def lz_prior_distribution(
    context: np.ndarray,
    grid_size: int = 9,
    temperature: float = 1.0,
    granularity: int = compressor.DEFAULT_GRANULARITY,
    window_size: int = compressor.DEFAULT_WINDOW,
    buffer_size: int = compressor.DEFAULT_BUFFER,
    min_match: int = compressor.DEFAULT_MIN_MATCH,
) -> tuple[np.ndarray, np.ndarray]:
    """Candidate actions and their compressor-prior probabilities.

    Each grid point is scored by the encoding delta of appending it to the
    context; probabilities are softmax(delta / temperature), so cheaper
    continuations are more likely. Deterministic in (context, grid,
    temperature).
    """
    context = np.asarray(context, dtype=np.float64)
    if context.size == 0:
        raise InputDomainError("lz prior requires a non-empty context")
    if temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    if context.ndim == 1:
        context = context[:, None]
    dim = context.shape[1]
    grid = action_grid(grid_size, dim)
    deltas = compressor.delta_batch(
        [context] * len(grid),
        grid,
        granularity=granularity,
        window_size=window_size,
        buffer_size=buffer_size,
        min_match=min_match,
    )
    scores = deltas / temperature
    scores -= scores.max()
    probs = np.exp(scores)
    probs /= probs.sum()
    return grid, probs


def lz_prior_sample(
    context: np.ndarray,
    rng: np.random.Generator,
    grid_size: int = 9,
    temperature: float = 1.0,
    **compressor_kwargs,
) -> np.ndarray:
    """Draw the next action from the compressor-derived prior."""
    grid, probs = lz_prior_distribution(
        context, grid_size=grid_size, temperature=temperature, **compressor_kwargs
    )
    idx = rng.choice(len(grid), p=probs)
    return grid[idx]

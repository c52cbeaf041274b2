"""Neural building blocks: MLPs, the squashed-Gaussian head, a small causal
transformer, Adam, and soft target updates.

Everything runs on CPU in float64. Initialization and sampling take explicit
torch.Generator objects so that runs are bit-reproducible and components
draw from independent streams.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError

DTYPE = torch.float64

LOGSTD_MIN = -20.0
LOGSTD_MAX = 2.0


def init_linear_(layer: nn.Linear, gen: torch.Generator):
    """Fan-in scaled uniform init, deterministic under the given generator."""
    bound = 1.0 / math.sqrt(layer.in_features)
    with torch.no_grad():
        layer.weight.copy_(
            (torch.rand(layer.weight.shape, generator=gen, dtype=DTYPE) * 2 - 1) * bound
        )
        if layer.bias is not None:
            layer.bias.copy_(
                (torch.rand(layer.bias.shape, generator=gen, dtype=DTYPE) * 2 - 1) * bound
            )


def init_normal_(tensor: torch.Tensor, gen: torch.Generator, std: float = 0.02):
    with torch.no_grad():
        tensor.copy_(torch.randn(tensor.shape, generator=gen, dtype=DTYPE) * std)


class Mlp(nn.Module):
    """ReLU MLP; hidden activations ReLU, final layer linear."""

    def __init__(self, sizes: list[int], gen: torch.Generator):
        super().__init__()
        if len(sizes) < 2:
            raise ConfigError("Mlp needs at least input and output sizes")
        self.layers = nn.ModuleList(
            nn.Linear(sizes[i], sizes[i + 1], dtype=DTYPE) for i in range(len(sizes) - 1)
        )
        for layer in self.layers:
            init_linear_(layer, gen)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.layers[0].in_features:
            raise ConfigError(
                f"input dim {x.shape[-1]} does not match first layer "
                f"({self.layers[0].in_features})"
            )
        for layer in self.layers[:-1]:
            x = F.relu(layer(x))
        return self.layers[-1](x)


def tanh_correction(u: torch.Tensor) -> torch.Tensor:
    """sum_i log(1 - tanh^2(u_i)) along the last axis, numerically stable."""
    return (2.0 * (math.log(2.0) - u - F.softplus(-2.0 * u))).sum(dim=-1)


def tanh_logprob(u: torch.Tensor, gaussian_logprob: torch.Tensor) -> torch.Tensor:
    """Correct a Gaussian log-likelihood for the tanh squashing transform."""
    return gaussian_logprob - tanh_correction(u)


def gaussian_logprob(u: torch.Tensor, mean: torch.Tensor, log_std: torch.Tensor) -> torch.Tensor:
    """Diagonal Gaussian log-density of u, summed over the last axis."""
    var = (2.0 * log_std).exp()
    return (-0.5 * ((u - mean) ** 2 / var + 2.0 * log_std + math.log(2.0 * math.pi))).sum(dim=-1)


def sample_squashed(
    mean: torch.Tensor,
    log_std: torch.Tensor,
    gen: torch.Generator | None = None,
    deterministic: bool = False,
):
    """Sample a tanh-squashed Gaussian action.

    Returns (action, log_likelihood). Deterministic mode returns tanh(mean)
    with no likelihood. Stochastic mode uses the reparameterization
    u = mean + std * eps so gradients flow into mean and log_std.
    """
    if deterministic:
        return torch.tanh(mean), None
    eps = torch.randn(mean.shape, generator=gen, dtype=mean.dtype)
    u = mean + log_std.exp() * eps
    logp = tanh_logprob(u, gaussian_logprob(u, mean, log_std))
    return torch.tanh(u), logp


def atanh_clamped(a: torch.Tensor) -> torch.Tensor:
    """Inverse tanh, clamped away from +-1 so stored actions stay finite."""
    eps = 1e-12
    return torch.atanh(a.clamp(-1.0 + eps, 1.0 - eps))


class GaussianPolicy(nn.Module):
    """State-conditioned tanh-squashed Gaussian policy (two 256-unit ReLU layers)."""

    def __init__(self, obs_dim: int, action_dim: int, gen: torch.Generator, hidden: int = 256):
        super().__init__()
        self.trunk = Mlp([obs_dim, hidden, hidden], gen)
        self.mean_head = nn.Linear(hidden, action_dim, dtype=DTYPE)
        self.log_std_head = nn.Linear(hidden, action_dim, dtype=DTYPE)
        init_linear_(self.mean_head, gen)
        init_linear_(self.log_std_head, gen)

    def forward(self, obs: torch.Tensor):
        h = F.relu(self.trunk(obs))
        mean = self.mean_head(h)
        log_std = self.log_std_head(h).clamp(LOGSTD_MIN, LOGSTD_MAX)
        return mean, log_std

    def sample(self, obs, gen: torch.Generator | None = None, deterministic: bool = False):
        mean, log_std = self(obs)
        return sample_squashed(mean, log_std, gen=gen, deterministic=deterministic)

    def logprob_of(self, obs: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        mean, log_std = self(obs)
        u = atanh_clamped(action)
        return tanh_logprob(u, gaussian_logprob(u, mean, log_std))


class QNetwork(nn.Module):
    """Q(s, a) regressor (two 256-unit ReLU layers)."""

    def __init__(self, obs_dim: int, action_dim: int, gen: torch.Generator, hidden: int = 256):
        super().__init__()
        self.net = Mlp([obs_dim + action_dim, hidden, hidden, 1], gen)

    def forward(self, obs: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([obs, action], dim=-1)).squeeze(-1)


def dropout(x: torch.Tensor, p: float, gen: torch.Generator | None) -> torch.Tensor:
    """Inverted dropout driven by an explicit generator; identity when gen is None."""
    if gen is None or p <= 0.0:
        return x
    keep = (torch.rand(x.shape, generator=gen, dtype=x.dtype) >= p).to(x.dtype)
    return x * keep / (1.0 - p)


class CausalSelfAttention(nn.Module):
    def __init__(self, embed_dim: int, n_heads: int, gen: torch.Generator, p_drop: float):
        super().__init__()
        if embed_dim % n_heads != 0:
            raise ConfigError(f"embed_dim {embed_dim} not divisible by n_heads {n_heads}")
        self.n_heads = n_heads
        self.head_dim = embed_dim // n_heads
        self.p_drop = p_drop
        self.qkv = nn.Linear(embed_dim, 3 * embed_dim, dtype=DTYPE)
        self.proj = nn.Linear(embed_dim, embed_dim, dtype=DTYPE)
        init_normal_(self.qkv.weight, gen)
        init_normal_(self.proj.weight, gen)
        nn.init.zeros_(self.qkv.bias)
        nn.init.zeros_(self.proj.bias)

    def forward(self, x: torch.Tensor, drop_gen: torch.Generator | None) -> torch.Tensor:
        b, t, e = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        shape = (b, t, self.n_heads, self.head_dim)
        q = q.view(shape).transpose(1, 2)
        k = k.view(shape).transpose(1, 2)
        v = v.view(shape).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        mask = torch.triu(torch.ones(t, t, dtype=torch.bool), diagonal=1)
        att = att.masked_fill(mask, float("-inf"))
        att = torch.softmax(att, dim=-1)
        att = dropout(att, self.p_drop, drop_gen)
        out = (att @ v).transpose(1, 2).reshape(b, t, e)
        return dropout(self.proj(out), self.p_drop, drop_gen)


class TransformerBlock(nn.Module):
    def __init__(self, embed_dim: int, n_heads: int, gen: torch.Generator, p_drop: float):
        super().__init__()
        self.ln1 = nn.LayerNorm(embed_dim, dtype=DTYPE)
        self.ln2 = nn.LayerNorm(embed_dim, dtype=DTYPE)
        self.attn = CausalSelfAttention(embed_dim, n_heads, gen, p_drop)
        self.fc1 = nn.Linear(embed_dim, 4 * embed_dim, dtype=DTYPE)
        self.fc2 = nn.Linear(4 * embed_dim, embed_dim, dtype=DTYPE)
        self.p_drop = p_drop
        init_normal_(self.fc1.weight, gen)
        init_normal_(self.fc2.weight, gen)
        nn.init.zeros_(self.fc1.bias)
        nn.init.zeros_(self.fc2.bias)

    def forward(self, x: torch.Tensor, drop_gen: torch.Generator | None) -> torch.Tensor:
        x = x + self.attn(self.ln1(x), drop_gen)
        h = self.fc2(F.gelu(self.fc1(self.ln2(x))))
        return x + dropout(h, self.p_drop, drop_gen)


class CausalSequenceModel(nn.Module):
    """Causal transformer over action windows, emitting a Gaussian head per position.

    Input positions are [start token, a_1, ..., a_L]; the head at position i
    parameterizes the distribution of the action following the first i window
    entries. Windows longer than max_context are truncated to the most recent
    entries.
    """

    def __init__(
        self,
        action_dim: int,
        gen: torch.Generator,
        embed_dim: int = 30,
        n_heads: int = 5,
        n_layers: int = 2,
        max_context: int = 20,
        p_drop: float = 0.1,
    ):
        super().__init__()
        self.action_dim = action_dim
        self.max_context = max_context
        self.p_drop = p_drop
        self.embed = nn.Linear(action_dim, embed_dim, dtype=DTYPE)
        self.start_token = nn.Parameter(torch.empty(embed_dim, dtype=DTYPE))
        self.pos_embed = nn.Parameter(torch.empty(max_context + 1, embed_dim, dtype=DTYPE))
        self.blocks = nn.ModuleList(
            TransformerBlock(embed_dim, n_heads, gen, p_drop) for _ in range(n_layers)
        )
        self.ln_out = nn.LayerNorm(embed_dim, dtype=DTYPE)
        self.head = nn.Linear(embed_dim, 2 * action_dim, dtype=DTYPE)
        init_normal_(self.embed.weight, gen)
        nn.init.zeros_(self.embed.bias)
        init_normal_(self.start_token, gen)
        init_normal_(self.pos_embed, gen)
        init_normal_(self.head.weight, gen)
        nn.init.zeros_(self.head.bias)

    def truncate(self, window: torch.Tensor) -> torch.Tensor:
        if window.shape[0] > self.max_context:
            window = window[-self.max_context :]
        return window

    def heads_all_positions(
        self, windows: torch.Tensor, drop_gen: torch.Generator | None = None
    ):
        """Per-position heads for a padded batch of windows (B, L, D).

        Returns (mean, log_std), each (B, L+1, D): position i conditions on
        window entries < i (position 0 is the start token alone). Causal
        masking guarantees entries at positions > i never influence output i.
        """
        b, length, _ = windows.shape
        if length > self.max_context:
            raise ConfigError(
                f"window length {length} exceeds max context {self.max_context}"
            )
        tok = self.embed(windows)
        start = self.start_token.expand(b, 1, -1)
        x = torch.cat([start, tok], dim=1) + self.pos_embed[: length + 1]
        x = dropout(x, self.p_drop, drop_gen)
        for block in self.blocks:
            x = block(x, drop_gen)
        out = self.head(self.ln_out(x))
        mean, log_std = out.chunk(2, dim=-1)
        return mean, log_std.clamp(LOGSTD_MIN, LOGSTD_MAX)

    def next_action_head(
        self,
        windows: torch.Tensor,
        lengths: torch.Tensor,
        drop_gen: torch.Generator | None = None,
    ):
        """Head predicting the action after each window; (B,) lengths select positions."""
        mean, log_std = self.heads_all_positions(windows, drop_gen)
        idx = lengths.view(-1, 1, 1).expand(-1, 1, mean.shape[-1])
        return (
            mean.gather(1, idx).squeeze(1),
            log_std.gather(1, idx).squeeze(1),
        )

    def logprob(
        self,
        windows: torch.Tensor,
        lengths: torch.Tensor,
        actions: torch.Tensor,
        drop_gen: torch.Generator | None = None,
    ) -> torch.Tensor:
        """Corrected log-likelihood of actions under the final-position heads."""
        mean, log_std = self.next_action_head(windows, lengths, drop_gen)
        u = atanh_clamped(actions)
        return tanh_logprob(u, gaussian_logprob(u, mean, log_std))

    def sample(
        self,
        window: torch.Tensor,
        gen: torch.Generator | None = None,
        deterministic: bool = False,
    ) -> torch.Tensor:
        """Draw the next action given one context window (L, D)."""
        window = self.truncate(window)
        lengths = torch.tensor([window.shape[0]])
        mean, log_std = self.next_action_head(window.unsqueeze(0), lengths)
        action, _ = sample_squashed(mean, log_std, gen=gen, deterministic=deterministic)
        return action.squeeze(0)


def pad_windows(windows: list[np.ndarray], action_dim: int, max_context: int):
    """Stack ragged context windows into (B, Lmax, D) plus a lengths tensor.

    Each window is truncated to its most recent max_context entries. Padding
    sits after the real entries and cannot influence causal outputs at or
    before the selected position.
    """
    trimmed = [w[-max_context:] if len(w) > max_context else w for w in windows]
    lengths = [len(w) for w in trimmed]
    lmax = max(lengths) if lengths else 1
    out = np.zeros((len(trimmed), lmax, action_dim), dtype=np.float64)
    for i, w in enumerate(trimmed):
        if len(w):
            out[i, : len(w)] = w
    return torch.from_numpy(out), torch.tensor(lengths, dtype=torch.long)


class Adam:
    """Adam with bias correction over named parameters.

    Rejects a step when any gradient is non-finite, naming the parameter.
    Missing gradients count as zero. zero_grads() clears buffers before each
    backward pass.
    """

    def __init__(
        self,
        named_params: dict[str, torch.Tensor] | nn.Module,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if isinstance(named_params, nn.Module):
            named_params = dict(named_params.named_parameters())
        self.params = dict(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: torch.zeros_like(p) for k, p in self.params.items()}
        self.v = {k: torch.zeros_like(p) for k, p in self.params.items()}

    def zero_grads(self):
        for p in self.params.values():
            p.grad = None

    @torch.no_grad()
    def step(self, lr: float | None = None):
        lr = self.lr if lr is None else lr
        grads = {}
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = torch.zeros_like(p)
            elif not torch.isfinite(g).all():
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
            grads[name] = g
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            g = grads[name]
            self.m[name].mul_(self.beta1).add_(g, alpha=1.0 - self.beta1)
            self.v[name].mul_(self.beta2).addcmul_(g, g, value=1.0 - self.beta2)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.addcdiv_(m_hat, v_hat.sqrt() + self.eps, value=-lr)

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}.step": np.array([self.step_count], dtype=np.float64)}
        for name in self.params:
            out[f"{prefix}.m.{name}"] = self.m[name].detach().numpy().copy()
            out[f"{prefix}.v.{name}"] = self.v[name].detach().numpy().copy()
        return out

    def load_state_arrays(self, prefix: str, arrays: dict[str, np.ndarray]):
        self.step_count = int(arrays[f"{prefix}.step"][0])
        for name in self.params:
            self.m[name] = torch.from_numpy(arrays[f"{prefix}.m.{name}"].copy())
            self.v[name] = torch.from_numpy(arrays[f"{prefix}.v.{name}"].copy())


@torch.no_grad()
def soft_update(target: nn.Module, online: nn.Module, rho: float):
    """target <- (1 - rho) * target + rho * online, elementwise."""
    t_params = dict(target.named_parameters())
    o_params = dict(online.named_parameters())
    if t_params.keys() != o_params.keys():
        raise ConfigError("target and online parameter names do not match")
    for name, tp in t_params.items():
        op = o_params[name]
        if tp.shape != op.shape:
            raise ConfigError(f"shape mismatch for {name}: {tp.shape} vs {op.shape}")
        tp.mul_(1.0 - rho).add_(op, alpha=rho)


def module_arrays(module: nn.Module, prefix: str) -> dict[str, np.ndarray]:
    """Flatten a module's parameters into named float64 arrays."""
    return {
        f"{prefix}.{name}": p.detach().numpy().copy()
        for name, p in module.named_parameters()
    }


@torch.no_grad()
def load_module_arrays(module: nn.Module, prefix: str, arrays: dict[str, np.ndarray]):
    for name, p in module.named_parameters():
        key = f"{prefix}.{name}"
        arr = arrays[key]
        if tuple(arr.shape) != tuple(p.shape):
            raise ConfigError(f"checkpoint shape mismatch for {key}")
        p.copy_(torch.from_numpy(arr.copy()))

"""Synthetic networked linear-reward environment.

Every random draw is keyed by ``(seed, stream, ...)`` so that contexts and
noise for round ``t`` can be regenerated on demand, and so that node ``i``
sees the same parameters and contexts whatever the network size is.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import ConfigError, Context, Dimensions, clamp_to_unit_ball

DEFAULT_HORIZON = 1000

# stream tags for SeedSequence keys
_THETA_COMMON, _THETA_SPECIFIC, _SPECIFIC_COV = 1, 2, 3
_CTX_COMMON, _CTX_SPECIFIC, _CTX_OUTLIER, _NOISE = 10, 11, 12, 13


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


@dataclass(frozen=True)
class InstanceConfig:
    dims: Dimensions
    noise_sigma: float = 0.1
    context_mean_common: tuple[float, ...] | None = None
    context_cov_scale_common: float = 0.1
    # None draws a per-node scale in [0.05, 0.2]
    context_cov_scale_specific: tuple[float, ...] | None = None
    reward_gap_scale: float = 1.0
    outlier_probability: float = 0.0
    outlier_magnitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be finite and >= 0, got {self.noise_sigma}")
        if self.context_cov_scale_common <= 0:
            raise ConfigError("context_cov_scale_common must be > 0")
        if self.context_mean_common is not None:
            object.__setattr__(self, "context_mean_common", tuple(map(float, self.context_mean_common)))
            if len(self.context_mean_common) != self.dims.d_common:
                raise ConfigError("context_mean_common must have length d_common")
        if self.context_cov_scale_specific is not None:
            scales = tuple(map(float, self.context_cov_scale_specific))
            object.__setattr__(self, "context_cov_scale_specific", scales)
            if len(scales) != self.dims.n_nodes or min(scales) <= 0:
                raise ConfigError("context_cov_scale_specific needs N strictly positive entries")
        if self.reward_gap_scale <= 0:
            raise ConfigError("reward_gap_scale must be > 0")
        if not 0.0 <= self.outlier_probability <= 1.0:
            raise ConfigError("outlier_probability must lie in [0, 1]")
        if self.outlier_magnitude < 0:
            raise ConfigError("outlier_magnitude must be >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")

    def with_nodes(self, n_nodes: int) -> "InstanceConfig":
        """Same instance family resized to ``n_nodes`` (uniform specific width)."""
        d_s = self.dims.d_specific[0]
        dims = Dimensions.uniform(n_nodes, self.dims.n_arms, self.dims.d_common, d_s)
        return replace(self, dims=dims, context_cov_scale_specific=None)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dims"] = {
            "n_nodes": self.dims.n_nodes,
            "n_arms": self.dims.n_arms,
            "d_common": self.dims.d_common,
            "d_specific": list(self.dims.d_specific),
        }
        for key in ("context_mean_common", "context_cov_scale_specific"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "InstanceConfig":
        data = dict(data)
        dims = data.pop("dims")
        if isinstance(dims, dict):
            d_s = dims["d_specific"]
            if isinstance(d_s, int):
                d_s = [d_s] * int(dims["n_nodes"])
            dims = Dimensions(int(dims["n_nodes"]), int(dims["n_arms"]), int(dims["d_common"]), tuple(d_s))
        unknown = set(data) - {f for f in cls.__dataclass_fields__ if f != "dims"}
        if unknown:
            raise ConfigError(f"unknown instance fields: {sorted(unknown)}")
        return cls(dims=dims, **data)


@dataclass(frozen=True)
class GroundTruth:
    theta_common: np.ndarray  # (K, d_c), shared by every node
    theta_specific: list[np.ndarray]  # per node, (K, d_{i,s})

    def theta_full(self, node: int, arm: int) -> np.ndarray:
        return np.concatenate([self.theta_common[arm], self.theta_specific[node][arm]])


def _shrink_toward_center(theta: np.ndarray, factor: float) -> np.ndarray:
    center = theta.mean(axis=0, keepdims=True)
    return center + factor * (theta - center)


def _gap_factor(reward_gap_scale: float) -> float:
    # maps (0, inf) -> (0, 1); the default scale 1 keeps half the arm spread
    return reward_gap_scale / (1.0 + reward_gap_scale)


def _random_directions(rng: np.random.Generator, shape: tuple[int, ...], radius: float) -> np.ndarray:
    raw = rng.standard_normal(shape)
    norms = np.linalg.norm(raw, axis=-1, keepdims=True)
    return radius * raw / np.where(norms > 0, norms, 1.0)


def draw_ground_truth(cfg: InstanceConfig) -> GroundTruth:
    """Random arm parameters inside the unit ball.

    The common block gets norm budget ``sqrt(d_c / d_max)`` and each specific
    block the rest, so every full parameter has norm <= 1 without coupling
    nodes. Arms are then pulled toward their mean by ``g / (1 + g)`` where
    ``g`` is the reward-gap scale; a convex combination never leaves the ball.
    """
    dims = cfg.dims
    d_max = dims.d_common + max(dims.d_specific)
    share_c = dims.d_common / d_max
    factor = _gap_factor(cfg.reward_gap_scale)

    theta_c = _random_directions(
        _rng(cfg.seed, _THETA_COMMON), (dims.n_arms, dims.d_common), np.sqrt(share_c)
    )
    theta_c = _shrink_toward_center(theta_c, factor)

    spec_rng = _rng(cfg.seed, _THETA_SPECIFIC)
    theta_s = []
    for node in range(dims.n_nodes):
        d_s = dims.d_specific[node]
        block = _random_directions(spec_rng, (dims.n_arms, d_s), np.sqrt(1.0 - share_c))
        theta_s.append(_shrink_toward_center(block, factor))
    return GroundTruth(theta_c, theta_s)


class Environment:
    def __init__(self, cfg: InstanceConfig):
        self.cfg = cfg
        self.dims = cfg.dims
        self.truth = draw_ground_truth(cfg)
        n = self.dims.n_nodes
        self.mean_common = (
            np.zeros(self.dims.d_common)
            if cfg.context_mean_common is None
            else np.asarray(cfg.context_mean_common, dtype=float)
        )
        if cfg.context_cov_scale_specific is None:
            self.cov_specific = _rng(cfg.seed, _SPECIFIC_COV).uniform(0.05, 0.2, size=n)
        else:
            self.cov_specific = np.asarray(cfg.context_cov_scale_specific, dtype=float)
        self._spec_offsets = np.cumsum([0, *self.dims.d_specific])

    @property
    def n_nodes(self) -> int:
        return self.dims.n_nodes

    @property
    def n_arms(self) -> int:
        return self.dims.n_arms

    def sample_contexts(self, t: int) -> list[Context]:
        """Contexts of all nodes at round ``t`` (a pure function of seed and t)."""
        if t < 1:
            raise ValueError(f"round index must be >= 1, got {t}")
        cfg, dims = self.cfg, self.dims
        n = dims.n_nodes
        z_c = _rng(cfg.seed, _CTX_COMMON, t).standard_normal((n, dims.d_common))
        z_s = _rng(cfg.seed, _CTX_SPECIFIC, t).standard_normal(self._spec_offsets[-1])
        is_outlier = _rng(cfg.seed, _CTX_OUTLIER, t).random(n) < cfg.outlier_probability

        sd_c = np.sqrt(cfg.context_cov_scale_common)
        out = []
        for i in range(n):
            common = self.mean_common + sd_c * z_c[i]
            specific = np.sqrt(self.cov_specific[i]) * z_s[self._spec_offsets[i] : self._spec_offsets[i + 1]]
            x = np.concatenate([common, specific])
            if is_outlier[i]:
                x = x * cfg.outlier_magnitude
            x = clamp_to_unit_ball(x)
            out.append(Context(x[: dims.d_common], x[dims.d_common :]))
        return out

    def round_noise(self, t: int) -> np.ndarray:
        """Standard-normal draws for every (node, arm) at round ``t``.

        Drawing the whole N x K table keeps the realised reward independent of
        which arms the policy picks, so all policies face the same stream.
        """
        return _rng(self.cfg.seed, _NOISE, t).standard_normal((self.dims.n_nodes, self.dims.n_arms))

    def _check(self, node: int, ctx: Context):
        if ctx.common.shape != (self.dims.d_common,) or ctx.specific.shape != (self.dims.d_specific[node],):
            raise ValueError(
                f"context shape ({ctx.common.size}, {ctx.specific.size}) does not match node {node} "
                f"dims ({self.dims.d_common}, {self.dims.d_specific[node]})"
            )

    def expected_rewards(self, node: int, ctx: Context) -> np.ndarray:
        """Expected reward of every arm for ``node`` under ``ctx``."""
        self._check(node, ctx)
        return self.truth.theta_common @ ctx.common + self.truth.theta_specific[node] @ ctx.specific

    def expected_reward(self, node: int, arm: int, ctx: Context) -> float:
        self._check(node, ctx)
        return float(
            self.truth.theta_common[arm] @ ctx.common + self.truth.theta_specific[node][arm] @ ctx.specific
        )

    def draw_reward(self, node: int, arm: int, ctx: Context, rng: np.random.Generator) -> float:
        mean = self.expected_reward(node, arm, ctx)
        if self.cfg.noise_sigma == 0:
            return mean
        return mean + self.cfg.noise_sigma * rng.standard_normal()

    def optimal_arm(self, node: int, ctx: Context) -> int:
        # np.argmax returns the first maximiser, i.e. the lowest arm index on ties
        return int(np.argmax(self.expected_rewards(node, ctx)))


def new_instance(cfg: InstanceConfig) -> Environment:
    return Environment(cfg)


_PRESETS: dict[str, dict] = {
    "default": {},
    "low_shared_ratio": {"d_common": 2, "d_specific": 6},
    "high_shared_ratio": {"d_common": 8, "d_specific": 1},
    "outlier": {"outlier_probability": 0.05, "outlier_magnitude": 10.0},
    "rich_actions": {"n_arms": 10},
    "large_gap": {"reward_gap_scale": 4.0},
}

_DEFAULT_SHAPE = {"n_nodes": 12, "n_arms": 4, "d_common": 4, "d_specific": 2}


def preset_names() -> list[str]:
    return list(_PRESETS)


def preset(name: str, seed: int = 0) -> InstanceConfig:
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(_PRESETS)}")
    params = {**_DEFAULT_SHAPE, **_PRESETS[name]}
    dims = Dimensions.uniform(params.pop("n_nodes"), params.pop("n_arms"), params.pop("d_common"), params.pop("d_specific"))
    return InstanceConfig(dims=dims, seed=seed, **params)

"""Diagonal Gaussian policy with a shared trunk and two head variants.

The trunk maps the state to a tanh feature vector; a linear mean head sits
on top. The log-std is either a second linear head (state-dependent, used by
the off-policy learner) or a free learned vector (state-independent, used by
the on-policy learner). Squashing conventions:

  "tanh": actions are scale * tanh(u) for the Gaussian draw u, with the
          matching change-of-variables term in the log-density;
  "clip": raw Gaussian actions, clipped later by the environment, with the
          plain Gaussian log-density.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import numeric, serialize
from ..errors import ConfigError, ShapeError

LOGSTD_MIN = -5.0
LOGSTD_MAX = 2.0
SQUASH_EPS = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GaussianPolicy:
    trunk: numeric.Mlp
    mean_head: numeric.Mlp
    logstd_head: Optional[numeric.Mlp]
    logstd_vec: Optional[np.ndarray]
    squash: str
    scale: np.ndarray

    @property
    def d_s(self) -> int:
        return self.trunk.in_dim

    @property
    def d_a(self) -> int:
        return self.mean_head.out_dim

    def params(self) -> list:
        out = self.trunk.params() + self.mean_head.params()
        if self.logstd_head is not None:
            out += self.logstd_head.params()
        else:
            out.append(self.logstd_vec)
        return out

    # -- forward ----------------------------------------------------------

    def heads(self, s: np.ndarray):
        """(mu, raw logstd, caches) for one state or a batch."""
        feat, cache_t = numeric.forward(self.trunk, s)
        mu, cache_m = numeric.forward(self.mean_head, feat)
        if self.logstd_head is not None:
            ls, cache_l = numeric.forward(self.logstd_head, feat)
        else:
            ls = np.broadcast_to(self.logstd_vec, mu.shape).copy()
            cache_l = None
        return mu, ls, (cache_t, cache_m, cache_l)

    def mean_std(self, s: np.ndarray):
        mu, ls, _ = self.heads(s)
        return mu, np.exp(np.clip(ls, LOGSTD_MIN, LOGSTD_MAX))

    def sample(self, s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One stochastic action; consumes exactly one normal draw."""
        mu, sigma = self.mean_std(s)
        u = mu + sigma * rng.standard_normal(mu.shape)
        if self.squash == "tanh":
            return self.scale * np.tanh(u)
        return u

    def det_action(self, s: np.ndarray) -> np.ndarray:
        mu, _ = self.mean_std(s)
        if self.squash == "tanh":
            return self.scale * np.tanh(mu)
        return np.clip(mu, -self.scale, self.scale)

    def log_prob(self, s: np.ndarray, a: np.ndarray):
        """Log-density of action a at state s (scalar for single inputs)."""
        mu, sigma = self.mean_std(s)
        a = np.asarray(a, dtype=np.float64)
        if a.shape != mu.shape:
            raise ShapeError(f"action shape {a.shape} does not match {mu.shape}")
        if self.squash == "tanh":
            ratio = np.clip(a / self.scale, -1.0 + 1e-12, 1.0 - 1e-12)
            u = np.arctanh(ratio)
            t = np.tanh(u)
            base = -np.log(sigma) - 0.5 * LOG_2PI - 0.5 * ((u - mu) / sigma) ** 2
            corr = np.log(self.scale * (1.0 - t * t) + SQUASH_EPS)
            out = np.sum(base - corr, axis=-1)
        else:
            out = np.sum(
                -np.log(sigma) - 0.5 * LOG_2PI - 0.5 * ((a - mu) / sigma) ** 2,
                axis=-1,
            )
        return float(out) if out.ndim == 0 else out

    def entropy(self, s: np.ndarray):
        """Gaussian entropy of the pre-squash distribution."""
        _, sigma = self.mean_std(s)
        return np.sum(np.log(sigma) + 0.5 * (LOG_2PI + 1.0), axis=-1)

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(
            trunk=self.trunk.copy(), mean_head=self.mean_head.copy(),
            logstd_head=self.logstd_head.copy() if self.logstd_head else None,
            logstd_vec=self.logstd_vec.copy() if self.logstd_vec is not None else None,
            squash=self.squash, scale=self.scale.copy(),
        )

    # -- persistence --------------------------------------------------------

    def to_bytes(self) -> bytes:
        meta = {
            "squash": self.squash,
            "scale": list(self.scale),
            "state_dependent_std": self.logstd_head is not None,
        }
        blobs = {
            "meta": json.dumps(meta, sort_keys=True).encode("utf-8"),
            "trunk": serialize.mlp_to_bytes(self.trunk),
            "mean": serialize.mlp_to_bytes(self.mean_head),
        }
        if self.logstd_head is not None:
            blobs["logstd"] = serialize.mlp_to_bytes(self.logstd_head)
        else:
            blobs["logstd_vec"] = self.logstd_vec.astype("<f8").tobytes()
        return serialize.blobs_to_bytes(blobs)

    @classmethod
    def from_bytes(cls, data: bytes) -> "GaussianPolicy":
        blobs = serialize.blobs_from_bytes(data)
        meta = json.loads(blobs["meta"].decode("utf-8"))
        logstd_head = logstd_vec = None
        if meta["state_dependent_std"]:
            logstd_head = serialize.mlp_from_bytes(blobs["logstd"])
        else:
            logstd_vec = np.frombuffer(blobs["logstd_vec"], dtype="<f8").copy()
        return cls(
            trunk=serialize.mlp_from_bytes(blobs["trunk"]),
            mean_head=serialize.mlp_from_bytes(blobs["mean"]),
            logstd_head=logstd_head, logstd_vec=logstd_vec,
            squash=meta["squash"], scale=np.array(meta["scale"], dtype=np.float64),
        )


def policy_init(
    d_s: int,
    d_a: int,
    scale,
    squash: str,
    state_dependent_std: bool,
    seed: int,
    hidden: int = 64,
    init_logstd: float = -0.5,
) -> GaussianPolicy:
    if squash not in ("tanh", "clip"):
        raise ConfigError(f"unknown squashing convention {squash!r}")
    scale = np.asarray(scale, dtype=np.float64) * np.ones(d_a)
    if not np.all(scale > 0):
        raise ConfigError("action scale must be positive")
    trunk = numeric.mlp_init([d_s, hidden, hidden], seed=seed, acts=["tanh", "tanh"])
    mean_head = numeric.mlp_init([hidden, d_a], seed=seed + 1, acts=["identity"])
    logstd_head = logstd_vec = None
    if state_dependent_std:
        logstd_head = numeric.mlp_init([hidden, d_a], seed=seed + 2, acts=["identity"])
    else:
        logstd_vec = np.full(d_a, init_logstd, dtype=np.float64)
    return GaussianPolicy(trunk=trunk, mean_head=mean_head, logstd_head=logstd_head,
                          logstd_vec=logstd_vec, squash=squash, scale=scale)

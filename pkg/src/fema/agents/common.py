"""Agent configuration shared by both learners."""

from __future__ import annotations

from dataclasses import dataclass, fields

from ..errors import ConfigError


@dataclass
class AgentConfig:
    algo: str = "sac"                 # sac | ppo
    discount: float = 0.99
    hidden: int = 64

    # off-policy learner
    policy_lr: float = 3e-4
    critic_lr: float = 3e-4
    temp_lr: float = 3e-4
    batch_size: int = 128
    buffer_capacity: int = 50_000
    warmup_steps: int = 500           # uniform-random action steps at the start
    update_interval: int = 2          # env steps per gradient round
    tau: float = 0.005                # target-net smoothing
    init_temp: float = 0.2
    learn_temp: bool = True

    # on-policy learner
    rollout_steps: int = 2048         # env steps per collection phase
    n_workers: int = 4
    clip_ratio: float = 0.2
    gae_lambda: float = 0.95
    ppo_epochs: int = 10
    minibatch: int = 64
    ent_coef: float = 0.0
    kl_stop: float = 0.05
    init_logstd: float = -0.5

    # failure-memory hook
    fema_on: bool = False
    importance_correction: bool = False

    def validate(self) -> "AgentConfig":
        if self.algo not in ("sac", "ppo"):
            raise ConfigError(f"unknown algo {self.algo!r}")
        if not (0.0 < self.discount <= 1.0):
            raise ConfigError("discount must be in (0, 1]")
        for name in ("policy_lr", "critic_lr", "temp_lr"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not (0.0 < self.clip_ratio < 1.0):
            raise ConfigError("clip_ratio must be in (0, 1)")
        if not (0.0 < self.tau <= 1.0):
            raise ConfigError("tau must be in (0, 1]")
        if not (0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError("gae_lambda must be in [0, 1]")
        for name in ("hidden", "batch_size", "buffer_capacity", "update_interval",
                     "rollout_steps", "n_workers", "ppo_epochs", "minibatch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.warmup_steps < 0 or self.ent_coef < 0 or self.kl_stop <= 0:
            raise ConfigError("warmup_steps/ent_coef must be >= 0, kl_stop > 0")
        if self.init_temp <= 0:
            raise ConfigError("init_temp must be positive")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown AgentConfig keys: {sorted(extra)}")
        return cls(**d).validate()

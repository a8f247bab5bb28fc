"""Risk-aware action selection.

At each decision the policy proposes several candidate actions. Remembered
failure records near the current state pull up their joint embeddings; each
candidate is scored by how far its own embedding sits from those records,
minus a weighted risk estimate. The top-scoring candidate is executed. When
nothing relevant is remembered the first plain policy draw passes through
untouched, which keeps the agent bit-identical to its baseline away from
known hazards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import embedding
from .errors import CoherenceError, UsageError
from .memory import FailureMemory, FemaConfig


@dataclass
class ScoredCandidate:
    action: np.ndarray
    phi: np.ndarray
    distance: float   # aggregated l2 gap to the retrieved embeddings
    risk: float       # risk head output for this candidate
    score: float      # distance - risk_weight * risk


@dataclass
class SelectionTrace:
    """Per-decision diagnostics, serializable by the harness log."""

    state: np.ndarray
    retrieved_ids: list
    candidates: list
    chosen: int
    fallback: bool
    cold: bool
    aggregator: str
    log_prob: float = 0.0

    def to_dict(self) -> dict:
        return {
            "retrieved": [list(t) for t in self.retrieved_ids],
            "chosen": self.chosen,
            "fallback": self.fallback,
            "cold": self.cold,
            "aggregator": self.aggregator,
            "log_prob": self.log_prob,
            "scores": [c.score for c in self.candidates],
            "distances": [c.distance for c in self.candidates],
            "risks": [c.risk for c in self.candidates],
        }


def sample_candidates(policy, s: np.ndarray, n: int, rng: np.random.Generator) -> list:
    """Draw n independent actions from the policy at state s.

    Sequential draws, so n=1 consumes exactly the same random stream as the
    plain agent taking one step.
    """
    if n < 1:
        raise UsageError("candidate count must be >= 1")
    return [policy.sample(s, rng) for _ in range(n)]


def _aggregate(gaps: np.ndarray, how: str) -> float:
    if how == "mean":
        return float(gaps.mean())
    if how == "min":
        return float(gaps.min())
    if how == "sum":
        return float(gaps.sum())
    raise UsageError(f"unknown aggregator {how!r}")


def score_candidates(
    s: np.ndarray,
    candidates: list,
    records: list,
    stack: embedding.EmbeddingStack,
    risk_weight: float,
    aggregator: str = "mean",
) -> list:
    """Score each candidate action against the retrieved failure records."""
    if not records:
        raise UsageError("score_candidates requires a non-empty retrieval")
    for rec in records:
        if rec.version != stack.version:
            raise CoherenceError(
                f"record embedding version {rec.version} does not match "
                f"stack version {stack.version}"
            )
    z_s = embedding.encode_state(stack, s)
    acts = np.stack([np.asarray(a, dtype=np.float64) for a in candidates])
    z_a = embedding.encode_action(stack, acts)
    phi = embedding.joint_embed(stack, np.tile(z_s, (len(candidates), 1)), z_a)
    rho = embedding.risk(stack, phi)
    rho = np.atleast_1d(rho)
    rec_phi = np.stack([r.phi for r in records])
    out = []
    for i in range(len(candidates)):
        gaps = np.sqrt(np.sum((rec_phi - phi[i]) ** 2, axis=1))
        d_i = _aggregate(gaps, aggregator)
        s_i = d_i - risk_weight * float(rho[i])
        out.append(ScoredCandidate(action=acts[i], phi=phi[i], distance=d_i,
                                   risk=float(rho[i]), score=s_i))
    return out


def select(
    s: np.ndarray,
    policy,
    mem: FailureMemory,
    stack: embedding.EmbeddingStack,
    cfg: FemaConfig,
    rng: np.random.Generator,
):
    """Pick an action for state s, steering around remembered failures.

    Returns (action, SelectionTrace). With an empty or cold retrieval the
    single plain policy draw is returned unscored (fallback).
    """
    z_s = embedding.encode_state(stack, s)
    result = mem.retrieve(z_s, cfg)
    if not result.records:
        action = policy.sample(s, rng)
        trace = SelectionTrace(
            state=s, retrieved_ids=[], candidates=[], chosen=0,
            fallback=True, cold=result.cold, aggregator=cfg.aggregator,
        )
        trace.log_prob = float(policy.log_prob(s, action))
        return action, trace

    candidates = sample_candidates(policy, s, cfg.n_candidates, rng)
    scored = score_candidates(s, candidates, result.records, stack,
                              cfg.risk_weight, cfg.aggregator)
    scores = np.array([c.score for c in scored])
    chosen = int(np.argmax(scores))  # argmax takes the lowest index on ties
    action = scored[chosen].action
    trace = SelectionTrace(
        state=s, retrieved_ids=result.ids(), candidates=scored, chosen=chosen,
        fallback=False, cold=False, aggregator=cfg.aggregator,
    )
    trace.log_prob = float(policy.log_prob(s, action))
    return action, trace

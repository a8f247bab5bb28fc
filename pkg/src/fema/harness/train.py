"""Training driver: one deterministic run per seed, logged as JSONL.

Log contents per run: one record per completed episode (kind "episode"),
periodic loss records (kind "loss": every loss_log_every steps for the
off-policy learner, after every update phase for the on-policy one),
optional deterministic evaluation records (kind "eval"), and one trailing
"none"-ended episode record per worker still mid-episode when the step
budget runs out, so episode lengths always sum to total_steps.

Random streams per seed: [seed, 0] agent init, [seed, 1, w] actions,
[seed, 2, w] env noise, [seed, 3] learner batches, [seed, 4] memory
training, [seed, 5] evaluation env.
"""

from __future__ import annotations

import json
import os
from collections import deque

import numpy as np

from .. import checkpoint
from ..agents.loop import eval_episode
from ..agents.ppo import PpoAgent
from ..agents.sac import SacAgent
from ..envs import make
from ..envs.runner import VecRunner
from . import jsonl
from .config import RunConfig, parse_config, render_config

ROLLING_WINDOW = 20


def build_agent(rc: RunConfig, spec, seed: int):
    fema_cfg = rc.fema if rc.fema_enabled else None
    if rc.agent_kind == "sac":
        return SacAgent(spec, rc.agent, seed, fema_cfg=fema_cfg)
    return PpoAgent(spec, rc.agent, seed, fema_cfg=fema_cfg)


def _echo_comments(rc: RunConfig, seed: int, spec) -> tuple:
    return (
        "run configuration echo (re-parses to the same settings)",
        f"seed = {seed}",
        "env spec: " + json.dumps(spec.to_dict(), sort_keys=True),
    )


def _fallback_rate(agent) -> float:
    chosen = agent.fallback_steps + agent.selected_steps
    return agent.fallback_steps / chosen if chosen else 0.0


class _RunLog:
    """Rolling episode statistics plus the JSONL emit path."""

    def __init__(self, fh):
        self.fh = fh
        self.returns = deque(maxlen=ROLLING_WINDOW)
        self.lengths = deque(maxlen=ROLLING_WINDOW)
        self.episodes = 0
        self.hazards = 0

    def _emit(self, step, worker, return_, length, end, agent) -> None:
        mem = agent.memory
        jsonl.append_record(self.fh, {
            "kind": "episode",
            "step": step,
            "episode": self.episodes,
            "worker": worker,
            "return": return_,
            "length": length,
            "end": end,
            "mean_return": float(np.mean(self.returns)) if self.returns else 0.0,
            "mean_length": float(np.mean(self.lengths)) if self.lengths else 0.0,
            "memory_records": len(mem.records) if mem is not None else 0,
            "memory_version": mem.version if mem is not None else -1,
            "fallback_rate": _fallback_rate(agent),
        })

    def episode(self, rec, agent) -> None:
        self.episodes += 1
        self.hazards += rec.end == "hazard"
        self.returns.append(rec.return_)
        self.lengths.append(rec.length)
        self._emit(rec.end_step, rec.worker, rec.return_, rec.length,
                   rec.end, agent)

    def partial(self, step, worker, return_, length, agent) -> None:
        """Unfinished episode at budget end; excluded from rolling means."""
        self.episodes += 1
        self._emit(step, worker, return_, length, "none", agent)

    def loss(self, step: int, losses: dict) -> None:
        record = {"kind": "loss", "step": step}
        record.update(losses)
        jsonl.append_record(self.fh, record)

    def eval(self, step: int, records: list) -> None:
        jsonl.append_record(self.fh, {
            "kind": "eval",
            "step": step,
            "episodes": len(records),
            "mean_return": float(np.mean([r.return_ for r in records])),
            "mean_length": float(np.mean([r.length for r in records])),
        })


def run_seed(rc: RunConfig, seed: int, run_dir) -> dict:
    """Train one seed to completion; returns the run's summary row."""
    os.makedirs(run_dir, exist_ok=True)
    n_workers = rc.agent.n_workers if rc.agent_kind == "ppo" else 1
    envs = [make(rc.env_kind, np.random.default_rng([seed, 2, w]))
            for w in range(n_workers)]
    spec = envs[0].spec

    with open(os.path.join(run_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(render_config(rc, comments=_echo_comments(rc, seed, spec)))

    agent = build_agent(rc, spec, seed)
    action_rngs = [np.random.default_rng([seed, 1, w])
                   for w in range(n_workers)]
    runner = VecRunner(envs, agent, action_rngs)
    eval_env = None
    if rc.eval_every > 0:
        eval_env = make(rc.env_kind, np.random.default_rng([seed, 5]))

    def boundaries(done: int) -> int:
        nxt = rc.total_steps
        if rc.agent_kind == "sac":
            nxt = min(nxt, (done // rc.loss_log_every + 1) * rc.loss_log_every)
        else:
            nxt = min(nxt, (done // rc.agent.rollout_steps + 1)
                      * rc.agent.rollout_steps)
        if rc.eval_every > 0:
            nxt = min(nxt, (done // rc.eval_every + 1) * rc.eval_every)
        return nxt

    metrics_path = os.path.join(run_dir, "metrics.jsonl")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        log = _RunLog(fh)
        done = 0
        while done < rc.total_steps:
            target = boundaries(done)
            for rec in runner.run(target - done):
                log.episode(rec, agent)
            done = target
            if rc.agent_kind == "ppo" and done % rc.agent.rollout_steps == 0:
                losses = agent.update_phase()
                agent.between_phases()
                log.loss(done, losses)
            elif rc.agent_kind == "sac" and done % rc.loss_log_every == 0:
                if agent.last_losses:
                    log.loss(done, agent.last_losses)
            if rc.eval_every > 0 and done % rc.eval_every == 0:
                evals = [eval_episode(agent, eval_env)
                         for _ in range(rc.eval_episodes)]
                log.eval(done, evals)
        if rc.agent_kind == "ppo" and agent.collected_steps() > 0:
            losses = agent.update_phase()
            agent.between_phases()
            log.loss(done, losses)
        for w in range(n_workers):
            if runner.ep_length[w] > 0:
                log.partial(rc.total_steps, w, runner.ep_return[w],
                            runner.ep_length[w], agent)

    checkpoint.save_checkpoint(
        os.path.join(run_dir, "checkpoint.bin"), agent, rc.env_kind,
        rc.total_steps,
        extra_rngs={f"action_{w}": action_rngs[w] for w in range(n_workers)},
    )
    if agent.memory is not None:
        agent.memory.snapshot(os.path.join(run_dir, "memory.bin"))

    return {
        "seed": seed,
        "dir": os.path.basename(os.path.normpath(run_dir)),
        "episodes": log.episodes,
        "hazard_episodes": log.hazards,
        "final_mean_return": float(np.mean(log.returns)) if log.returns else 0.0,
        "final_mean_length": float(np.mean(log.lengths)) if log.lengths else 0.0,
        "memory_records": (len(agent.memory.records)
                           if agent.memory is not None else 0),
        "fallback_rate": _fallback_rate(agent),
    }


def run_config(rc: RunConfig, seed_offset: int = 0) -> str:
    out_dir = rc.out_dir
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for seed in rc.seeds:
        shifted = seed + seed_offset
        rows.append(run_seed(rc, shifted,
                             os.path.join(out_dir, f"seed{shifted}")))
    summary = {
        "agent": rc.agent_kind,
        "env": rc.env_kind,
        "fema_enabled": rc.fema_enabled,
        "total_steps": rc.total_steps,
        "seed_offset": seed_offset,
        "runs": rows,
    }
    with open(os.path.join(out_dir, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return out_dir


def cmd_train(config_path, seed_offset: int = 0,
              environ: dict | None = None) -> str:
    """Run every seed of a config; returns the output directory."""
    rc = parse_config(config_path, environ=environ)
    return run_config(rc, seed_offset)

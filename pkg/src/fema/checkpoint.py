"""Training checkpoints: one binary container per run.

Bundles the policy, the learner's auxiliary networks, the embedding stack
when the failure memory is on, and the random-generator states, all in the
named-blob container format. The failure memory itself snapshots to its own
file next to the checkpoint; the metadata records whether one is expected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import embedding, numeric, serialize
from .agents.policy import GaussianPolicy
from .errors import CoherenceError, SerializationError

FORMAT_NAME = "fema-checkpoint"
FORMAT_VERSION = 1


@dataclass
class CheckpointData:
    algo: str
    env: str
    step: int
    fema_on: bool
    policy: GaussianPolicy
    nets: dict          # name -> Mlp (critics / value net)
    log_alpha: Optional[np.ndarray]
    stack: Optional[embedding.EmbeddingStack]
    rng_states: dict    # name -> bit-generator state dict


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def save_checkpoint(path, agent, env_name: str, step: int,
                    extra_rngs: Optional[dict] = None) -> None:
    """Write the agent's learnable state and rng bookkeeping to one file."""
    rngs = {"learner": _rng_state(agent.learn_rng)}
    if agent.memory is not None:
        rngs["memory"] = _rng_state(agent.memory.rng)
    for name, rng in (extra_rngs or {}).items():
        rngs[name] = _rng_state(rng)

    blobs = {}
    meta = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "algo": agent.cfg.algo,
        "env": env_name,
        "step": int(step),
        "d_s": int(agent.spec.d_s),
        "d_a": int(agent.spec.d_a),
        "fema_on": agent.memory is not None,
    }
    blobs["meta"] = json.dumps(meta, sort_keys=True).encode("utf-8")
    blobs["policy"] = agent.policy.to_bytes()
    if agent.cfg.algo == "sac":
        for name in ("q1", "q2", "q1t", "q2t"):
            blobs[name] = serialize.mlp_to_bytes(getattr(agent, name))
        blobs["log_alpha"] = agent.log_alpha.astype("<f8").tobytes()
    else:
        blobs["vnet"] = serialize.mlp_to_bytes(agent.vnet)
    if agent.stack is not None:
        blobs["stack"] = embedding.stack_to_bytes(agent.stack)
    blobs["rng"] = json.dumps(rngs, sort_keys=True).encode("utf-8")
    serialize.save_blobs(path, blobs)


def load_checkpoint(path) -> CheckpointData:
    blobs = serialize.load_blobs(path)
    try:
        meta = json.loads(blobs["meta"].decode("utf-8"))
    except (KeyError, ValueError) as exc:
        raise SerializationError(f"unreadable checkpoint metadata: {exc}")
    if meta.get("format") != FORMAT_NAME:
        raise SerializationError(f"not a checkpoint file: {path}")
    if meta.get("version") != FORMAT_VERSION:
        raise SerializationError(
            f"unsupported checkpoint version {meta.get('version')}")

    nets = {}
    log_alpha = None
    if meta["algo"] == "sac":
        for name in ("q1", "q2", "q1t", "q2t"):
            nets[name] = serialize.mlp_from_bytes(blobs[name])
        log_alpha = np.frombuffer(blobs["log_alpha"], dtype="<f8").copy()
    else:
        nets["vnet"] = serialize.mlp_from_bytes(blobs["vnet"])
    stack = None
    if "stack" in blobs:
        stack = embedding.stack_from_bytes(blobs["stack"])
    return CheckpointData(
        algo=meta["algo"],
        env=meta["env"],
        step=meta["step"],
        fema_on=meta["fema_on"],
        policy=GaussianPolicy.from_bytes(blobs["policy"]),
        nets=nets,
        log_alpha=log_alpha,
        stack=stack,
        rng_states=json.loads(blobs["rng"].decode("utf-8")),
    )


def check_env_match(ckpt: CheckpointData, spec) -> None:
    """Reject evaluation against an env whose widths differ from training."""
    if ckpt.policy.d_s != spec.d_s or ckpt.policy.d_a != spec.d_a:
        raise CoherenceError(
            f"checkpoint expects d_s={ckpt.policy.d_s}, d_a={ckpt.policy.d_a}"
            f" but env {spec.name!r} has d_s={spec.d_s}, d_a={spec.d_a}")


def restore_rng(state: dict) -> np.random.Generator:
    rng = np.random.default_rng(0)
    rng.bit_generator.state = state
    return rng

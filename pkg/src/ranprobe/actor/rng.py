"""Per-step random streams.

Each step draws from a counter-based Philox generator keyed by
SHA-256(run_seed || actor_id || step_index), so actors on different hosts
reproduce their streams without exchanging seeds."""

import hashlib

import numpy as np


def step_key(run_seed: int, actor_id: str, step_index: int) -> bytes:
    material = b"|".join(
        [
            int(run_seed).to_bytes(8, "big"),
            actor_id.encode("utf-8"),
            int(step_index).to_bytes(8, "big"),
        ]
    )
    return hashlib.sha256(material).digest()


def step_rng(key: bytes) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int.from_bytes(key[:16], "big")))


def step_seed(key: bytes) -> int:
    """64-bit seed handed to components that take an integer seed"""
    return int.from_bytes(key[16:24], "big")


def session_id(key: bytes) -> str:
    return "s-" + key.hex()[:16]

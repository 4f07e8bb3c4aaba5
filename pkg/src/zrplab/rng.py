"""Seeded counter-based random streams.

Every random quantity in the package comes from a Philox generator keyed by
``(master seed, replica, purpose)`` so replicas are independent and any one
of them can be regenerated on its own.
"""
import numpy as np

INITIAL = 0
DYNAMICS = 1
AUX = 2


def stream(seed: int, replica: int = 0, purpose: int = DYNAMICS) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replica), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))


def state_to_json(rng: np.random.Generator) -> dict:
    st = rng.bit_generator.state
    return _plain(st)


def state_from_json(state: dict) -> np.random.Generator:
    bg = np.random.Philox()
    st = {
        "bit_generator": state["bit_generator"],
        "state": {k: np.asarray(v, dtype=np.uint64) for k, v in state["state"].items()},
        "buffer": np.asarray(state["buffer"], dtype=np.uint64),
        "buffer_pos": int(state["buffer_pos"]),
        "has_uint32": int(state["has_uint32"]),
        "uinteger": int(state["uinteger"]),
    }
    bg.state = st
    return np.random.Generator(bg)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return [int(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    return obj

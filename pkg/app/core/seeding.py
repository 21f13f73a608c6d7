import hashlib

import numpy as np
import torch

_SEED_MASK = (1 << 63) - 1


def derive_seed(seed: int, component: str) -> int:
    """
    Derive a per-component seed from the run seed.

    Args:
        seed: Top-level run seed
        component: Stable component name, e.g. "detector.train"

    Returns:
        A 63-bit unsigned seed
    """
    digest = hashlib.sha256(f"{seed}:{component}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & _SEED_MASK


def numpy_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def torch_generator(seed: int) -> torch.Generator:
    generator = torch.Generator(device="cpu")
    generator.manual_seed(seed)
    return generator

"""
Named seed derivation.

Every stochastic component draws from its own stream derived from the
global seed and a component name, so adding a component never shifts the
streams of the existing ones.
"""

import hashlib

_SEED_MASK = (1 << 63) - 1


def derive_seed(global_seed: int, component: str) -> int:
    """Derive a 63-bit seed for ``component`` from ``global_seed``."""
    digest = hashlib.sha256(f"{int(global_seed)}:{component}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & _SEED_MASK


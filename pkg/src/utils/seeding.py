import zlib

import numpy as np


def derive_seed(seed: int, component: str) -> int:
    """Expand the top-level seed into an independent seed for one component.

    The derivation is the first 32-bit word of
    ``SeedSequence([seed, crc32(component)])``, so it is stable across
    platforms and Python versions.
    """
    sequence = np.random.SeedSequence([int(seed), zlib.crc32(component.encode('utf-8'))])
    return int(sequence.generate_state(1)[0])


def component_rng(seed: int, component: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, component))

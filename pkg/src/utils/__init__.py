from .logger import logger
from .seeding import derive_seed, component_rng

__all__ = ['logger', 'derive_seed', 'component_rng']

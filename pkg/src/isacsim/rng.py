"""Deterministic random-stream derivation.

Every stochastic quantity in the simulator draws from its own substream,
derived from a root seed plus a fixed integer path.  The scheme is

    Generator = PCG64(SeedSequence([root_seed, domain, *path]))

where ``domain`` identifies the consumer (channel NLoS, symbols, noise,
layout placement, ...) and ``path`` carries trial/receiver indices.  Since
substreams are keyed rather than drawn sequentially, the order in which
trials or receivers are processed never changes the realisations.
"""

from __future__ import annotations

import numpy as np

# Domain tags for substream derivation. Fixed forever; changing one changes
# every realisation downstream of it.
DOMAIN_LAYOUT = 1
DOMAIN_CHANNEL_SENS = 2
DOMAIN_CHANNEL_COMM = 3
DOMAIN_SYMBOLS = 4
DOMAIN_CLUTTER = 5
DOMAIN_NOISE = 6
DOMAIN_ORACLE = 7
DOMAIN_TRUTH = 8
DOMAIN_INSTANCE = 9


def substream(root_seed: int, domain: int, *path: int) -> np.random.Generator:
    """Return the Generator for ``(root_seed, domain, *path)``."""
    entropy = [int(root_seed) & 0xFFFFFFFF, int(domain)] + [int(p) for p in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))

"""Deterministic seed derivation for block-structured Monte Carlo streams.

Every stochastic routine in the package derives its generators from a master
seed plus a stream tag, so the exact-evaluation, protocol-simulation and
optimization sample paths stay disjoint even when a caller reuses one seed.
Streams are built per block: results are bit-reproducible for a given
(seed, block size, block count) no matter how blocks are dispatched, as long
as aggregation keeps block order.
"""

import numpy as np

# Stream tags. Exact evaluation and the protocol simulator must never share a
# path: their agreement is a cross-check, not shared randomness.
TAG_EXACT = 0x45584143
TAG_SIM = 0x53494D00
TAG_TRACE = 0x54524143
TAG_REFINE = 0x5245464E
TAG_FIXED_RATE = 0x46524154
TAG_HD_BOUND = 0x48440000
TAG_RESTART = 0x52535452

LINK_SD = 0
LINK_SR = 1
LINK_RD = 2

_MASK64 = 0xFFFFFFFFFFFFFFFF


def derived_rng(seed, *tags):
    """PCG64 generator keyed on (seed, *tags); identical keys give identical streams."""
    entropy = [int(seed) & _MASK64] + [int(t) & _MASK64 for t in tags]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def block_sizes(n_total, block_size):
    """Split n_total into fixed-size blocks (the last one may be short)."""
    if n_total <= 0 or block_size <= 0:
        raise ValueError("n_total and block_size must be positive")
    sizes = [block_size] * (n_total // block_size)
    rem = n_total % block_size
    if rem:
        sizes.append(rem)
    return sizes

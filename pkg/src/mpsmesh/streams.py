"""Deterministic RNG stream derivation.

All randomness in the package flows through named PCG64 streams derived from a
single 64-bit run seed.  A stream is identified by a (kind, a, b) key; the key
is folded into a :class:`numpy.random.SeedSequence` spawn key, which gives
statistically independent streams whose draws do not depend on how many other
streams exist or in which order they are created.  That property is what makes
``--jobs N`` results identical for every N.

Stream kinds
------------
========== =============================================================
BOUNDARY    1D seeding of one fracture's polygon boundary (a = fracture)
FRACTURE    interior 2D sampling of one fracture (a = fracture)
INTERSECT   shared 1D seeding of intersection (i, j); both owners replay
            the identical stream, so their copies are bit-identical
BOX_EDGE    shared 1D seeding of one domain-box edge (a = edge index)
BOX_FACE    2D sampling of one domain-box face (a = face index)
VOLUME      3D interior sampling (a = sliver-loop iteration)
RESAMPLE    per-round hole-filling pass (a = owner id, b = round)
========== =============================================================
"""

from numpy.random import Generator, PCG64, SeedSequence

DEFAULT_SEED = 0x44464E30  # the bytes "DFN0"

BOUNDARY = 1
FRACTURE = 2
INTERSECT = 3
BOX_EDGE = 4
BOX_FACE = 5
VOLUME = 6
RESAMPLE = 7


def stream(seed: int, kind: int, a: int = 0, b: int = 0) -> Generator:
    """Return the named PCG64 generator for (kind, a, b) under ``seed``."""
    ss = SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(kind, a, b))
    return Generator(PCG64(ss))

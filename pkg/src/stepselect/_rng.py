"""Deterministic random-number streams.

Every stochastic component in this package draws from a counter-based
Philox generator keyed by a hierarchical integer path, e.g.
``stream(seed, replication, role)``.  Philox is counter-based, so streams
derived from distinct paths are statistically independent and bit-stable
across platforms and worker placements; numpy's ``SeedSequence`` performs
the path-to-key mixing.
"""

from __future__ import annotations

from numpy.random import Generator, Philox, SeedSequence

# Role tags for per-replication sub-streams (documented in the manifest).
ROLE_SAMPLE = 0
ROLE_OUTLIERS = 1
ROLE_GENERATORS = 2


def stream(*path: int) -> Generator:
    """Return the Philox generator for an integer key path.

    The same path always yields the same stream; distinct paths yield
    independent streams.
    """
    if not path:
        raise ValueError("stream() requires at least one key component")
    return Generator(Philox(SeedSequence([int(p) for p in path])))

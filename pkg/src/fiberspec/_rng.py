"""Counter-based random substreams.

Every stream is keyed by ``(seed, purpose, chunk)`` where ``chunk`` is the
pulse index divided by ``CHUNK``. Chunk boundaries sit at fixed absolute
pulse indices, so the numbers a pulse receives never depend on how the
work is split between workers.
"""

from __future__ import annotations

import numpy as np

CHUNK = 1 << 16

WAVELENGTH = 1
JITTER = 2
SURVIVAL = 3
DARK = 4
DARK_TIME = 5
ROUTING = 6
PAIRS = 7


def substream(seed: int, purpose: int, chunk: int, channel: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(purpose, channel, chunk))
    return np.random.Generator(np.random.Philox(ss))


def chunks(count: int):
    """Yield ``(chunk_index, start, stop)`` covering ``range(count)``."""
    for c, start in enumerate(range(0, count, CHUNK)):
        yield c, start, min(start + CHUNK, count)

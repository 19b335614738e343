"""Named, block-indexed random substreams.

Every random draw in the package is derived from one integer seed. A
stream name (``"dither"``, ``"noise"``, ...) and an index tuple select an
independent :class:`numpy.random.Generator`, so Monte Carlo loops that
split work into fixed-size blocks give the same numbers no matter how many
workers process those blocks.
"""
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 4096


def _name_key(name):
    return zlib.crc32(name.encode("utf-8"))


def substream(seed, name, *index):
    ss = np.random.SeedSequence(int(seed), spawn_key=(_name_key(name), *map(int, index)))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng):
    """Accept a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return substream(rng, "default")


def blocks(total, block=BLOCK):
    """Yield ``(block_index, start, size)`` covering ``range(total)``."""
    for b, start in enumerate(range(0, int(total), block)):
        yield b, start, min(block, int(total) - start)


def map_blocks(fn, total, threads=1, block=BLOCK):
    """Apply ``fn(block_index, start, size)`` to every block, results in block order."""
    return map_spans(fn, list(blocks(total, block)), threads)


def map_spans(fn, spans, threads=1):
    if threads <= 1 or len(spans) <= 1:
        return [fn(*s) for s in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: fn(*s), spans))

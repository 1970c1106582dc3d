import platform
from hashlib import sha1
from zlib import crc32

import numpy as np
import scipy
import ujson
import yaml

from . import __version__


def config_hash(document: dict) -> str:
    """SHA-1 of the canonical JSON form of a config document."""
    canonical = ujson.dumps(document, sort_keys=True, escape_forward_slashes=False, ensure_ascii=False)
    return sha1(canonical.encode("utf-8")).hexdigest()


def _stream_key(stream: tuple) -> tuple[int, ...]:
    return tuple(crc32(str(part).encode("utf-8")) for part in stream)


def derive_seed(seed: int, *stream) -> int:
    """A 63-bit seed for the named stream, split from the master seed."""
    sequence = np.random.SeedSequence(seed, spawn_key=_stream_key(stream))
    return int(sequence.generate_state(1, np.uint64)[0]) >> 1


def derive_rng(seed: int, *stream) -> np.random.Generator:
    """A counter-based Philox generator for the named stream of the master seed.

    The same (seed, stream) always gives the same generator, whichever process asks.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=_stream_key(stream))))


def versions() -> dict:
    return {
        "mflab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pyyaml": yaml.__version__,
        "ujson": ujson.__version__,
    }

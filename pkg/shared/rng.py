"""
Reproducible random streams

A stream is identified by (seed, stream_id); replicate streams get their id by
hashing the experiment coordinates, so results do not depend on execution order.
"""
import hashlib
from dataclasses import dataclass

import numpy as np

from shared.errors import ConfigError

MASK_64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Counter-based (Philox) stream keyed by a seed and a stream id"""
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= MASK_64 and 0 <= self.stream_id <= MASK_64):
            raise ConfigError('seed and stream_id must be 64-bit unsigned integers')

    def generator(self):
        """Fresh generator positioned at the start of the stream"""
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(sequence))

    def child(self, *labels):
        """Derived stream for a named sub-task"""
        return RngStream(self.seed, stream_id_for(self.stream_id, *labels))


def stream_id_for(*labels):
    """64-bit stream id from hashable experiment coordinates"""
    text = '|'.join(str(label) for label in labels)
    digest = hashlib.blake2b(text.encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'little')


class StreamRegistry:
    """Hands out replicate streams and refuses duplicate ids within one run"""

    def __init__(self, seed):
        self.seed = int(seed)
        self._issued = {}

    def stream(self, experiment, method, n, replicate):
        labels = (experiment, method, n, replicate)
        stream_id = stream_id_for(*labels)
        previous = self._issued.get(stream_id)
        if previous is not None and previous != labels:
            raise ConfigError(f"stream id collision between {previous} and {labels}")
        self._issued[stream_id] = labels
        return RngStream(self.seed, stream_id)

    def __len__(self):
        return len(self._issued)


def generator_state(generator):
    """JSON-friendly snapshot of a Philox generator state"""
    state = generator.bit_generator.state
    return _to_jsonable(state)


def restore_generator(state):
    """Rebuild a Philox generator from generator_state output"""
    bit_generator = np.random.Philox()
    bit_generator.state = _from_jsonable(state)
    return np.random.Generator(bit_generator)


def _to_jsonable(value):
    if isinstance(value, dict):
        return {key: _to_jsonable(item) for key, item in value.items()}
    if isinstance(value, np.ndarray):
        return {'__array__': [int(v) for v in value.tolist()], 'dtype': str(value.dtype)}
    if isinstance(value, np.integer):
        return int(value)
    return value


def _from_jsonable(value):
    if isinstance(value, dict):
        if '__array__' in value:
            return np.array(value['__array__'], dtype=value['dtype'])
        return {key: _from_jsonable(item) for key, item in value.items()}
    return value

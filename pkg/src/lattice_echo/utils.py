import hashlib
import os

import numpy as np


PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_SHIFT12 = np.uint64(12)

SUM_BLOCK = 1024


def philox4x32(counter, key, rounds=10):
    """Philox-4x32 counter based generator, vectorized over leading axes.

    counter has shape (..., 4) and key (..., 2), both 32-bit words. Returns
    the four output words as uint32 with the shape of counter.
    """
    counter = np.asarray(counter, dtype=np.uint64)
    key = np.asarray(key, dtype=np.uint64)

    c0, c1, c2, c3 = (counter[..., i].copy() for i in range(4))
    k0, k1 = key[..., 0].copy(), key[..., 1].copy()

    for r in range(rounds):
        if r > 0:
            k0 = (k0 + PHILOX_W0) & _MASK32
            k1 = (k1 + PHILOX_W1) & _MASK32

        # 32x32 -> 64 bit products never overflow uint64
        p0 = PHILOX_M0 * c0
        p1 = PHILOX_M1 * c2

        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ k0,
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ k1,
            p0 & _MASK32,
        )

    return np.stack((c0, c1, c2, c3), axis=-1).astype(np.uint32)


def point_keys(seed, coeffs):
    """Derive one 128-bit key per lattice point from (seed, integer coeffs).

    Keys only depend on the seed and the coefficients of the point, never on
    the enumeration index, so any window sees the same noise at the same n.
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"Seed {seed} is not a 64-bit unsigned integer.")

    seed_bytes = seed.to_bytes(8, 'little')
    rows = np.ascontiguousarray(np.atleast_2d(coeffs), dtype='<i8')

    digests = b''.join(
        hashlib.blake2b(row.tobytes(), digest_size=16, key=seed_bytes,
                        person=b'lattice-echo').digest()
        for row in rows
    )

    return np.frombuffer(digests, dtype='<u4').reshape(len(rows), 4).astype(np.uint32)


def uniforms_from_keys(keys, n):
    """Expand each 128-bit key into n doubles, uniform on the open interval (0, 1)."""
    keys = np.atleast_2d(np.asarray(keys, dtype=np.uint64))
    num_blocks = (n + 1)//2

    out = np.empty((keys.shape[0], 2*num_blocks))
    for block in range(num_blocks):
        counter = np.zeros((keys.shape[0], 4), dtype=np.uint64)
        counter[:, 0] = block
        counter[:, 2] = keys[:, 2]
        counter[:, 3] = keys[:, 3]

        words = philox4x32(counter, keys[:, 0:2]).astype(np.uint64)

        for j in range(2):
            bits = ((words[:, 2*j] << _SHIFT32) | words[:, 2*j + 1]) >> _SHIFT12
            out[:, 2*block + j] = (bits.astype(np.float64) + 0.5)*2.0**-52

    return out[:, :n]


class TreeAccumulator():
    """Streaming pairwise summation.

    Partial sums are merged like a binary counter, which gives the same
    reduction tree as summing the whole list pairwise level by level, while
    holding only O(log n) partials at a time.
    """

    def __init__(self):
        self._stack = []

    def push(self, value):
        size = 1
        while self._stack and self._stack[-1][0] == size:
            _, left = self._stack.pop()
            value = left + value
            size *= 2
        self._stack.append((size, value))

    def result(self):
        if not self._stack:
            raise ValueError("Cannot sum an empty sequence.")
        value = self._stack[-1][1]
        for _, left in reversed(self._stack[:-1]):
            value = left + value
        return value


def tree_sum(parts):
    """Sum a list of arrays pairwise in a fixed binary-tree order."""
    accumulator = TreeAccumulator()
    for part in parts:
        accumulator.push(part)
    return accumulator.result()


def pairwise_sum(terms, block=SUM_BLOCK):
    """Blocked pairwise sum along axis 0.

    The blocking is fixed, so the result only depends on the values and their
    order, never on how the caller partitioned the work.
    """
    terms = np.asarray(terms)
    if terms.shape[0] == 0:
        return np.zeros(terms.shape[1:], dtype=terms.dtype)[()]

    partials = [terms[i:i+block].sum(axis=0) for i in range(0, terms.shape[0], block)]
    return tree_sum(partials)


def resolve_workers(workers=None):
    if workers is None:
        env = os.environ.get('LATTICE_ECHO_WORKERS')
        if env:
            workers = int(env)
        else:
            workers = os.cpu_count() or 1

    workers = int(workers)
    if workers < 1:
        raise ValueError(f"Number of workers must be positive, got {workers}.")

    return workers


def write_csv(frame, path):
    """Write a frame with a header row, LF line endings and round-trip floats."""
    frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')

"""Pure-numpy bit-transpose kernels (fallback when the compiled extension is absent).

Within each block of 4096 samples, output bit position k*4096 + j carries
bit k (LSB first) of sample j.  Bits are packed little-endian within bytes.
A trailing partial block is copied through unshuffled as little-endian u16.
"""

import numpy as np

BLOCK = 4096
BLOCK_BYTES = BLOCK * 2


def encode(samples: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(samples, dtype="<u2")
    full = (arr.size // BLOCK) * BLOCK
    parts = []
    if full:
        bits = np.unpackbits(
            arr[:full].view("u1").reshape(-1, BLOCK, 2), axis=2, bitorder="little"
        ).reshape(-1, BLOCK, 16)
        parts.append(
            np.packbits(bits.transpose(0, 2, 1), axis=2, bitorder="little").tobytes()
        )
    if full < arr.size:
        parts.append(arr[full:].tobytes())
    return b"".join(parts)


def decode(data: bytes) -> np.ndarray:
    n_samples = len(data) // 2
    full = (n_samples // BLOCK) * BLOCK
    out = np.empty(n_samples, dtype="<u2")
    if full:
        packed = np.frombuffer(data, dtype="u1", count=full * 2).reshape(-1, 16, BLOCK // 8)
        bits = np.unpackbits(packed, axis=2, bitorder="little").transpose(0, 2, 1)
        out[:full] = (
            np.packbits(bits, axis=2, bitorder="little").reshape(-1, 2 * BLOCK).view("<u2").ravel()
        )
    if full < n_samples:
        out[full:] = np.frombuffer(data, dtype="<u2", offset=full * 2)
    return out

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled bit-transpose kernels for 16-bit samples.

Same layout contract as the pure-numpy fallback: blocks of 4096 samples,
output bit k*4096 + j = bit k of sample j, bits packed little-endian inside
bytes, partial trailing block copied through unshuffled.
"""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport uint8_t, uint16_t

DEF BLOCK = 4096
DEF ROW_BYTES = BLOCK // 8  # one bit plane of a block


cdef void _encode_block(const uint16_t *src, uint8_t *dst) noexcept nogil:
    cdef int k, j
    cdef uint8_t acc
    for k in range(16):
        for j in range(0, BLOCK, 8):
            acc = 0
            acc |= ((src[j] >> k) & 1)
            acc |= ((src[j + 1] >> k) & 1) << 1
            acc |= ((src[j + 2] >> k) & 1) << 2
            acc |= ((src[j + 3] >> k) & 1) << 3
            acc |= ((src[j + 4] >> k) & 1) << 4
            acc |= ((src[j + 5] >> k) & 1) << 5
            acc |= ((src[j + 6] >> k) & 1) << 6
            acc |= ((src[j + 7] >> k) & 1) << 7
            dst[k * ROW_BYTES + (j >> 3)] = acc


cdef void _decode_block(const uint8_t *src, uint16_t *dst) noexcept nogil:
    cdef int k, j
    cdef uint8_t byte
    for j in range(BLOCK):
        dst[j] = 0
    for k in range(16):
        for j in range(0, BLOCK, 8):
            byte = src[k * ROW_BYTES + (j >> 3)]
            dst[j] |= <uint16_t> (byte & 1) << k
            dst[j + 1] |= <uint16_t> ((byte >> 1) & 1) << k
            dst[j + 2] |= <uint16_t> ((byte >> 2) & 1) << k
            dst[j + 3] |= <uint16_t> ((byte >> 3) & 1) << k
            dst[j + 4] |= <uint16_t> ((byte >> 4) & 1) << k
            dst[j + 5] |= <uint16_t> ((byte >> 5) & 1) << k
            dst[j + 6] |= <uint16_t> ((byte >> 6) & 1) << k
            dst[j + 7] |= <uint16_t> ((byte >> 7) & 1) << k


def encode(samples) -> bytes:
    cdef cnp.ndarray[cnp.uint16_t, ndim=1] arr = np.ascontiguousarray(
        samples, dtype=np.uint16
    ).ravel()
    cdef Py_ssize_t n = arr.shape[0]
    cdef Py_ssize_t n_blocks = n // BLOCK
    cdef Py_ssize_t full = n_blocks * BLOCK
    out = np.empty(n * 2, dtype=np.uint8)
    cdef uint8_t[::1] dst = out
    cdef const uint16_t[::1] src = arr
    cdef Py_ssize_t b
    with nogil:
        for b in range(n_blocks):
            _encode_block(&src[b * BLOCK], &dst[b * BLOCK * 2])
    if full < n:
        out[full * 2:] = np.frombuffer(arr[full:].astype("<u2").tobytes(), dtype=np.uint8)
    return out.tobytes()


def decode(data: bytes):
    cdef Py_ssize_t n = len(data) // 2
    cdef Py_ssize_t n_blocks = n // BLOCK
    cdef Py_ssize_t full = n_blocks * BLOCK
    buf = np.frombuffer(data, dtype=np.uint8)
    out = np.empty(n, dtype=np.uint16)
    cdef const uint8_t[::1] src = buf
    cdef uint16_t[::1] dst = out
    cdef Py_ssize_t b
    with nogil:
        for b in range(n_blocks):
            _decode_block(&src[b * BLOCK * 2], &dst[b * BLOCK])
    if full < n:
        out[full:] = np.frombuffer(data, dtype="<u2", offset=full * 2)
    return out

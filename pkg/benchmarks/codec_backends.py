"""Compare the compiled and pure-Python bit-shuffle kernels.

Times encode and decode of synthetic 12-bit scan content for both backends,
checks they agree byte for byte, and prints a JSON report.

Usage: python3 benchmarks/codec_backends.py [--mib 8] [--repeat 5]
"""

import argparse
import json
import sys
import time

import numpy as np

from vslide.codec import _bitshuffle_py

try:
    from vslide.codec import _bitshuffle_cy
except ImportError:
    _bitshuffle_cy = None


def scan_content(n_bytes: int) -> np.ndarray:
    rng = np.random.default_rng(0)
    return rng.integers(0, 4096, size=n_bytes // 2, dtype=np.uint16).astype("<u2")


def time_fn(fn, data, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(data)
        best = min(best, time.perf_counter() - t0)
    return out, best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--mib", type=float, default=8.0, help="payload size in MiB")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    n = int(args.mib * (1 << 20)) & ~1
    raw = scan_content(n)
    backends = {"python": _bitshuffle_py}
    if _bitshuffle_cy is not None:
        backends["cython"] = _bitshuffle_cy

    report = {"payload_mib": n / (1 << 20), "backends": {}}
    encoded = {}
    for name, mod in backends.items():
        enc, t_enc = time_fn(mod.encode, raw, args.repeat)
        dec, t_dec = time_fn(mod.decode, enc, args.repeat)
        assert np.array_equal(np.asarray(dec, dtype="<u2"), raw), \
            f"{name} backend does not roundtrip"
        encoded[name] = bytes(enc)
        report["backends"][name] = {
            "encode_s": round(t_enc, 6),
            "decode_s": round(t_dec, 6),
            "encode_mib_per_s": round(n / (1 << 20) / t_enc, 1),
            "decode_mib_per_s": round(n / (1 << 20) / t_dec, 1),
        }

    if len(encoded) == 2:
        assert encoded["python"] == encoded["cython"], "backends disagree"
        report["identical_output"] = True
        report["encode_speedup"] = round(
            report["backends"]["python"]["encode_s"]
            / report["backends"]["cython"]["encode_s"], 2)
        report["decode_speedup"] = round(
            report["backends"]["python"]["decode_s"]
            / report["backends"]["cython"]["decode_s"], 2)
    else:
        report["identical_output"] = None
        report["note"] = "compiled backend unavailable; timed pure Python only"

    json.dump(report, sys.stdout, indent=2)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())

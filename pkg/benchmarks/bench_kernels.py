"""Compare the compiled and pure-Python kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from oceanforge import ais
from oceanforge.kernels import available_backends


def workloads(rng):
    reports = [ais.PositionReport(mmsi=int(m), lon_raw=int(x), lat_raw=int(y))
               for m, x, y in zip(rng.integers(0, 10**9, 200), rng.integers(-10**8, 10**8, 200),
                                  rng.integers(-5 * 10**7, 5 * 10**7, 200))]
    payloads = [ais.encode_position_report(r).to_payload()[0].encode("ascii") for r in reports]
    bits = [ais.decode_sixbit(p.decode("ascii")).bits for p in payloads]
    scores = rng.uniform(-1, 1, (500, 64)).round(2)
    correct = (rng.integers(0, 64, (500, 1)) == np.arange(64)).astype(np.uint8)
    return {
        "sixbit_unpack x200": lambda k: [k.sixbit_unpack(p) for p in payloads],
        "sixbit_pack x200": lambda k: [k.sixbit_pack(b) for b in bits],
        "read_uint x200x6": lambda k: [k.read_uint(b, s, w) for b in bits
                                       for s, w in ((0, 6), (8, 30), (38, 4), (61, 28), (89, 27), (116, 12))],
        "pessimistic_ranks 500x64": lambda k: k.pessimistic_ranks(scores, correct),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = available_backends()
    names = sorted(backends)
    print(f"{'kernel':28s}" + "".join(f"{n + ' (ms)':>16s}" for n in names) + f"{'speedup':>10s}")
    for label, fn in workloads(np.random.default_rng(0)).items():
        best = {n: min(timeit.repeat(lambda: fn(backends[n]), number=1, repeat=args.repeat)) * 1e3 for n in names}
        speedup = best["python"] / best["cython"] if "cython" in best else float("nan")
        print(f"{label:28s}" + "".join(f"{best[n]:16.3f}" for n in names) + f"{speedup:9.1f}x")


if __name__ == "__main__":
    main()

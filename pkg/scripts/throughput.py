"""Render throughput at 640x480 with feather blending, serial and over worker processes.

    python3 scripts/throughput.py --samples 300 --workers 1 2 4
"""
import argparse
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from synthforge.assetlib import load_library
from synthforge.compositor import BackgroundSet, GenConfig, generate_sample
from synthforge.synthetic import build_backgrounds, build_library

_STATE = {}


def _init(lib_dir, bg_dir):
    _STATE.update(lib=load_library(lib_dir), bgs=BackgroundSet.from_directory(bg_dir), cfg=GenConfig(master_seed=1))


def _render(i):
    generate_sample(_STATE["cfg"], _STATE["lib"], _STATE["bgs"], i)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=300)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 4])
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        rng = np.random.default_rng(0)
        build_library(tmp / "lib", rng, per_class=4, size_range=(300, 900))
        build_backgrounds(tmp / "bg", rng)
        _init(tmp / "lib", tmp / "bg")
        for i in range(20):
            _render(i)
        t0 = time.perf_counter()
        for i in range(args.samples):
            _render(i)
        serial = args.samples / (time.perf_counter() - t0)
        print(f"in-process: {serial:.1f} composites/s")
        base = None
        for w in args.workers:
            with ProcessPoolExecutor(w, initializer=_init, initargs=(tmp / "lib", tmp / "bg")) as pool:
                list(pool.map(_render, range(4 * w)))
                t0 = time.perf_counter()
                list(pool.map(_render, range(args.samples), chunksize=max(1, args.samples // (8 * w))))
                rate = args.samples / (time.perf_counter() - t0)
            base = base or rate
            print(f"{w} worker(s): {rate:.1f} composites/s, speedup {rate / base:.2f}x")


if __name__ == "__main__":
    main()

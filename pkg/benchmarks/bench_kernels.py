"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is made at import
time from BANG_NO_NUMBA.  Numba compile time is excluded by a warm-up call.

    python benchmarks/bench_kernels.py [--n 1000] [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from bang import _kernels
from bang.seqmetrics import diversity, novelty, pwm_from_kmers, pwm_scan

n, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
seqs = ["".join(rng.choice(list("ACGU"), int(rng.integers(40, 51)))) for _ in range(n)]
ref = ["".join(rng.choice(list("ACGU"), int(rng.integers(40, 51)))) for _ in range(n)]
long_ = ["".join(rng.choice(list("ACGU"), 2000)) for _ in range(50)]
pwm = pwm_from_kmers([s[:7] for s in seqs[:10]])

cases = {
    "diversity": lambda: diversity(seqs),
    "novelty": lambda: novelty(seqs[: n // 4], ref),
    "pwm_scan": lambda: [pwm_scan(s, pwm) for s in long_],
}
out = {"backend": _kernels.BACKEND}
for name, fn in cases.items():
    fn()                                   # warm-up (numba compiles here)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps(out))
"""


def run(disable, n, repeat):
    env = dict(os.environ)
    env.pop("BANG_NO_NUMBA", None)
    if disable:
        env["BANG_NO_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", WORKER, str(n), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000, help="sequences per set")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast, slow = run(False, args.n, args.repeat), run(True, args.n, args.repeat)
    print(f"{'kernel':<12}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for k in ("diversity", "novelty", "pwm_scan"):
        print(f"{k:<12}{fast[k]:>11.3f}s{slow[k]:>11.3f}s{slow[k] / fast[k]:>9.1f}x")


if __name__ == "__main__":
    main()

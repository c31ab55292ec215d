"""Time the numba kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [--repeat 200]

Kernel timings call both implementations directly in one process. The
end-to-end diamond-norm timing runs in a subprocess per backend, because the
backend is fixed at import time by MEMCHAN_KERNELS.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from memchan import _kernels as kn
from memchan.matkernel import random_density, random_hermitian
from memchan.channel import random_channel

E2E = """
import time, numpy as np
from memchan import channel as C, forgetful as F, metrics as M
m = F.memory_difference_map(C.depolarize_mix(C.partial_flip(0.8), 0.1), 3)
M.diamond_norm(F.memory_difference_map(C.mixed_shift(0.5), 1))  # warm up compilation
t = time.perf_counter(); M.diamond_norm(m); print(time.perf_counter() - t)
"""


def cases(rng):
    ch = random_channel(16, 16, 4, rng)
    rho = random_density(16, rng)
    big = random_density(64, rng)
    h = random_hermitian(32, rng)
    ev = np.sort(np.linalg.eigvalsh(big))
    return {
        "kraus_apply d=16 r=4": ("kraus_apply", (ch.kraus, rho)),
        "kraus_adjoint_apply d=16 r=4": ("kraus_adjoint_apply", (ch.kraus, rho)),
        "ptrace_keep 8x8 keep left": ("ptrace_keep", (big, 8, 8, True)),
        "psd_project d=32": ("psd_project", (h,)),
        "entropy_bits d=64": ("entropy_bits", (ev, 1e-15)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if not kn.HAVE_NUMBA:
        sys.exit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")
    for label, (name, a) in cases(rng).items():
        fnp, fnb = getattr(kn, name + "_numpy"), getattr(kn, name + "_numba")
        fnb(*a)  # compile
        t_np = min(timeit.repeat(lambda: fnp(*a), number=args.repeat, repeat=3)) / args.repeat
        t_nb = min(timeit.repeat(lambda: fnb(*a), number=args.repeat, repeat=3)) / args.repeat
        print(f"{label:32s} {t_np * 1e6:10.1f} {t_nb * 1e6:10.1f} {t_np / t_nb:8.2f}")
    print()
    for backend in ("numpy", "numba"):
        env = dict(os.environ, MEMCHAN_KERNELS=backend)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        print(f"diamond_norm d_3(noisy partial flip) [{backend}]: {float(out.stdout.strip()):.2f} s")


if __name__ == "__main__":
    main()

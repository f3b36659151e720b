"""Compare the compiled kernel extension against the pure NumPy fallback.

    python benchmarks/bench_kernels.py [--repeats 5]

Times the three hot kernels plus one full Voigt fit through each
backend.  The compiled extension is imported directly; the fallback is
the reference module, so this runs even where the extension did not
build (the compiled column just reports n/a).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from labgate import _purekernels

try:
    from labgate import _kernels
except ImportError:
    _kernels = None


def best_of(fun, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fun()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases():
    x = np.linspace(-30.0, 30.0, 20000)
    e = np.linspace(1.7, 2.1, 2000)
    spiky = np.abs(np.sin(np.arange(20000) * 0.73)) * 100.0
    spiky[::97] += 5000.0
    a = np.cos(np.arange(20000) * 0.11)
    b = np.sin(np.arange(20000) * 0.13)
    return [
        ("wofz_re (20k pts, y=0.3)", lambda m: m.wofz_re(x, 0.3)),
        ("voigt profile (2k pts)", lambda m: m.profile_eval(
            2, 1000.0, 1.9, 0.013, 0.011, 25.0, e)),
        ("despike (20k pts, w=5)", lambda m: m.despike(spiky, 5, 5.0)),
        ("sum_sq_diff (20k pts)", lambda m: m.sum_sq_diff(a, b)),
    ]


def fit_case():
    # one end-to-end Voigt fit: the campaign's actual hot path
    from labgate.spectral import FitConfig, ProfileParams, Spectrum, eval_profile, \
        fit_profile, initial_guess

    e = np.linspace(1.7, 2.1, 401)
    truth = ProfileParams(1000.0, 1.902, 0.013, 0.011, 25.0)
    spec = Spectrum(e, eval_profile("voigt", truth, e))
    window = (1.75, 2.05)
    init = initial_guess(spec, window)

    def run():
        fit_profile(spec, window, FitConfig(), init)
    return run


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"{'kernel':34s} {'python':>12s} {'compiled':>12s} {'speedup':>9s}")
    for name, fun in kernel_cases():
        t_py = best_of(lambda: fun(_purekernels), args.repeats)
        if _kernels is None:
            print(f"{name:34s} {t_py * 1e3:10.3f}ms {'n/a':>12s} {'':>9s}")
            continue
        t_c = best_of(lambda: fun(_kernels), args.repeats)
        print(f"{name:34s} {t_py * 1e3:10.3f}ms {t_c * 1e3:10.3f}ms "
              f"{t_py / t_c:8.1f}x")

    # whole-fit comparison needs the backend switched via the environment,
    # so report only the active backend here
    from labgate import backend
    t_fit = best_of(fit_case(), args.repeats)
    print(f"{'full voigt fit (active backend)':34s} {t_fit * 1e3:10.3f}ms "
          f"   [{backend.BACKEND}]")
    print("\nrun with LABGATE_BACKEND=python to time the whole fit on the fallback")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

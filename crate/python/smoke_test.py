"""Smoke test for the polyprop Python module.

Builds the extension with cargo when needed, imports it from a temporary
directory and exercises each binding once.

    python3 python/smoke_test.py
"""

import cmath
import importlib.util
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load():
    lib = ROOT / "target" / "release" / "libpolyprop.so"
    if not lib.exists():
        subprocess.run(
            ["cargo", "build", "--release", "-p", "polyprop-py"],
            cwd=ROOT,
            check=True,
        )
    tmp = pathlib.Path(tempfile.mkdtemp())
    target = tmp / "polyprop.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("polyprop", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    pp = load()

    p = pp.ModelParams(2, 1)
    assert (p.m, p.n, p.max_kind) == (2, 1, 3), p
    assert close(p.decay_exponent(0), 0.25, 1e-15)

    lam, r = 1.3, 0.7
    got = pp.resolvent_kernel(2, 1, lam, r)
    want = (1j * cmath.exp(1j * lam * r) - math.exp(-lam * r)) / (4 * lam**3)
    assert close(got, want, 1e-10), (got, want)
    assert close(pp.resolvent_kernel(2, 1, lam, r, "-"), want.conjugate(), 1e-10)

    coeffs = pp.expansion_coefficients(2, 1)
    assert close(coeffs["b"][0], 1 / 12, 1e-12)
    assert coeffs["phase_residual"] < 1e-10

    k1 = pp.free_kernel(2, 1, 1.0, 0.5)
    k8 = pp.free_kernel(2, 1, 16.0, 1.0)
    assert close(k8, k1 * 16.0 ** -0.25, 1e-8), (k1, k8)

    report = pp.classify(2, 1, "bump_resonant")
    assert report["kind"] >= 1 and report["oracle_agreement"], report["kind"]
    assert pp.classify(2, 1, {"form": "gauss_well", "amplitude": 1.0, "width": 1.0})["kind"] == 0

    zero = pp.PerturbedKernel(2, 1, "zero", grid_points=41)
    values = zero.evaluate(1.0)
    assert close(values[1][2], pp.free_kernel(2, 1, 1.0, 2.0), 1e-14)
    assert close(zero.low(1.0, 0.0, 2.0) + zero.high(1.0, 0.0, 2.0), values[1][2], 1e-10)

    bump = pp.PerturbedKernel(2, 1, "small_bump", grid_points=81)
    kt = bump.evaluate(2.0)
    assert abs(kt[0][2] - kt[2][0]) < 1e-8

    run = pp.propagate(2, 1, "small_bump", [1.0, 2.0])
    assert len(run["samples"]) == 18

    lemma = pp.lemma_check(1, 0.0)
    assert any(f["region"] == "Inside" for f in lemma["fits"])

    try:
        pp.ModelParams(2, 2)
    except ValueError:
        pass
    else:
        raise AssertionError("even dimension accepted")

    print("polyprop smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())

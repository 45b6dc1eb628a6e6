"""Smoke test for the pycocycle extension.

Builds the cdylib with cargo, copies it next to a temporary import path and
exercises the main entry points. Run from anywhere: python3 python/smoke_test.py
"""

import json
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "cocycle-lab-python"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libpycocycle.so"
    tmp = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "pycocycle.so")
    sys.path.insert(0, str(tmp))
    import pycocycle

    return pycocycle


def main():
    pc = load()
    base = pc.Base.rotation()
    p = pc.Point.rotation(0.25)

    diag = pc.Cocycle.builtin("diagonal", [2.0, 0.5])
    s = pc.lyapunov_exponents(diag, base, p, steps=5000)
    assert abs(s.exponents[0] - math.log(2)) < 1e-9, s
    assert s.classify() == "hyperbolic"

    shear = pc.Cocycle.builtin("shear")
    assert pc.lyapunov_exponents(shear, base, p).classify() == "zero-exponent"

    m = diag.evolve(base, p, 3)
    assert m == [[8.0, 0.0], [0.0, 0.125]], m

    half = pc.Cocycle.builtin("diagonal", [0.5])
    cert = pc.build_certificate(half, base, pc.lyapunov_exponents(half, base, p, steps=1000), [p], safety=0.0)
    assert abs(cert.green_constant - 3.0) < 1e-9
    f = cert.green_solve(p, -80, [[1.0]] * 161, n_tail=60)
    assert all(abs(v[0] - 2.0) < 1e-12 for v in f)

    lo, hi = pc.birkhoff_cosine_extrema(base, p, 10_000)
    assert lo <= 0.0 <= hi

    table = pc.Cocycle.from_table([[[2.0, 1.0], [1.0, 1.0]], [[1.0, 1.0], [1.0, 2.0]]])
    bern = pc.Base.bernoulli([0.5, 0.5])
    top = pc.lyapunov_exponents(table, bern, pc.Point.bernoulli(3), steps=20_000).exponents[0]
    assert abs(top - 0.9155) < 0.02, top

    summary, csvs = pc.run_config(
        """
experiment = "spectrum"
seed = 1
[base]
kind = "rotation"
[cocycle]
builtin = "diagonal"
params = [2.0, 0.5]
[numerics]
steps = 2000
"""
    )
    assert json.loads(summary)["experiment"] == "spectrum"
    assert dict(csvs)["spectrum"].startswith("exponent,multiplicity,stderr,n")

    try:
        pc.Base.bernoulli([0.3, 0.3])
    except ValueError:
        pass
    else:
        raise AssertionError("probabilities that do not sum to one must be rejected")

    print("pycocycle smoke test passed")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Smoke test for the nmrb_py extension module.

Builds the extension if needed (cargo build -p nmrb-py), imports it straight
from the cargo target directory, and spot-checks the bindings against known
values of the two-spin model, the Markovian limit, and the closed-form
dephasing rate.

Usage: python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    so = None
    for profile in ("debug", "release"):
        cand = ROOT / "target" / profile / "libnmrb_py.so"
        if cand.exists():
            so = cand
            break
    if so is None:
        subprocess.run(["cargo", "build", "-p", "nmrb-py"], cwd=ROOT, check=True)
        so = ROOT / "target" / "debug" / "libnmrb_py.so"
    tmp = Path(tempfile.mkdtemp(prefix="nmrb_py_"))
    shutil.copy(so, tmp / "nmrb_py.so")
    sys.path.insert(0, str(tmp))
    import nmrb_py

    return nmrb_py


def check(name, ok, detail=""):
    print(f"{'ok' if ok else 'FAIL'}  {name}  {detail}")
    if not ok:
        sys.exit(1)


def main():
    nmrb = load_module()

    # exact ASF of the two-spin model vs the Clifford enumeration oracle
    proc = nmrb.NoiseProcess.two_spin(1.7, 1.47, -1.05, 0.029475)
    f1 = nmrb.asf_analytical(proc, 1)
    check("two-spin f(1)", abs(f1 - 0.991666602296) < 1e-10, f"{f1:.12f}")
    check(
        "engine vs oracle at m=2",
        abs(nmrb.asf_analytical(proc, 2) - nmrb.asf_oracle(proc, 2)) < 1e-12,
    )

    # fixing identities only ever lowers the exact curve of this model
    f5 = nmrb.asf_analytical(proc, 5)
    f5_fixed = nmrb.asf_with_identities(proc, 5, [2, 3])
    check("identity fixing lowers ASF", f5_fixed < f5, f"{f5_fixed:.6f} < {f5:.6f}")

    # Markovian limit: a system-only unitary decays as A·p^m + B
    z = [[1, 0], [0, -1]]
    u = [
        [complex(math.cos(0.25), -math.sin(0.25) * z[i][j]) if i == j else 0j for j in range(2)]
        for i in range(2)
    ]
    ch = nmrb.KrausChannel.from_unitary(u)
    p = ch.noise_strength()
    mproc = nmrb.NoiseProcess.from_channel(ch)
    curve = nmrb.asf_curve(mproc, list(range(1, 21)))
    fit = nmrb.fit_exponential([m for m, _ in curve], [v for _, v in curve])
    check("Markovian fit recovers p", abs(fit["p"] - p) < 1e-8, f"{fit['p']:.8f} vs {p:.8f}")

    # RB non-Markovianity of the two-spin model vs its Markovianization
    ms = list(range(1, 101))
    curve = [v for _, v in nmrb.asf_curve(proc, ms)]
    ref = [v for _, v in nmrb.asf_curve(proc.markovianized(100), ms)]
    n1 = nmrb.rb_nonmarkovianity(ms, curve, ref, 1.0)
    ninf = nmrb.rb_nonmarkovianity(ms, curve, ref, float("inf"))
    check("N_1", abs(n1 - 2.1006117) < 1e-4, f"{n1:.5f}")
    check("N_inf", abs(ninf - 0.0379494) < 1e-5, f"{ninf:.5f}")

    # Monte-Carlo estimate agrees with the exact value within 4 stderr
    mc = nmrb.run_rb(proc, [10], 400, seed=7)
    (m, mean, stderr) = mc[0]
    exact = nmrb.asf_analytical(proc, 10)
    check("Monte-Carlo at m=10", abs(mean - exact) < 4 * stderr, f"{mean:.5f} vs {exact:.5f}")

    # closed-form dephasing rate
    rate = nmrb.dephasing_markovian_rate(0.015)
    check("dephasing rate", abs(rate - 0.99970) < 5e-5, f"{rate:.6f}")
    check(
        "dephasing closed form",
        abs(rate - nmrb.dephasing_rate_closed_form(0.015)) < 1e-10,
    )

    # shallow-pocket curve decays and stays in range
    v1, ok1 = nmrb.shallow_pocket_asf(0.05, 0.02, 1)
    v20, ok20 = nmrb.shallow_pocket_asf(0.05, 0.02, 20)
    check("shallow pocket", ok1 and ok20 and 0 < v20 < v1 <= 1, f"{v1:.5f} -> {v20:.5f}")

    print("all smoke checks passed")


if __name__ == "__main__":
    main()

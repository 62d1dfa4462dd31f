"""Smoke test for the kam_py extension.

Build with `cargo build -p kam-py --features extension-module --release`,
copy target/release/libkam_py.so to kam_py.so on PYTHONPATH, then run.
"""

import kam_py


def main():
    assert kam_py.bruno_sum("e^(1.5^n)") == 4.0

    u0 = kam_py.CoeffSeries([1.0, 2.0, 0.5, 0.25])
    exp_shift, direct = kam_py.shift_exp_demo(u0, 0.1, 0.25)
    gap = max(abs(a - b) for a, b in zip(exp_shift.coeffs(), direct.coeffs()))
    assert gap < 1e-12, gap

    sched = kam_py.Schedule("e^(1.5^n)", 0.5)
    assert sched.invariants_hold

    table = kam_py.DivisorTable("golden", 64)
    assert table.omega(2) > 0.0

    report = kam_py.siegel_run("golden", 1e-3, 64, 8)
    assert report.steps == 8
    assert report.bounds_ok and report.residual_monotone
    assert report.deviation < 1e-12, report.deviation
    assert report.transcript_csv().startswith("n,")

    try:
        kam_py.siegel_run("0.5", 1e-3, 16, 2)
    except kam_py.ResonanceError:
        pass
    else:
        raise AssertionError("rational rotation must raise ResonanceError")

    try:
        kam_py.bruno_sum("non-tamed")
        kam_py.Schedule("non-tamed", 0.5)
    except kam_py.NotTamedError:
        pass
    else:
        raise AssertionError("non-tamed sequence must raise NotTamedError")

    print("smoke test ok: deviation %.3e, ln s0 %.1f" % (report.deviation, report.ln_s0))


if __name__ == "__main__":
    main()

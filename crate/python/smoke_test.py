#!/usr/bin/env python3
"""Smoke test for the bdris_wpt_py extension module.

Builds the cdylib if needed, loads it directly from the cargo target
directory, and exercises the main types and operations end to end.

Run from the repository root:

    python3 python/smoke_test.py
"""

import importlib.util
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load_module():
    candidates = [
        ROOT / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libbdris_wpt_py.so", "bdris_wpt_py.so", "libbdris_wpt_py.dylib")
    ]
    lib = next((p for p in candidates if p.exists()), None)
    if lib is None:
        subprocess.run(
            ["cargo", "build", "-p", "bdris-wpt-py"], cwd=ROOT, check=True
        )
        lib = next(p for p in candidates if p.exists())

    # Python insists on the module name matching the file stem.
    tmp = pathlib.Path(tempfile.mkdtemp(prefix="bdris_wpt_py_"))
    target = tmp / "bdris_wpt_py.so"
    shutil.copyfile(lib, target)
    spec = importlib.util.spec_from_file_location("bdris_wpt_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    m = load_module()

    # Unit conversions round-trip.
    assert math.isclose(m.dbm_to_watts(30.0), 1.0, rel_tol=1e-12)
    assert math.isclose(m.watts_to_dbm(m.dbm_to_watts(50.0)), 50.0, rel_tol=1e-9)

    # Config construction, accessors and validation.
    cfg = m.Config.preset("desk")
    cfg.elements = 3
    cfg.subcarriers = 2
    cfg.realizations = 2
    cfg.seed = 7
    cfg.algorithm = "it"
    cfg.validate()
    assert cfg.elements == 3 and cfg.subcarriers == 2
    assert cfg.algorithm == "it"
    assert m.Config.from_toml(cfg.to_toml()).seed == 7
    try:
        m.Config.preset("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("invalid preset must raise ValueError")

    # Rectenna model: the fourth-order term makes the current superlinear in
    # the input power.
    base = m.dc_current([1 + 0j, 1j], [0.5 + 0j, 0.5j])
    double = m.dc_current([2 + 0j, 2j], [0.5 + 0j, 0.5j])
    assert base > 0.0 and double > 4.0 * base

    # End-to-end optimization: ascent trace, feasible surface, determinism.
    report = m.optimize(cfg, realization=0)
    assert report.idc > 0.0
    assert all(b >= a - 1e-9 * abs(a) for a, b in zip(report.trace, report.trace[1:]))
    assert report.unitarity_residual <= 1e-8
    assert report.symmetry_residual <= 1e-9
    assert len(report.scattering) == cfg.elements
    assert len(report.waveform) == cfg.subcarriers
    again = m.optimize(cfg, realization=0)
    assert again.idc == report.idc

    # Monte-Carlo batch aggregates match the per-realization values.
    mean, std, per = m.run_batch(cfg)
    assert len(per) == cfg.realizations
    assert math.isclose(mean, sum(per) / len(per), rel_tol=1e-12)
    assert std >= 0.0

    # CSV runners: named artifacts with the metadata header, reproducible.
    arts = m.run_convergence(cfg, ["it"])
    assert arts[0][0] == "convergence.csv"
    assert arts[0][1].startswith("# config_hash=")
    assert arts == m.run_convergence(cfg, ["it"])
    sweep = dict(m.sweep_m(cfg, [2, 3], ["it"]))
    assert set(sweep) == {"sweep_m.csv", "sweep_m_raw.csv"}

    print("smoke test: all checks passed")


if __name__ == "__main__":
    sys.exit(main())

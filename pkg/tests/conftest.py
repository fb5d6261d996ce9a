import numpy as np
import pytest

from fkbismut import fields, geometry, paths


def sphere_point(theta, phi=0.0, c=1.0):
    R = 1 / np.sqrt(c)
    return R * np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def make_cfg(model=None, fs=None, x0=None, **kw):
    model = model or geometry.Euclidean(1)
    fs = fs or fields.FieldSpec()
    if x0 is None:
        x0 = np.zeros(model.ambient_dim)
        if model.kind in ("sphere", "hyperbolic"):
            x0 = model.base_point()
    kw.setdefault("T", 1.0)
    kw.setdefault("dt", 1e-2)
    kw.setdefault("n_paths", 2000)
    kw.setdefault("seed", 11)
    return paths.SimConfig(model=model, fields=fs, x0=x0, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria: each check is recorded here and summarised once per
# criterion at the end of the session
ACCEPTANCE = {}


def record_criterion(num, title, ok, detail):
    entry = ACCEPTANCE.setdefault(num, {"title": title, "checks": []})
    entry["checks"].append((bool(ok), detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        entry = ACCEPTANCE[num]
        ok = all(c[0] for c in entry["checks"])
        tr.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {entry['title']}")
        for c_ok, detail in entry["checks"]:
            tr.write_line(f"      [{'ok' if c_ok else 'FAIL'}] {detail}")

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance results, printed once at the end of the session
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def sphere(rng, *shape):
    g = rng.standard_normal(shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    groups: dict[int, list[str]] = {}
    for key in ACCEPTANCE:
        groups.setdefault(int(key.split(".")[0]), []).append(key)
    for top in sorted(groups):
        keys = sorted(groups[top], key=lambda s: [int(p) for p in s.split(".")])
        ok = all(ACCEPTANCE[k][0] for k in keys)
        if keys == [str(top)]:
            terminalreporter.write_line(f"criterion {top}: {'PASS' if ok else 'FAIL'}  {ACCEPTANCE[keys[0]][1]}")
            continue
        terminalreporter.write_line(f"criterion {top}: {'PASS' if ok else 'FAIL'}")
        for k in keys:
            sub_ok, detail = ACCEPTANCE[k]
            terminalreporter.write_line(f"    {k}: {'PASS' if sub_ok else 'FAIL'}  {detail}")

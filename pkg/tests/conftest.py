"""Shared fixtures. Expensive end-to-end solves are cached per session."""
import numpy as np
import pytest

from psyche_mdo import scenario as sc


def central_diff(f, x, h):
    """Central-difference Jacobian of ``f`` at ``x`` with per-component steps ``h``."""
    x = np.asarray(x, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h[i]))
    return np.stack(cols, axis=-1)


def fd_step(x):
    """Cube-root-of-epsilon step scaled by the magnitude of each entry."""
    return np.cbrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(x))


@pytest.fixture(scope="session")
def desk_cfg():
    return sc.load_config(preset="desk")


class _RunCache:
    def __init__(self):
        self._runs = {}

    def get(self, mode="baseline", n_segments=16, **overrides):
        key = (mode, n_segments, tuple(sorted(overrides.items())))
        if key not in self._runs:
            cfg = sc.load_config(preset="desk", overrides={"mode": mode, "grid.n_segments": n_segments,
                                                           **overrides})
            self._runs[key] = sc.run_scenario(cfg)
        return self._runs[key]


@pytest.fixture(scope="session")
def runs():
    """Lazily solved desk-scale scenarios shared by every test module."""
    return _RunCache()


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_report():
    """Record ``criterion N: PASS|FAIL ...`` lines printed at the end of the session."""
    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[number])
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])

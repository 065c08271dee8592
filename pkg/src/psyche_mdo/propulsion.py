"""SPT-140 throttle table and the smooth power-to-thrust map."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

G0 = 9.80665

CSV_HEADER = ("mode", "power_w", "thrust_mn", "mdot_mg_s", "isp_s", "efficiency")

# mode, power [W], thrust [mN], mass flow [mg/s], Isp [s], efficiency
SPT140_MODES = (
    (1, 4989, 263, 13.9, 1929, 0.50),
    (2, 4620, 270, 16.5, 1670, 0.48),
    (3, 4589, 287, 17.8, 1647, 0.50),
    (4, 4561, 264, 16.4, 1645, 0.47),
    (5, 4502, 260, 16.2, 1641, 0.46),
    (6, 4375, 246, 14.0, 1790, 0.49),
    (7, 3937, 251, 17.5, 1461, 0.46),
    (8, 3894, 251, 17.5, 1464, 0.46),
    (9, 3850, 251, 17.5, 1464, 0.47),
    (10, 3758, 217, 13.9, 1597, 0.45),
    (11, 3752, 221, 13.9, 1617, 0.47),
    (12, 3750, 215, 13.6, 1614, 0.45),
    (13, 3460, 184, 17.1, 1099, 0.29),
    (14, 3446, 185, 20.4, 925, 0.24),
    (15, 3402, 189, 16.3, 1181, 0.32),
    (16, 3377, 201, 15.8, 1302, 0.38),
    (17, 3376, 175, 18.2, 979, 0.25),
    (18, 3360, 198, 14.7, 1371, 0.40),
    (19, 3142, 191, 13.8, 1409, 0.42),
    (20, 3008, 177, 11.4, 1579, 0.46),
    (21, 1514, 87, 6.1, 1449, 0.41),
)

KERNELS = ("gaussian", "logistic")


@dataclass(frozen=True)
class ThrottleMode:
    power: float
    thrust: float  # mN
    mass_flow: float  # mg/s
    isp: float
    efficiency: float

    def __post_init__(self):
        if min(self.power, self.thrust, self.mass_flow, self.isp) <= 0:
            raise ValueError(f"throttle mode entries must be positive: {self}")
        if not 0 < self.efficiency < 1:
            raise ValueError(f"throttle mode efficiency must lie in (0, 1): {self}")


@dataclass(frozen=True)
class ThrottleTable:
    """Discrete operating points plus the blending bandwidth ``s`` [W].

    ``kernel`` picks the per-mode activation: ``gaussian`` weights each mode
    by ``exp(-(P - P_i)^2 / 2s^2)``; ``logistic`` uses the logistic density of
    the power margin ``(P - P_i)/s``. Both are normalised to sum to one.
    """

    modes: tuple[ThrottleMode, ...]
    bandwidth: float = 100.0
    kernel: str = "gaussian"

    def __post_init__(self):
        if not self.modes:
            raise ValueError("throttle table is empty")
        if not self.bandwidth > 0:
            raise ValueError("throttle bandwidth must be positive")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")

    @classmethod
    def spt140(cls, bandwidth: float = 100.0, kernel: str = "gaussian") -> "ThrottleTable":
        modes = tuple(ThrottleMode(*row[1:]) for row in SPT140_MODES)
        return cls(modes, bandwidth, kernel)

    @classmethod
    def from_csv(cls, path, bandwidth: float = 100.0, kernel: str = "gaussian") -> "ThrottleTable":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_HEADER:
                raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
            modes = tuple(
                ThrottleMode(float(row["power_w"]), float(row["thrust_mn"]),
                             float(row["mdot_mg_s"]), float(row["isp_s"]),
                             float(row["efficiency"]))
                for row in reader
            )
        return cls(modes, bandwidth, kernel)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for i, m in enumerate(self.modes, start=1):
                w.writerow([i, m.power, m.thrust, m.mass_flow, m.isp, m.efficiency])
        return path

    @property
    def powers(self) -> np.ndarray:
        return np.array([m.power for m in self.modes])

    @property
    def thrusts(self) -> np.ndarray:
        """Per-mode thrust [N]."""
        return np.array([m.thrust for m in self.modes]) * 1e-3

    @property
    def mass_flows(self) -> np.ndarray:
        """Per-mode mass flow [kg/s]."""
        return np.array([m.mass_flow for m in self.modes]) * 1e-6

    @property
    def power_bounds(self) -> tuple[float, float]:
        p = self.powers
        return float(p.min()), float(p.max())


@dataclass(frozen=True)
class EngineCluster:
    n_eng: int = 1
    table: ThrottleTable = ThrottleTable.spt140()

    def __post_init__(self):
        if int(self.n_eng) != self.n_eng or self.n_eng < 1:
            raise ValueError("n_eng must be an integer >= 1")


def _log_kernel(table: ThrottleTable, P_E):
    """Log activation and its derivative w.r.t. P_E, shape (..., n_modes)."""
    u = (np.asarray(P_E, dtype=float)[..., None] - table.powers) / table.bandwidth
    if table.kernel == "gaussian":
        return -0.5 * u * u, -u / table.bandwidth
    # log of the logistic density, written to stay finite for large |u|
    a = np.abs(u)
    logw = -a - 2.0 * np.log1p(np.exp(-a))
    sig = 0.5 * (1.0 + np.tanh(0.5 * u))
    return logw, (1.0 - 2.0 * sig) / table.bandwidth


def _weights_and_slopes(table: ThrottleTable, P_E):
    logw, dlogw = _log_kernel(table, P_E)
    logw = logw - logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=-1, keepdims=True)
    mean_d = np.sum(w * dlogw, axis=-1, keepdims=True)
    return w, w * (dlogw - mean_d)


def mode_weights(table: ThrottleTable, P_E) -> np.ndarray:
    """Convex activation weights over the table modes."""
    return _weights_and_slopes(table, P_E)[0]


def mode_weight_slopes(table: ThrottleTable, P_E) -> np.ndarray:
    return _weights_and_slopes(table, P_E)[1]


def thrust_and_mdot(cluster: EngineCluster, P_E):
    """Total thrust [N] and propellant flow [kg/s] for commanded power ``P_E`` [W]."""
    w = mode_weights(cluster.table, P_E)
    n = cluster.n_eng
    return n * (w @ cluster.table.thrusts), n * (w @ cluster.table.mass_flows)


def propulsion_partials(cluster: EngineCluster, P_E):
    """Returns ``(T, mdot, dT/dP_E, dmdot/dP_E)``."""
    w, dw = _weights_and_slopes(cluster.table, P_E)
    n = cluster.n_eng
    t, q = cluster.table.thrusts, cluster.table.mass_flows
    return n * (w @ t), n * (w @ q), n * (dw @ t), n * (dw @ q)


def effective_isp(cluster: EngineCluster, P_E):
    thrust, mdot = thrust_and_mdot(cluster, P_E)
    return thrust / (mdot * G0)


def power_for_thrust(cluster: EngineCluster, thrust, p_lo=None, p_hi=None, n_grid: int = 2001):
    """Lowest commanded power whose blended thrust reaches ``thrust``.

    The blended curve is not monotone, so it is bracketed against its running
    maximum on a fine grid and refined by bisection. Demands above the
    attainable maximum map to the power of that maximum.
    """
    from scipy.optimize import brentq

    lo, hi = cluster.table.power_bounds
    lo = lo if p_lo is None else p_lo
    hi = hi if p_hi is None else p_hi
    grid = np.linspace(lo, hi, n_grid)
    tg, _ = thrust_and_mdot(cluster, grid)
    peak = np.maximum.accumulate(tg)
    out = []
    for target in np.atleast_1d(np.asarray(thrust, dtype=float)):
        idx = int(np.searchsorted(peak, target))
        if idx >= n_grid:
            out.append(grid[int(np.argmax(tg))])
        elif idx == 0:
            out.append(lo)
        else:
            f = lambda p: thrust_and_mdot(cluster, p)[0] - target  # noqa: E731
            a, b = grid[idx - 1], grid[idx]
            out.append(brentq(f, a, b) if f(a) < 0 < f(b) else b)
    res = np.array(out)
    return res if np.ndim(thrust) else float(res[0])

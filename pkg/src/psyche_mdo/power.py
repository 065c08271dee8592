"""Solar array output and the smoothed propulsion power budget."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SECONDS_PER_YEAR = 365.25 * 86400.0


@dataclass(frozen=True)
class PowerConfig:
    """Array, bus and PPU parameters.

    ``literal_switch`` reproduces the switching weight exactly as printed
    (which behaves as a smooth maximum); the default is the smooth minimum.
    ``clamp_nonnegative`` additionally smooth-clamps the budget at zero.
    """

    A_SA: float = 50.0
    eta_SA: float = 0.3
    S0: float = 1367.0
    r_s: float = 2.9
    d: tuple[float, float, float, float, float] = (1.0, 0.0, 0.0, 0.0, 0.0)
    sigma: float = 0.03
    P_bus: float = 590.0
    P_max: float = 4863.0
    eta_d: float = 0.95
    rho_p: float = 10.0
    literal_switch: bool = False
    clamp_nonnegative: bool = False
    horizon_s: float = field(default=10 * SECONDS_PER_YEAR)

    def __post_init__(self):
        object.__setattr__(self, "d", tuple(float(v) for v in self.d))
        checks = {
            "A_SA": self.A_SA > 0,
            "eta_SA": 0 < self.eta_SA <= 1,
            "eta_d": 0 < self.eta_d <= 1,
            "r_s": self.r_s > 0,
            "sigma": self.sigma >= 0,
            "rho_p": self.rho_p > 0,
            "P_max": self.P_max > 0,
            "P_bus": self.P_bus >= 0,
            "S0": self.S0 > 0,
            "d": len(self.d) == 5,
        }
        for name, ok in checks.items():
            if not ok:
                raise ValueError(f"power.{name} out of range: {getattr(self, name)!r}")
        if abs(self.polynomial_denominator) < 1e-12:
            raise ValueError("power.d: polynomial denominator vanishes at r_s")
        if 1.0 - self.sigma * self.horizon_s / SECONDS_PER_YEAR <= 0:
            raise ValueError("power.sigma: degradation factor turns non-positive within horizon_s")

    @property
    def polynomial_denominator(self) -> float:
        d = self.d
        return 1.0 + d[3] * self.r_s + d[4] * self.r_s**2

    @property
    def correction_factor(self) -> float:
        d, rs = self.d, self.r_s
        return (d[0] + d[1] / rs + d[2] / rs**2) / self.polynomial_denominator

    def specific_power(self) -> float:
        """Beginning-of-life array output per unit area [W/m^2]."""
        return self.eta_SA * self.S0 / self.r_s**2 * self.correction_factor


def _degradation(cfg: PowerConfig, t):
    return 1.0 - cfg.sigma * np.asarray(t, dtype=float) / SECONDS_PER_YEAR


def solar_array_power(cfg: PowerConfig, t, area=None):
    """Array output [W] after ``t`` seconds of degradation.

    ``area`` overrides ``cfg.A_SA`` (the coupled problem sizes the array).
    """
    area = cfg.A_SA if area is None else area
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("elapsed time must be non-negative")
    factor = _degradation(cfg, t)
    if np.any(factor <= 0):
        raise ValueError("degradation factor is non-positive at the requested time")
    return area * cfg.specific_power() * factor


def _smooth_pick(g, rho, toward_min: bool):
    """``b + w*g`` where ``w`` switches smoothly on the sign of ``g``; returns (value - b, d/dg)."""
    s = np.sqrt(g * g + rho * rho)
    sign = -1.0 if toward_min else 1.0
    val = 0.5 * (g + sign * g * g / s)
    dval = 0.5 * (1.0 + sign * (2.0 * g / s - g**3 / s**3))
    return val, dval


def _budget(cfg: PowerConfig, P_SA):
    net = np.asarray(P_SA, dtype=float) - cfg.P_bus
    g = cfg.P_max - net
    off, doff_dg = _smooth_pick(g, cfg.rho_p, toward_min=not cfg.literal_switch)
    inner = net + off
    dinner = 1.0 - doff_dg
    if cfg.clamp_nonnegative:
        # smooth max(0, inner) with the same kernel
        off2, doff2 = _smooth_pick(-inner, cfg.rho_p, toward_min=False)
        dinner = dinner * (1.0 - doff2)
        inner = inner + off2
    return cfg.eta_d * inner, cfg.eta_d * dinner


def available_power(cfg: PowerConfig, P_SA):
    """Power available to the thruster [W] for array output ``P_SA``."""
    return _budget(cfg, P_SA)[0]


def available_power_slope(cfg: PowerConfig, P_SA):
    """dP_avail/dP_SA."""
    return _budget(cfg, P_SA)[1]


def power_partials(cfg: PowerConfig, t, area=None):
    """Returns ``(P_avail, dP_avail/dA_SA, dP_avail/dt)`` at elapsed time ``t``."""
    area = cfg.A_SA if area is None else area
    p_sa = solar_array_power(cfg, t, area)
    p_av, slope = _budget(cfg, p_sa)
    dpsa_da = cfg.specific_power() * _degradation(cfg, t)
    dpsa_dt = -area * cfg.specific_power() * cfg.sigma / SECONDS_PER_YEAR
    return p_av, slope * dpsa_da, slope * dpsa_dt

"""Planar polar two-body dynamics with a variable low-thrust vector.

State ordering everywhere is ``(r, theta, v_r, v_theta, m)`` and control
ordering is ``(T, alpha, mdot)``. All functions are vectorised over leading
axes so a whole collocation grid can be evaluated in one call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STATE_NAMES = ("r", "theta", "v_r", "v_theta", "m")
CONTROL_NAMES = ("T", "alpha", "mdot")

PSYCHE_MU = 1.601e9  # m^3/s^2


class DomainError(ValueError):
    """Raised when a state sits outside the domain of the equations of motion."""


@dataclass(frozen=True)
class SpacecraftState:
    r: float
    theta: float
    v_r: float
    v_theta: float
    m: float

    def to_array(self) -> np.ndarray:
        return np.array([self.r, self.theta, self.v_r, self.v_theta, self.m], dtype=float)

    @classmethod
    def from_array(cls, x) -> "SpacecraftState":
        return cls(*(float(v) for v in np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class ControlInput:
    thrust: float
    alpha: float
    mdot: float

    def __post_init__(self):
        if self.thrust < 0 or self.mdot < 0:
            raise ValueError("thrust and mdot must be non-negative")

    def to_array(self) -> np.ndarray:
        return np.array([self.thrust, self.alpha, self.mdot], dtype=float)


@dataclass(frozen=True)
class BodyParameters:
    mu: float = PSYCHE_MU

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")

    def circular_speed(self, r):
        return np.sqrt(self.mu / np.asarray(r, dtype=float))

    def mean_motion(self, r):
        return np.sqrt(self.mu / np.asarray(r, dtype=float) ** 3)

    def scaled(self, scales: "ScaleSet") -> "BodyParameters":
        return BodyParameters(self.mu * scales.time_ref**2 / scales.length_ref**3)


@dataclass(frozen=True)
class ScaleSet:
    """Reference quantities for nondimensionalisation.

    Power and array area have their own references; they do not enter the
    equations of motion so nothing forces them to be derived.
    """

    length_ref: float = 1.0
    time_ref: float = 1.0
    mass_ref: float = 1.0
    power_ref: float = 1.0
    area_ref: float = 1.0

    def __post_init__(self):
        for name in ("length_ref", "time_ref", "mass_ref", "power_ref", "area_ref"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be finite and positive, got {val}")

    @classmethod
    def canonical(cls, r0: float, mu: float, mass: float,
                  power_ref: float = 1000.0, area_ref: float = 10.0) -> "ScaleSet":
        """Canonical units: circular speed at ``r0`` is exactly one."""
        return cls(r0, float(np.sqrt(r0**3 / mu)), mass, power_ref, area_ref)

    @property
    def velocity_ref(self) -> float:
        return self.length_ref / self.time_ref

    @property
    def accel_ref(self) -> float:
        return self.length_ref / self.time_ref**2

    @property
    def force_ref(self) -> float:
        return self.mass_ref * self.accel_ref

    @property
    def mdot_ref(self) -> float:
        return self.mass_ref / self.time_ref

    @property
    def state_ref(self) -> np.ndarray:
        v = self.velocity_ref
        return np.array([self.length_ref, 1.0, v, v, self.mass_ref])

    @property
    def rate_ref(self) -> np.ndarray:
        return self.state_ref / self.time_ref

    @property
    def control_ref(self) -> np.ndarray:
        return np.array([self.force_ref, 1.0, self.mdot_ref])


def _as_array(x) -> np.ndarray:
    if hasattr(x, "to_array"):
        return x.to_array()
    return np.asarray(x, dtype=float)


def _check_domain(r, m):
    if np.any(~(r > 0)) or np.any(~(m > 0)):
        raise DomainError("equations of motion need r > 0 and m > 0")


def eom(state, control, body: BodyParameters) -> np.ndarray:
    """Time derivative of the state.

    ``state`` has shape ``(..., 5)`` and ``control`` shape ``(..., 3)``;
    dataclass instances are accepted as well.
    """
    x = _as_array(state)
    u = _as_array(control)
    r, _, vr, vt, m = np.moveaxis(x, -1, 0)
    thrust, alpha, mdot = np.moveaxis(u, -1, 0)
    _check_domain(r, m)
    acc = thrust / m
    out = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (5,)))
    out[..., 0] = vr
    out[..., 1] = vt / r
    out[..., 2] = vt**2 / r - body.mu / r**2 + acc * np.sin(alpha)
    out[..., 3] = -vr * vt / r + acc * np.cos(alpha)
    out[..., 4] = -mdot
    return out


def eom_partials(state, control, body: BodyParameters) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians of :func:`eom`.

    Returns ``(dfdx, dfdu)`` with shapes ``(..., 5, 5)`` and ``(..., 5, 3)``.
    """
    x = _as_array(state)
    u = _as_array(control)
    r, _, vr, vt, m = np.moveaxis(x, -1, 0)
    thrust, alpha, _ = np.moveaxis(u, -1, 0)
    _check_domain(r, m)
    shape = np.broadcast_shapes(r.shape, thrust.shape)
    mu = body.mu
    sa, ca = np.sin(alpha), np.cos(alpha)

    dfdx = np.zeros(shape + (5, 5))
    dfdx[..., 0, 2] = 1.0
    dfdx[..., 1, 0] = -vt / r**2
    dfdx[..., 1, 3] = 1.0 / r
    dfdx[..., 2, 0] = -vt**2 / r**2 + 2.0 * mu / r**3
    dfdx[..., 2, 3] = 2.0 * vt / r
    dfdx[..., 2, 4] = -thrust * sa / m**2
    dfdx[..., 3, 0] = vr * vt / r**2
    dfdx[..., 3, 2] = -vt / r
    dfdx[..., 3, 3] = -vr / r
    dfdx[..., 3, 4] = -thrust * ca / m**2

    dfdu = np.zeros(shape + (5, 3))
    dfdu[..., 2, 0] = sa / m
    dfdu[..., 2, 1] = thrust * ca / m
    dfdu[..., 3, 0] = ca / m
    dfdu[..., 3, 1] = -thrust * sa / m
    dfdu[..., 4, 2] = -1.0
    return dfdx, dfdu


# Nondimensionalisation. Each pair is an exact inverse up to rounding.

def scale_state(x, scales: ScaleSet) -> np.ndarray:
    return _as_array(x) / scales.state_ref


def unscale_state(x, scales: ScaleSet) -> np.ndarray:
    return np.asarray(x, dtype=float) * scales.state_ref


def scale_rate(xdot, scales: ScaleSet) -> np.ndarray:
    return np.asarray(xdot, dtype=float) / scales.rate_ref


def unscale_rate(xdot, scales: ScaleSet) -> np.ndarray:
    return np.asarray(xdot, dtype=float) * scales.rate_ref


def scale_control(u, scales: ScaleSet) -> np.ndarray:
    return _as_array(u) / scales.control_ref


def unscale_control(u, scales: ScaleSet) -> np.ndarray:
    return np.asarray(u, dtype=float) * scales.control_ref


def orbit_energy(x, body: BodyParameters):
    x = _as_array(x)
    return 0.5 * (x[..., 2] ** 2 + x[..., 3] ** 2) - body.mu / x[..., 0]


def angular_momentum(x):
    x = _as_array(x)
    return x[..., 0] * x[..., 3]

"""Finite Fourier series shape-based initial guess.

Radius and polar angle are each written over normalised time ``tau`` in [0, 1]
as a secular line plus ``n_terms`` harmonics::

    q(tau) = c0 + c1*tau + sum_k a_k cos(k pi tau) + b_k sin(k pi tau)

Four boundary conditions per coordinate are imposed exactly; the remaining
coefficients are a least-squares fit to an Edelbaum-style reference spiral.
Controls follow from the equations of motion run backwards.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import null_space

from . import power as pw
from . import propulsion as prop
from .dynamics import BodyParameters
from .transcription import NodeGuess


class FitError(RuntimeError):
    pass


def _basis(tau, n_terms: int, deriv: int = 0) -> np.ndarray:
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    k = np.pi * np.arange(1, n_terms + 1)
    kt = tau[:, None] * k[None, :]
    B = np.empty((tau.size, 2 + 2 * n_terms))
    if deriv == 0:
        B[:, 0], B[:, 1] = 1.0, tau
        B[:, 2::2], B[:, 3::2] = np.cos(kt), np.sin(kt)
    elif deriv == 1:
        B[:, 0], B[:, 1] = 0.0, 1.0
        B[:, 2::2], B[:, 3::2] = -k * np.sin(kt), k * np.cos(kt)
    elif deriv == 2:
        B[:, 0], B[:, 1] = 0.0, 0.0
        B[:, 2::2], B[:, 3::2] = -k**2 * np.cos(kt), -k**2 * np.sin(kt)
    else:
        raise ValueError("deriv must be 0, 1 or 2")
    return B


@dataclass(frozen=True)
class FourierShape:
    r0: float
    rf: float
    revs: float
    t_f: float
    n_terms: int
    coef_r: np.ndarray  # radius in units of r0
    coef_theta: np.ndarray
    mu: float

    def radius(self, tau, deriv: int = 0):
        """d^k r / d tau^k in metres."""
        return self.r0 * (_basis(tau, self.n_terms, deriv) @ self.coef_r)

    def angle(self, tau, deriv: int = 0):
        return _basis(tau, self.n_terms, deriv) @ self.coef_theta

    def boundary_residuals(self) -> np.ndarray:
        """Scaled residuals of all eight boundary conditions."""
        n0 = np.sqrt(self.mu / self.r0**3) * self.t_f
        nf = np.sqrt(self.mu / self.rf**3) * self.t_f
        ends = np.array([0.0, 1.0])
        r, dr = self.radius(ends) / self.r0, self.radius(ends, 1) / self.r0
        th, dth = self.angle(ends), self.angle(ends, 1)
        return np.array([
            r[0] - 1.0, r[1] - self.rf / self.r0, dr[0], dr[1],
            th[0], (th[1] - 2 * np.pi * self.revs) / (2 * np.pi * max(self.revs, 1e-12)),
            (dth[0] - n0) / n0, (dth[1] - nf) / nf,
        ])


def edelbaum_dv(mu: float, r0: float, rf: float) -> float:
    return abs(np.sqrt(mu / rf) - np.sqrt(mu / r0))


def edelbaum_time(mu: float, r0: float, rf: float, mass: float, thrust: float) -> float:
    return edelbaum_dv(mu, r0, rf) * mass / thrust


def _reference_spiral(mu, r0, rf, t_f, tau):
    """Circular speed varying linearly in time; returns (r, theta) at ``tau``."""
    v0, vf = np.sqrt(mu / r0), np.sqrt(mu / rf)
    v = v0 + (vf - v0) * tau
    r = mu / v**2
    if np.isclose(v0, vf, rtol=1e-14, atol=0.0):
        theta = v0**3 / mu * t_f * tau
    else:
        theta = t_f / mu * (v**4 - v0**4) / (4.0 * (vf - v0))
    return r, theta


def suggest_revs(mu: float, r0: float, rf: float, t_f: float) -> float:
    """Revolutions swept by the reference spiral over ``t_f``."""
    return float(_reference_spiral(mu, r0, rf, t_f, 1.0)[1] / (2 * np.pi))


def _constrained_lstsq(C, d, A, y, label):
    cond = np.linalg.cond(C)
    if not np.isfinite(cond) or cond > 1e12:
        raise FitError(f"{label}: boundary-condition system is singular (condition number {cond:.3g})")
    cp = np.linalg.lstsq(C, d, rcond=None)[0]
    Z = null_space(C)
    z = np.linalg.lstsq(A @ Z, y - A @ cp, rcond=None)[0]
    c = cp + Z @ z
    for _ in range(2):  # iterative refinement of the boundary rows
        c = c + np.linalg.lstsq(C, d - C @ c, rcond=None)[0]
    return c


def fit_shape(r0: float, rf: float, revs: float | None, t_f_guess: float, n_terms: int = 10,
              mu: float = BodyParameters().mu, n_samples: int = 400) -> FourierShape:
    """Fit radius and angle series between two circular orbits.

    ``revs=None`` takes the revolution count from :func:`suggest_revs`.
    """
    if not (r0 > 0 and rf > 0):
        raise ValueError("radii must be positive")
    if n_terms < 3:
        raise ValueError("n_terms must be >= 3")
    if not t_f_guess > 0:
        raise ValueError("t_f_guess must be positive")
    if revs is None:
        revs = suggest_revs(mu, r0, rf, t_f_guess)
    if revs <= 0:
        raise ValueError("revs must be positive")

    ends = np.array([0.0, 1.0])
    C = np.vstack([_basis(ends, n_terms), _basis(ends, n_terms, 1)])
    tau = np.linspace(0.0, 1.0, n_samples)
    A = _basis(tau, n_terms)
    r_ref, th_ref = _reference_spiral(mu, r0, rf, t_f_guess, tau)

    coef_r = _constrained_lstsq(C, np.array([1.0, rf / r0, 0.0, 0.0]), A, r_ref / r0, "radius")
    n0 = np.sqrt(mu / r0**3) * t_f_guess
    nf = np.sqrt(mu / rf**3) * t_f_guess
    th_f = 2 * np.pi * revs
    # stretch the reference so its end angle matches the requested revolutions
    th_target = th_ref * (th_f / th_ref[-1])
    coef_th = _constrained_lstsq(C, np.array([0.0, th_f, n0, nf]), A, th_target, "angle")
    return FourierShape(float(r0), float(rf), float(revs), float(t_f_guess), int(n_terms),
                        coef_r, coef_th, float(mu))


@dataclass
class DenseGuess:
    tau: np.ndarray
    t: np.ndarray
    states: np.ndarray  # (M, 5)
    thrust: np.ndarray
    alpha: np.ndarray
    accel: np.ndarray  # (M, 2) required thrust acceleration (radial, tangential)
    t_f: float


def inverse_controls(shape: FourierShape, mass_profile_guess: tuple[float, float],
                     n_samples: int = 401, max_thrust: float | None = None) -> DenseGuess:
    """Sample the shape and recover thrust and steering by inverse dynamics.

    ``mass_profile_guess`` is ``(m0, mdot)``: mass decreases linearly in time.
    """
    m0, mdot = mass_profile_guess
    tau = np.linspace(0.0, 1.0, n_samples)
    tf = shape.t_f
    r = shape.radius(tau)
    if np.any(r <= 0):
        raise FitError("fitted radius is not positive on [0, 1]")
    rd = shape.radius(tau, 1) / tf
    rdd = shape.radius(tau, 2) / tf**2
    th = shape.angle(tau)
    thd = shape.angle(tau, 1) / tf
    thdd = shape.angle(tau, 2) / tf**2

    t = tau * tf
    m = m0 - mdot * t
    v_r = rd
    v_t = r * thd
    a_r = rdd - v_t**2 / r + shape.mu / r**2
    a_t = rd * thd + r * thdd + v_r * v_t / r
    thrust = m * np.hypot(a_r, a_t)
    alpha = np.unwrap(np.arctan2(a_r, a_t))
    alpha += 2 * np.pi * np.round((np.pi - np.median(alpha)) / (2 * np.pi))

    if max_thrust is not None and np.any(thrust > max_thrust):
        warnings.warn(
            f"shape needs up to {thrust.max():.4g} N, above the available {max_thrust:.4g} N; "
            "the NLP enforces the true limits", RuntimeWarning, stacklevel=2)
    states = np.column_stack([r, th, v_r, v_t, m])
    return DenseGuess(tau, t, states, thrust, alpha, np.column_stack([a_r, a_t]), tf)


def resample_to_grid(dense: DenseGuess, node_tau, cluster: prop.EngineCluster,
                     power: pw.PowerConfig, area: float,
                     p_bounds: tuple[float, float] | None = None) -> NodeGuess:
    """Interpolate the dense guess onto transcription nodes.

    Commanded power is the lowest setting that attains the required thrust,
    clamped into ``p_bounds`` and under the available power at each node.
    """
    node_t = np.asarray(node_tau, dtype=float) * dense.t_f
    if np.any(node_t < -1e-9 * dense.t_f) or np.any(node_t > dense.t_f * (1 + 1e-9)):
        raise ValueError("node times fall outside the guess horizon")
    states = CubicSpline(dense.t, dense.states, axis=0)(node_t)
    alpha = CubicSpline(dense.t, dense.alpha)(node_t)
    thrust = CubicSpline(dense.t, dense.thrust)(node_t)

    lo, hi = cluster.table.power_bounds if p_bounds is None else p_bounds
    P_E = prop.power_for_thrust(cluster, np.maximum(thrust, 0.0), lo, hi)
    cap = pw.available_power(power, pw.solar_array_power(power, np.clip(node_t, 0, None), area))
    P_E = np.clip(P_E, lo, np.maximum(lo, np.minimum(hi, cap)))
    return NodeGuess(states, P_E, alpha, dense.t_f, area)

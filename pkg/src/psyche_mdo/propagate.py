"""Explicit re-integration of a collocated solution with its own control history."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from . import power as pw
from . import propulsion as prop
from .dynamics import BodyParameters, ScaleSet, eom
from .transcription import Solution, lgr_points

TRAJECTORY_COLUMNS = ("t", "r", "theta", "v_r", "v_theta", "m", "P_E", "alpha",
                      "T", "mdot", "P_SA", "P_avail")


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t_fail: float):
        super().__init__(f"{message} (t = {t_fail:.6g} s)")
        self.t_fail = t_fail


@dataclass
class PropagationResult:
    t: np.ndarray
    states: np.ndarray  # (M, 5) physical
    P_E: np.ndarray
    alpha: np.ndarray
    node_t: np.ndarray
    node_states_propagated: np.ndarray  # (N, 5) propagated values at node times
    node_states_solution: np.ndarray
    divergence_max: np.ndarray  # (5,) per-state max |prop - node|
    divergence_rms: np.ndarray
    power: pw.PowerConfig
    cluster: prop.EngineCluster
    area: float

    @property
    def max_radius_divergence(self) -> float:
        return float(self.divergence_max[0])

    def rows(self) -> np.ndarray:
        thrust, mdot = prop.thrust_and_mdot(self.cluster, self.P_E)
        p_sa = pw.solar_array_power(self.power, self.t, self.area)
        p_av = pw.available_power(self.power, p_sa)
        return np.column_stack([self.t, self.states, self.P_E, self.alpha, thrust, mdot, p_sa, p_av])

    def to_csv(self, path) -> Path:
        return write_trajectory_csv(path, self.rows())


def write_trajectory_csv(path, rows: np.ndarray) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    return path


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True, encoding="utf-8")
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def propagate(solution: Solution, rtol: float = 1e-10, atol: float = 1e-10,
              scales: ScaleSet | None = None, dense_per_segment: int = 20) -> PropagationResult:
    """Integrate the dynamics under the solution's interpolated controls.

    Integration runs segment by segment (the control polynomials have kinks at
    segment joints) in scaled units, using the Dormand-Prince 5(4) pair.
    """
    if not (rtol > 0 and atol > 0):
        raise ValueError("rk tolerances must be positive")
    if scales is None:
        scales = ScaleSet.canonical(solution.r0, solution.body.mu, solution.m_initial)
    ctrl = solution.control_interpolant()
    cluster = solution.cluster
    body_s = solution.body.scaled(scales)
    ts = scales.time_ref
    sref = scales.state_ref

    def rhs(k):
        def f(tau, y):
            t = tau * ts
            P, alpha = ctrl.eval_segment(k, t)
            thrust, mdot = prop.thrust_and_mdot(cluster, P)
            u = np.array([thrust / scales.force_ref, alpha, mdot / scales.mdot_ref])
            return eom(y, u, body_s)
        return f

    x0 = np.array([solution.r0, 0.0, 0.0, float(solution.body.circular_speed(solution.r0)),
                   solution.m_initial])
    y = x0 / sref
    node_t = solution.t
    node_prop = np.empty_like(solution.states)
    node_prop[0] = x0
    t_out, y_out = [np.array([0.0])], [x0[None, :]]
    order = solution.grid.order
    xi = np.append(lgr_points(order), 1.0)
    for k in range(solution.grid.n_segments):
        a, b = ctrl.bounds[k], ctrl.bounds[k + 1]
        local = a + 0.5 * (xi[1:] + 1.0) * (b - a)
        dense = np.linspace(a, b, dense_per_segment + 1)[1:]
        t_eval = np.union1d(local, dense)
        sol = solve_ivp(rhs(k), (a / ts, b / ts), y, method="RK45", rtol=rtol, atol=atol,
                        t_eval=t_eval / ts)
        if not sol.success:
            raise IntegrationError(f"integration failed: {sol.message}", float(sol.t[-1] * ts))
        yk = sol.y.T * sref
        idx = np.searchsorted(t_eval, local)
        node_prop[k * order + 1:(k + 1) * order + 1] = yk[idx]
        t_out.append(t_eval)
        y_out.append(yk)
        y = sol.y[:, -1]

    t_all = np.concatenate(t_out)
    states = np.vstack(y_out)
    controls = np.array([ctrl.eval_segment(ctrl.segment(min(t, node_t[-1] * (1 - 1e-15))), t)
                         for t in t_all])
    err = node_prop - solution.states
    return PropagationResult(
        t=t_all, states=states, P_E=controls[:, 0], alpha=controls[:, 1],
        node_t=node_t, node_states_propagated=node_prop, node_states_solution=solution.states,
        divergence_max=np.abs(err).max(axis=0), divergence_rms=np.sqrt((err**2).mean(axis=0)),
        power=solution.power, cluster=cluster, area=solution.area,
    )


@dataclass
class MassAudit:
    consumed: float
    quadrature: float
    residual: float
    node_consumed: float


def mass_audit(result: PropagationResult, solution: Solution, points_per_segment: int = 24) -> MassAudit:
    """Propellant bookkeeping: propagated mass drop vs quadrature of the flow rate."""
    consumed = float(result.states[0, 4] - result.states[-1, 4])
    ctrl = solution.control_interpolant()
    gx, gw = np.polynomial.legendre.leggauss(points_per_segment)
    total = 0.0
    for k in range(solution.grid.n_segments):
        a, b = ctrl.bounds[k], ctrl.bounds[k + 1]
        t = a + 0.5 * (gx + 1.0) * (b - a)
        P = ctrl.eval_segment(k, t)[:, 0]
        _, mdot = prop.thrust_and_mdot(solution.cluster, P)
        total += 0.5 * (b - a) * float(gw @ mdot)
    return MassAudit(consumed, total, abs(consumed - total), solution.propellant_used)

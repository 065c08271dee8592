"""Acceptance criteria 1-9. Each test records one PASS/FAIL line in the terminal summary.

Set ``PSYCHE_MDO_FULL_SCALE=1`` to give the full-scale attempt (criterion 8) the
solver's complete iteration budget instead of the short default budget.
"""
import json
import os

import numpy as np
import pytest

from psyche_mdo import power as pw
from psyche_mdo import propulsion as prop
from psyche_mdo import scenario as sc
from psyche_mdo import sizing
from psyche_mdo import transcription as tr
from psyche_mdo.dynamics import BodyParameters, ScaleSet, eom, eom_partials

from conftest import central_diff

BODY = BodyParameters()


def _rel(a, b, floor):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)) / np.maximum(np.abs(a), floor)))


# ------------------------------------------------------------------ criterion 1

def _dynamics_error(rng, n):
    scales = ScaleSet.canonical(300e3, BODY.mu, 404.5)
    body = BODY.scaled(scales)
    worst = 0.0
    for _ in range(n):
        x = np.array([rng.uniform(0.5, 3.0), rng.uniform(-10, 10), rng.uniform(-0.2, 0.2),
                      rng.uniform(0.5, 1.5), rng.uniform(0.6, 1.0)])
        u = np.array([rng.uniform(0.0, 0.05), rng.uniform(0, 2 * np.pi), rng.uniform(0, 0.05)])
        A, B = eom_partials(x, u, body)
        J = np.hstack([A, B])
        Jfd = np.hstack([central_diff(lambda z: eom(z, u, body), x, 1e-6),
                         central_diff(lambda z: eom(x, z, body), u, 1e-6)])
        worst = max(worst, np.abs(J - Jfd).max() / np.abs(J).max())
    return worst


def _power_error(rng, n):
    worst = 0.0
    for _ in range(n):
        cfg = pw.PowerConfig(rho_p=float(rng.choice([1.0, 10.0, 100.0])))
        area = rng.uniform(5, 200)
        t = rng.uniform(0, 5 * pw.SECONDS_PER_YEAR)
        _, dA, dt = pw.power_partials(cfg, t, area)
        hA = 1e-3 * cfg.rho_p / cfg.specific_power()
        ht = hA / area * pw.SECONDS_PER_YEAR / cfg.sigma
        fA = central_diff(lambda a: pw.power_partials(cfg, t, a[0])[0], [area], hA)[0]
        ft = central_diff(lambda s: pw.power_partials(cfg, s[0], area)[0], [t], ht)[0]
        floor_a = 1e-3 * cfg.eta_d * cfg.specific_power()
        floor_t = floor_a * area * cfg.sigma / pw.SECONDS_PER_YEAR
        worst = max(worst, _rel(dA, fA, floor_a), _rel(dt, ft, floor_t))
    return worst


def _propulsion_error(rng, n):
    cluster = prop.EngineCluster(1, prop.ThrottleTable.spt140())
    worst = 0.0
    for p in rng.uniform(1514, 4989, n):
        _, _, dT, dq = prop.propulsion_partials(cluster, p)
        fd = central_diff(lambda z: np.array(prop.thrust_and_mdot(cluster, z[0])), [p], 1e-3)[:, 0]
        worst = max(worst, _rel(dT, fd[0], 1e-9), _rel(dq, fd[1], 1e-12))
    return worst


def _sizing_error(rng, n):
    cfg = sizing.MassConfig()
    worst = 0.0
    for a in rng.uniform(5, 200, n):
        fd = central_diff(lambda z: np.array([sizing.initial_mass(cfg, z[0])]), [a], 1e-3)[0, 0]
        worst = max(worst, _rel(sizing.mass_area_slope(cfg), fd, 1.0))
    return worst


def _transcription_error(rng, n):
    worst = 0.0
    for i in range(n):
        mode = sc.MODES[i % 2]
        cfg = sc.load_config(preset="desk", overrides={"mode": mode, "grid.n_segments": 2})
        p = tr.build(cfg.grid, cfg, sc.make_guess(cfg).nodes) if i < 2 else problems[mode]
        problems[mode] = p
        lb, ub = p.variable_bounds()
        x = np.clip(p.x0 * (1 + 0.02 * rng.standard_normal(p.n_x)), lb, ub)
        J = p.jacobian(x).toarray()
        Jfd = central_diff(p.constraints, x, 1e-6 * np.maximum(1.0, np.abs(x)))
        worst = max(worst, np.abs(J - Jfd).max() / np.abs(J).max())
    return worst


problems: dict = {}


def test_criterion_1_derivatives(acceptance_report):
    rng = np.random.default_rng(2024)
    errors = {
        "dynamics": _dynamics_error(rng, 100),
        "power": _power_error(rng, 100),
        "propulsion": _propulsion_error(rng, 100),
        "sizing": _sizing_error(rng, 100),
        "transcription": _transcription_error(rng, 100),
    }
    ok = max(errors.values()) < 5e-6
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errors.items())
    assert acceptance_report(1, ok, f"worst relative FD error over 100 points each: {detail}")


# ------------------------------------------------------------------ criterion 2

def test_criterion_2_throttle_recovery(acceptance_report):
    s = 0.25
    cluster = prop.EngineCluster(1, prop.ThrottleTable.spt140(bandwidth=s))
    t = cluster.table
    T, q = prop.thrust_and_mdot(cluster, t.powers)
    err = np.maximum(np.abs(T / t.thrusts - 1), np.abs(q / t.mass_flows - 1))
    exempt = (t.powers >= 3850) & (t.powers <= 3937)
    assert exempt.sum() == 3
    worst = float(err[~exempt].max())
    ok = worst < 0.01
    assert acceptance_report(2, ok, f"s = {s} W, worst thrust/flow error {100 * worst:.2e}% "
                                    f"over {int((~exempt).sum())} modes (3850-3937 W cluster exempt)")


# ------------------------------------------------------------------ criterion 3

def test_criterion_3_smooth_min(acceptance_report):
    worst = {}
    for rho in (1.0, 10.0, 100.0):
        cfg = pw.PowerConfig(rho_p=rho)
        p_sa = np.linspace(0.0, 2 * (cfg.P_max + cfg.P_bus), 200_001)
        exact = cfg.eta_d * np.minimum(cfg.P_max, p_sa - cfg.P_bus)
        worst[rho] = float(np.abs(pw.available_power(cfg, p_sa) - exact).max() / (cfg.eta_d * rho))
    ok = max(worst.values()) <= 1.0
    detail = ", ".join(f"rho_p={k:g}: {v:.3f}" for k, v in worst.items())
    assert acceptance_report(3, ok, f"max |P_avail - eta_d min(.)| / (eta_d rho_p): {detail}")


# ------------------------------------------------------------------ criterion 4

def _boundary_error(run):
    s = run.solution
    x0, xf = s.states[0], s.states[-1]
    v0, vf = BODY.circular_speed(s.r0), BODY.circular_speed(s.rf)
    return max(abs(x0[0] - s.r0) / s.r0, abs(x0[1]), abs(x0[2]) / v0, abs(x0[3] - v0) / v0,
               abs(x0[4] - s.m_initial) / s.m_initial,
               abs(xf[0] - s.rf) / s.rf, abs(xf[2]) / vf, abs(xf[3] - vf) / vf)


def test_criterion_4_desk_transfer(runs, acceptance_report):
    r = runs.get("baseline", 16)
    s = r.solution
    div = r.propagation.max_radius_divergence / s.rf if r.propagation else np.inf
    bc = _boundary_error(r)
    power_excess = float(np.max(s.P_E - s.P_avail))
    checks = {
        "converged": r.converged,
        "violation": r.solve.max_violation < 1e-6,
        "divergence": div < 5e-3,
        "boundary": bc < 1e-3,
        "power": power_excess <= 1e-6 * r.config.scale_set().power_ref,
    }
    ok = all(checks.values())
    assert acceptance_report(
        4, ok, f"{r.solve.status}, violation {r.solve.max_violation:.2e}, radius divergence "
               f"{100 * div:.4f}% of rf, boundary {bc:.1e}, max(P_E - P_avail) {power_excess:.2e} W")


# ------------------------------------------------------------------ criterion 5

def test_criterion_5_coupled_dominance(runs, acceptance_report):
    b, c = runs.get("baseline", 16), runs.get("coupled", 16)
    ok = b.converged and c.converged and c.solution.t_f <= 1.001 * b.solution.t_f
    delta = sc.percent_change(b.solution.t_f, c.solution.t_f)
    assert acceptance_report(
        5, ok, f"baseline t_f {b.solution.t_f:.2f} s, coupled t_f {c.solution.t_f:.2f} s "
               f"({delta:+.2f}%), A_SA {c.solution.area:.2f} m^2")


# ------------------------------------------------------------------ criterion 6

@pytest.mark.slow
def test_criterion_6_grid_study(runs, acceptance_report):
    coarse, fine = runs.get("baseline", 10), runs.get("baseline", 40)
    d10 = coarse.propagation.max_radius_divergence
    d40 = fine.propagation.max_radius_divergence
    ok = coarse.converged and fine.converged and d10 > d40
    assert acceptance_report(
        6, ok, f"radius divergence 10 segments {d10:.4g} m ({coarse.solve.status}) vs "
               f"40 segments {d40:.4g} m ({fine.solve.status})")


# ------------------------------------------------------------------ criterion 7

@pytest.mark.slow
def test_criterion_7_mass_bookkeeping(runs, acceptance_report):
    keys = [("baseline", 16), ("coupled", 16), ("baseline", 10), ("baseline", 40)]
    residuals = {}
    for mode, n in keys:
        r = runs.get(mode, n)
        if r.converged:
            residuals[f"{mode}/{n}"] = r.audit.residual
    ok = len(residuals) > 0 and max(residuals.values()) < 1e-4
    detail = ", ".join(f"{k} {v:.1e} kg" for k, v in residuals.items())
    assert acceptance_report(7, ok, f"|m(0) - m(t_f) - quadrature| on converged runs: {detail}")


# ------------------------------------------------------------------ criterion 8

@pytest.mark.slow
def test_criterion_8_full_scale_attempt(tmp_path, acceptance_report):
    full = os.environ.get("PSYCHE_MDO_FULL_SCALE") == "1"
    budget = {} if full else {"solver.max_iterations": 2, "solver.max_inner_iterations": 40}
    results = {}
    for mode in sc.MODES:
        cfg = sc.load_config(preset="full", overrides={"mode": mode, **budget})
        run = sc.run_scenario(cfg, verify=False)
        results[mode] = run.summary()
    (tmp_path / "full_scale.json").write_text(json.dumps(results, indent=2, default=float))
    b, c = results["baseline"], results["coupled"]
    both = b["status"] == "converged" and c["status"] == "converged"
    gate = (c["t_f"] < b["t_f"] and c["A_SA"] > 50.0) if both else True
    # the run must be attempted and recorded; the gate only binds when both converge
    assert all(np.isfinite(v["t_f"]) for v in results.values())
    note = "gate applied" if both else "gate not triggered (not converged)"
    assert acceptance_report(
        8, gate, f"attempted ({'full' if full else 'short'} budget): baseline {b['status']} "
                 f"t_f {b['t_f']:.0f} s, coupled {c['status']} t_f {c['t_f']:.0f} s "
                 f"A_SA {c['A_SA']:.2f} m^2; {note}")


# ------------------------------------------------------------------ criterion 9

def test_criterion_9_mass_spot_values(acceptance_report):
    cfg = sizing.MassConfig()
    m50, m80 = sizing.initial_mass(cfg, 50.0), sizing.initial_mass(cfg, 79.79)
    ok = abs(m50 - 404.5) <= 1e-9 and abs(m80 - 464.08) <= 1e-9
    assert acceptance_report(9, ok, f"initial_mass(50) = {m50!r} kg, initial_mass(79.79) = {m80!r} kg")


def test_feasibility_never_regresses_on_accepted_iterates(runs):
    for mode in sc.MODES:
        run = runs.get(mode, 16)
        tol = run.config.solver.feasibility_tol
        hist = [h.max_violation for h in run.solve.history]
        assert all(b <= a or b <= tol for a, b in zip(hist, hist[1:]))

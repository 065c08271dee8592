import warnings

import numpy as np
import pytest

from psyche_mdo import fourier_guess as fg
from psyche_mdo import power as pw
from psyche_mdo import propulsion as prop
from psyche_mdo.dynamics import BodyParameters, ScaleSet, eom, scale_rate
from psyche_mdo.transcription import GridSpec

MU = BodyParameters().mu
CLUSTER = prop.EngineCluster()


def psyche_shape():
    t_f = fg.edelbaum_time(MU, 750e3, 200e3, 404.5, 0.087)
    return fg.fit_shape(750e3, 200e3, None, t_f, 10, MU)


def test_edelbaum_estimate():
    dv = fg.edelbaum_dv(MU, 750e3, 200e3)
    assert dv == pytest.approx(np.sqrt(MU / 200e3) - np.sqrt(MU / 750e3), rel=1e-15)
    assert fg.edelbaum_time(MU, 750e3, 200e3, 400.0, 0.1) == pytest.approx(dv * 4000.0)


def test_boundary_conditions_exact():
    shape = psyche_shape()
    assert np.abs(shape.boundary_residuals()).max() < 1e-9


def test_descending_radius_nearly_monotone():
    shape = psyche_shape()
    r = shape.radius(np.linspace(0, 1, 2001))
    rise = np.maximum.accumulate(r[::-1])[::-1] - r  # how far r later climbs above itself
    assert np.all(np.diff(r) <= 0.01 * 750e3)
    assert rise.max() <= 0.01 * (750e3 - 200e3)


def test_circular_shape_needs_no_thrust():
    r0 = 400e3
    t_f = 5e5
    shape = fg.fit_shape(r0, r0, fg.suggest_revs(MU, r0, r0, t_f), t_f, 10, MU)
    dense = fg.inverse_controls(shape, (400.0, 0.0), 301)
    np.testing.assert_allclose(dense.states[:, 0], r0, rtol=1e-9)
    assert dense.thrust.max() < 1e-9 * 400.0 * MU / r0**2


def test_inverse_dynamics_consistency():
    shape = psyche_shape()
    m0, mdot = 404.5, 6.1e-6
    dense = fg.inverse_controls(shape, (m0, mdot), 401)
    tf = shape.t_f
    tau = dense.tau
    rates = np.column_stack([
        shape.radius(tau, 1) / tf,
        shape.angle(tau, 1) / tf,
        shape.radius(tau, 2) / tf**2,
        (shape.radius(tau, 1) * shape.angle(tau, 1) + shape.radius(tau) * shape.angle(tau, 2)) / tf**2,
        np.full(tau.size, -mdot),
    ])
    u = np.column_stack([dense.thrust, dense.alpha, np.full(tau.size, mdot)])
    scales = ScaleSet.canonical(750e3, MU, m0)
    resid = scale_rate(eom(dense.states, u, BodyParameters(MU)) - rates, scales)
    assert np.abs(resid).max() < 1e-8


def test_steering_is_retrograde_for_descent():
    dense = fg.inverse_controls(psyche_shape(), (404.5, 6.1e-6), 401)
    assert np.mean(np.cos(dense.alpha) < 0) >= 0.95


def test_thrust_limit_warning():
    with pytest.warns(RuntimeWarning, match="above the available"):
        fg.inverse_controls(psyche_shape(), (404.5, 6.1e-6), 101, max_thrust=1e-6)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fg.inverse_controls(psyche_shape(), (404.5, 6.1e-6), 101, max_thrust=10.0)


def test_resample_reproduces_knots_and_boundaries():
    shape = psyche_shape()
    dense = fg.inverse_controls(shape, (404.5, 6.1e-6), 401)
    cfg = pw.PowerConfig()
    # a one-segment order-3 grid has nodes at tau = 0 and 1, both dense samples
    nodes = fg.resample_to_grid(dense, np.array([0.0, 0.25, 0.5, 1.0]), CLUSTER, cfg, 50.0)
    np.testing.assert_allclose(nodes.states[0], dense.states[0], rtol=1e-14)
    np.testing.assert_allclose(nodes.states[2], dense.states[200], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(nodes.states[-1], dense.states[-1], rtol=1e-12, atol=1e-12)
    scales = ScaleSet.canonical(750e3, MU, 404.5)
    vc = np.sqrt(MU / np.array([750e3, 200e3]))
    ends = nodes.states[[0, -1]] / scales.state_ref
    target = np.array([[750e3, 0, 0, vc[0]], [200e3, 0, 0, vc[1]]]) / scales.state_ref[:4]
    assert np.abs(ends[:, [0, 2, 3]] - target[:, [0, 2, 3]]).max() < 1e-9
    assert np.all((nodes.P_E >= 1514) & (nodes.P_E <= 4989))


def test_resample_on_transcription_grid():
    shape = psyche_shape()
    dense = fg.inverse_controls(shape, (404.5, 6.1e-6), 401)
    grid = GridSpec(8, 3)
    cfg = pw.PowerConfig()
    nodes = fg.resample_to_grid(dense, grid.node_tau(), CLUSTER, cfg, 50.0)
    assert nodes.states.shape == (grid.n_nodes, 5)
    cap = pw.available_power(cfg, pw.solar_array_power(cfg, grid.node_tau() * dense.t_f, 50.0))
    assert np.all(nodes.P_E <= np.maximum(cap, 1514) + 1e-9)
    with pytest.raises(ValueError):
        fg.resample_to_grid(dense, np.array([0.0, 1.5]), CLUSTER, cfg, 50.0)


def test_deterministic():
    a, b = psyche_shape(), psyche_shape()
    np.testing.assert_array_equal(a.coef_r, b.coef_r)
    np.testing.assert_array_equal(a.coef_theta, b.coef_theta)


def test_singular_boundary_system():
    C = np.ones((4, 6))
    with pytest.raises(fg.FitError, match="singular"):
        fg._constrained_lstsq(C, np.zeros(4), np.eye(6), np.zeros(6), "radius")


@pytest.mark.parametrize("kwargs", [dict(r0=-1.0), dict(n_terms=2), dict(t_f_guess=0.0), dict(revs=-1.0)])
def test_argument_validation(kwargs):
    args = dict(r0=750e3, rf=200e3, revs=3.0, t_f_guess=1e5)
    args.update(kwargs)
    with pytest.raises(ValueError):
        fg.fit_shape(**args)

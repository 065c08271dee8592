"""Legendre-Gauss-Radau direct collocation of the time-optimal transfer.

Decision vector layout (all entries scaled)::

    [ states (N, 5) row-major | controls (N, 2) row-major | t_f | A_SA ]

with ``N = n_segments * order + 1`` nodes. Each segment carries ``order``
LGR collocation points plus its right end point, which is shared with the
first point of the next segment, so state and control values are continuous
by construction. Controls are ``(P_E, alpha)``.

Constraint vector layout::

    [ defects (n_col, 5) | boundary (7) | alpha-rate continuity (n_seg - 1)
      | P_E - P_avail <= 0 (N) | m_dry - m <= 0 (N) ]

The first three blocks are equalities, the last two inequalities.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from numpy.polynomial import legendre
from scipy import sparse

from . import power as pw
from . import propulsion as prop
from . import sizing
from .dynamics import BodyParameters, DomainError, ScaleSet, eom, eom_partials

if TYPE_CHECKING:
    from .scenario import ScenarioConfig

N_STATE = 5
N_CTRL = 2
N_BOUNDARY = 7

# structural dependence of the state rates on (r, theta, v_r, v_theta, m)
_DX_MASK = np.array([
    [0, 0, 1, 0, 0],
    [1, 0, 0, 1, 0],
    [1, 0, 0, 1, 1],
    [1, 0, 1, 1, 1],
    [0, 0, 0, 0, 0],
], dtype=bool)
# ... and on (P_E, alpha)
_DU_MASK = np.array([
    [0, 0],
    [0, 0],
    [1, 1],
    [1, 1],
    [1, 0],
], dtype=bool)


def lgr_points(order: int) -> np.ndarray:
    """LGR points on [-1, 1): roots of P_{n-1} + P_n, including -1."""
    if order < 1:
        raise ValueError("order must be >= 1")
    c = np.zeros(order + 1)
    c[order - 1] = 1.0
    c[order] = 1.0
    pts = np.sort(np.real(legendre.legroots(c)))
    pts[0] = -1.0
    return pts


def lgr_weights(order: int) -> np.ndarray:
    x = lgr_points(order)
    p = legendre.legval(x, np.eye(order)[order - 1])
    w = (1.0 - x) / (order**2 * p**2)
    w[0] = 2.0 / order**2
    return w


def barycentric_weights(z: np.ndarray) -> np.ndarray:
    diff = z[:, None] - z[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / diff.prod(axis=1)


def differentiation_matrix(z: np.ndarray) -> np.ndarray:
    """D[i, j] = l_j'(z_i) for the Lagrange basis on nodes ``z``."""
    w = barycentric_weights(z)
    diff = z[:, None] - z[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def lagrange_basis(z: np.ndarray, x) -> np.ndarray:
    """Matrix L[k, j] = l_j(x_k) for Lagrange basis on nodes ``z``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = barycentric_weights(z)
    diff = x[:, None] - z[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-15, rtol=0.0)
    diff[exact] = 1.0
    terms = w[None, :] / diff
    L = terms / terms.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    L[hit] = exact[hit].astype(float)
    return L


@dataclass(frozen=True)
class GridSpec:
    n_segments: int = 50
    order: int = 3
    widths: tuple[float, ...] | None = None

    def __post_init__(self):
        if int(self.n_segments) != self.n_segments or self.n_segments < 1:
            raise ValueError("grid.n_segments must be an integer >= 1")
        if int(self.order) != self.order or self.order < 2:
            raise ValueError("grid.order must be an integer >= 2")
        if self.widths is not None:
            w = np.asarray(self.widths, dtype=float)
            if w.shape != (self.n_segments,) or np.any(w <= 0):
                raise ValueError("grid.widths must hold n_segments positive entries")

    @property
    def n_collocation(self) -> int:
        return self.n_segments * self.order

    @property
    def n_nodes(self) -> int:
        return self.n_collocation + 1

    def segment_bounds(self) -> np.ndarray:
        if self.widths is None:
            return np.linspace(0.0, 1.0, self.n_segments + 1)
        w = np.asarray(self.widths, dtype=float)
        return np.concatenate([[0.0], np.cumsum(w / w.sum())])

    def node_tau(self) -> np.ndarray:
        """Normalised node times in [0, 1], length ``n_nodes``."""
        xi = np.append(lgr_points(self.order), 1.0)
        b = self.segment_bounds()
        tau = b[:-1, None] + 0.5 * (xi[None, :-1] + 1.0) * np.diff(b)[:, None]
        return np.append(tau.ravel(), 1.0)

    def segment_of_node(self) -> np.ndarray:
        seg = np.repeat(np.arange(self.n_segments), self.order)
        return np.append(seg, self.n_segments - 1)


@dataclass(frozen=True)
class Bounds:
    v_r_max: float = 10.0
    alpha_min: float = 0.5 * np.pi
    alpha_max: float = 1.5 * np.pi
    P_E_min: float | None = None
    P_E_max: float | None = None
    area_min: float = 5.0
    area_max: float = 200.0
    tf_factor_min: float = 0.1
    tf_factor_max: float = 10.0
    r_min: float = 1.0

    def __post_init__(self):
        if not self.v_r_max > 0:
            raise ValueError("bounds.v_r_max must be positive")
        if not self.alpha_min < self.alpha_max:
            raise ValueError("bounds.alpha_min must be below bounds.alpha_max")
        if not 0 < self.area_min <= self.area_max:
            raise ValueError("bounds.area_min/area_max must satisfy 0 < min <= max")
        if not 0 < self.tf_factor_min < 1 < self.tf_factor_max:
            raise ValueError("bounds.tf_factor_min < 1 < bounds.tf_factor_max required")
        if not self.r_min > 0:
            raise ValueError("bounds.r_min must be positive")
        if self.P_E_min is not None and self.P_E_max is not None and self.P_E_min >= self.P_E_max:
            raise ValueError("bounds.P_E_min must be below bounds.P_E_max")


@dataclass
class NodeGuess:
    """Physical node values used to seed the problem."""

    states: np.ndarray  # (N, 5)
    P_E: np.ndarray  # (N,)
    alpha: np.ndarray  # (N,)
    t_f: float
    area: float


@dataclass
class DefectReport:
    segment_start: np.ndarray  # (n_seg,) [s]
    segment_norms: np.ndarray  # (n_seg,) 2-norm of all defects in the segment
    state_norms: np.ndarray  # (n_seg, 5) max-abs defect per state
    max_defect: float
    rms_defect: float
    violations: dict[str, float] = field(default_factory=dict)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["segment", "t_start", "defect_norm", "r", "theta", "v_r", "v_theta", "m"])
            for k in range(len(self.segment_norms)):
                w.writerow([k, repr(float(self.segment_start[k])), repr(float(self.segment_norms[k])),
                            *(repr(float(v)) for v in self.state_norms[k])])
        return path


class TranscribedProblem:
    """The collocated NLP. Immutable after construction; evaluation is pure in ``x``."""

    def __init__(self, grid: GridSpec, *, body: BodyParameters, power: pw.PowerConfig,
                 mass: sizing.MassConfig, cluster: prop.EngineCluster, r0: float, rf: float,
                 coupled: bool, scales: ScaleSet, bounds: Bounds, tf_guess: float,
                 fixed_area: float, fixed_initial_mass: float | None = None):
        self.grid = grid
        self.body = body
        self.power = power
        self.mass = mass
        self.cluster = cluster
        self.r0 = float(r0)
        self.rf = float(rf)
        self.coupled = bool(coupled)
        self.scales = scales
        self.bounds = bounds
        self.tf_guess = float(tf_guess)
        self.fixed_area = float(fixed_area)
        self.fixed_initial_mass = (sizing.initial_mass(mass, fixed_area)
                                   if fixed_initial_mass is None else float(fixed_initial_mass))

        n, order = grid.n_segments, grid.order
        self.n_nodes = grid.n_nodes
        self.n_col = grid.n_collocation
        self.tau = grid.node_tau()
        self.seg_bounds = grid.segment_bounds()
        self.widths = np.diff(self.seg_bounds)
        xi = np.append(lgr_points(order), 1.0)
        self.xi = xi
        self.D = differentiation_matrix(xi)
        # global node index of every (segment, local node) pair
        self.seg_nodes = np.arange(n)[:, None] * order + np.arange(order + 1)[None, :]
        self.col_nodes = self.seg_nodes[:, :-1].ravel()
        self.col_seg = np.repeat(np.arange(n), order)

        N = self.n_nodes
        self.i_state = 0
        self.i_ctrl = N_STATE * N
        self.i_tf = self.i_ctrl + N_CTRL * N
        self.i_area = self.i_tf + 1
        self.n_x = self.i_area + 1

        self.n_defect = N_STATE * self.n_col
        self.n_rate = n - 1
        self.n_eq = self.n_defect + N_BOUNDARY + self.n_rate
        self.n_ineq = 2 * N
        self.n_con = self.n_eq + self.n_ineq

        self.mu_s = body.scaled(scales).mu
        self._build_pattern()

    # ------------------------------------------------------------------ layout
    def sidx(self, node, state):
        return self.i_state + np.asarray(node) * N_STATE + state

    def cidx(self, node, ctrl):
        return self.i_ctrl + np.asarray(node) * N_CTRL + ctrl

    @property
    def constraint_tally(self) -> dict[str, int]:
        """Boundary and path constraint counts, with variable bounds counted as constraints."""
        N = self.n_nodes
        return {"boundary": N_BOUNDARY, "power_path": N, "mass_path": N,
                "v_r_bounds": N, "alpha_bounds": N, "total": 4 * N + N_BOUNDARY}

    def variable_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        s, b, N = self.scales, self.bounds, self.n_nodes
        lb = np.full(self.n_x, -np.inf)
        ub = np.full(self.n_x, np.inf)
        nodes = np.arange(N)
        lb[self.sidx(nodes, 0)] = b.r_min / s.length_ref
        lb[self.sidx(nodes, 2)] = -b.v_r_max / s.velocity_ref
        ub[self.sidx(nodes, 2)] = b.v_r_max / s.velocity_ref
        lb[self.sidx(nodes, 4)] = 1e-3 * self.mass.m_bus / s.mass_ref
        lb[self.sidx(0, 1)] = ub[self.sidx(0, 1)] = 0.0
        p_lo, p_hi = self.cluster.table.power_bounds
        p_lo = p_lo if b.P_E_min is None else b.P_E_min
        p_hi = p_hi if b.P_E_max is None else b.P_E_max
        lb[self.cidx(nodes, 0)] = p_lo / s.power_ref
        ub[self.cidx(nodes, 0)] = p_hi / s.power_ref
        lb[self.cidx(nodes, 1)] = b.alpha_min
        ub[self.cidx(nodes, 1)] = b.alpha_max
        lb[self.i_tf] = b.tf_factor_min * self.tf_guess / s.time_ref
        ub[self.i_tf] = b.tf_factor_max * self.tf_guess / s.time_ref
        if self.coupled:
            lb[self.i_area] = b.area_min / s.area_ref
            ub[self.i_area] = b.area_max / s.area_ref
        else:
            lb[self.i_area] = ub[self.i_area] = self.fixed_area / s.area_ref
        return lb, ub

    def constraint_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.zeros(self.n_con)
        hi = np.zeros(self.n_con)
        lo[self.n_eq:] = -np.inf
        return lo, hi

    def pack(self, guess: NodeGuess) -> np.ndarray:
        s = self.scales
        states = np.asarray(guess.states, dtype=float)
        if states.shape != (self.n_nodes, N_STATE):
            raise ValueError(f"guess states have shape {states.shape}, expected {(self.n_nodes, N_STATE)}")
        if np.shape(guess.P_E) != (self.n_nodes,) or np.shape(guess.alpha) != (self.n_nodes,):
            raise ValueError("guess controls must have one entry per node")
        x = np.empty(self.n_x)
        x[:self.i_ctrl] = (states / s.state_ref).ravel()
        ctrl = np.column_stack([np.asarray(guess.P_E) / s.power_ref, guess.alpha])
        x[self.i_ctrl:self.i_tf] = ctrl.ravel()
        x[self.i_tf] = guess.t_f / s.time_ref
        x[self.i_area] = (guess.area if self.coupled else self.fixed_area) / s.area_ref
        return x

    def unpack(self, x) -> dict[str, np.ndarray | float]:
        """Physical node values from a decision vector."""
        s = self.scales
        x = np.asarray(x, dtype=float)
        states = x[:self.i_ctrl].reshape(self.n_nodes, N_STATE) * s.state_ref
        ctrl = x[self.i_ctrl:self.i_tf].reshape(self.n_nodes, N_CTRL)
        t_f = x[self.i_tf] * s.time_ref
        return {
            "t": self.tau * t_f,
            "states": states,
            "P_E": ctrl[:, 0] * s.power_ref,
            "alpha": ctrl[:, 1].copy(),
            "t_f": float(t_f),
            "area": self.area_of(x),
        }

    def area_of(self, x) -> float:
        if self.coupled:
            return float(x[self.i_area] * self.scales.area_ref)
        return self.fixed_area

    def initial_mass_of(self, x) -> float:
        if self.coupled:
            return float(sizing.initial_mass(self.mass, self.area_of(x)))
        return self.fixed_initial_mass

    def dry_mass_of(self, x) -> float:
        return float(sizing.dry_mass(self.mass, self.area_of(x)))

    # ------------------------------------------------------------ node models
    def _node_models(self, x):
        """Scaled states/controls plus thrust, flow and power at every node."""
        s = self.scales
        X = x[:self.i_ctrl].reshape(self.n_nodes, N_STATE)
        U = x[self.i_ctrl:self.i_tf].reshape(self.n_nodes, N_CTRL)
        P = U[:, 0] * s.power_ref
        T, mdot, dT, dq = prop.propulsion_partials(self.cluster, P)
        return X, U, T, mdot, dT, dq

    def _scaled_controls(self, U, T, mdot):
        s = self.scales
        return np.column_stack([T / s.force_ref, U[:, 1], mdot / s.mdot_ref])

    def _power_terms(self, x):
        s = self.scales
        t = self.tau * x[self.i_tf] * s.time_ref
        t = np.maximum(t, 0.0)
        return pw.power_partials(self.power, t, self.area_of(x))

    # ---------------------------------------------------------- evaluations
    def objective(self, x) -> float:
        return float(x[self.i_tf])

    def gradient(self, x) -> np.ndarray:
        g = np.zeros(self.n_x)
        g[self.i_tf] = 1.0
        return g

    def constraints(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = self.scales
        X, U, T, mdot, _, _ = self._node_models(x)
        try:
            F = eom(X[self.col_nodes], self._scaled_controls(U, T, mdot)[self.col_nodes],
                    BodyParameters(self.mu_s))
        except DomainError:
            return np.full(self.n_con, np.nan)
        tf = x[self.i_tf]
        out = np.empty(self.n_con)

        Xs = X[self.seg_nodes]  # (n_seg, order+1, 5)
        dX = np.einsum("ij,kjs->kis", self.D[:-1], Xs)  # (n_seg, order, 5)
        h = 0.5 * self.widths * tf
        defects = dX - h[:, None, None] * F.reshape(self.grid.n_segments, self.grid.order, N_STATE)
        out[:self.n_defect] = defects.ravel()

        b = out[self.n_defect:self.n_defect + N_BOUNDARY]
        vref = s.velocity_ref
        b[0] = X[0, 0] - self.r0 / s.length_ref
        b[1] = X[0, 2]
        b[2] = X[0, 3] - self.body.circular_speed(self.r0) / vref
        b[3] = X[0, 4] - self.initial_mass_of(x) / s.mass_ref
        b[4] = X[-1, 0] - self.rf / s.length_ref
        b[5] = X[-1, 2]
        b[6] = X[-1, 3] - self.body.circular_speed(self.rf) / vref

        i0 = self.n_defect + N_BOUNDARY
        if self.n_rate:
            A = U[:, 1][self.seg_nodes]
            out[i0:i0 + self.n_rate] = self._rate_rows @ np.concatenate([A[:-1].ravel(), A[1:].ravel()])
        i0 += self.n_rate

        p_av, _, _ = self._power_terms(x)
        N = self.n_nodes
        out[i0:i0 + N] = U[:, 0] - p_av / s.power_ref
        out[i0 + N:] = self.dry_mass_of(x) / s.mass_ref - X[:, 4]
        return out

    @cached_property
    def _rate_rows(self) -> np.ndarray:
        """Linear map from stacked (left, right) segment alphas to rate jumps."""
        n, k = self.grid.n_segments, self.grid.order + 1
        d_end = self.D[-1]
        d_start = self.D[0]
        scale = self.widths.mean()
        M = np.zeros((n - 1, 2 * (n - 1) * k))
        for j in range(n - 1):
            M[j, j * k:(j + 1) * k] = scale * 2.0 / self.widths[j] * d_end
            off = (n - 1) * k + j * k
            M[j, off:off + k] = -scale * 2.0 / self.widths[j + 1] * d_start
        return M

    def _build_pattern(self):
        """Fixed COO pattern; duplicates (shared nodes) are summed on assembly."""
        rows, cols = [], []
        order = self.grid.order
        self._blocks = {}

        def add(name, r, c):
            r = np.asarray(r).ravel()
            c = np.asarray(c).ravel()
            r, c = np.broadcast_arrays(r, c)
            self._blocks[name] = slice(sum(len(a) for a in rows), sum(len(a) for a in rows) + len(r))
            rows.append(r.copy())
            cols.append(c.copy())

        # defects: d/dX via D  -> (n_col, 5, order+1)
        drow = np.arange(self.n_defect).reshape(self.n_col, N_STATE)
        seg_nodes_col = self.seg_nodes[self.col_seg]  # (n_col, order+1)
        add("D", np.broadcast_to(drow[:, :, None], (self.n_col, N_STATE, order + 1)),
            self.sidx(seg_nodes_col[:, None, :], np.arange(N_STATE)[None, :, None]))
        si, sj = np.nonzero(_DX_MASK)
        add("fx", drow[:, si], self.sidx(self.col_nodes[:, None], sj[None, :]))
        ui, uj = np.nonzero(_DU_MASK)
        add("fu", drow[:, ui], self.cidx(self.col_nodes[:, None], uj[None, :]))
        add("ftf", drow, np.full(drow.shape, self.i_tf))

        r0 = self.n_defect
        add("bc", r0 + np.arange(N_BOUNDARY),
            self.sidx(np.array([0, 0, 0, 0, -1, -1, -1]) % self.n_nodes, np.array([0, 2, 3, 4, 0, 2, 3])))
        if self.coupled:
            add("bc_area", [r0 + 3], [self.i_area])

        r0 += N_BOUNDARY
        if self.n_rate:
            n, k = self.grid.n_segments, order + 1
            left = self.seg_nodes[:-1]
            right = self.seg_nodes[1:]
            rr = np.repeat(r0 + np.arange(n - 1), k)
            add("rate_l", rr, self.cidx(left.ravel(), 1))
            add("rate_r", rr, self.cidx(right.ravel(), 1))
        r0 += self.n_rate

        N = self.n_nodes
        nodes = np.arange(N)
        add("pw_p", r0 + nodes, self.cidx(nodes, 0))
        add("pw_tf", r0 + nodes, np.full(N, self.i_tf))
        if self.coupled:
            add("pw_area", r0 + nodes, np.full(N, self.i_area))
        r0 += N
        add("ms_m", r0 + nodes, self.sidx(nodes, 4))
        if self.coupled:
            add("ms_area", r0 + nodes, np.full(N, self.i_area))

        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)

    def sparsity(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique (row, col) structural nonzeros of the constraint Jacobian."""
        m = sparse.coo_matrix((np.ones(len(self._rows)), (self._rows, self._cols)),
                              shape=(self.n_con, self.n_x)).tocsr()
        m.sum_duplicates()
        coo = m.tocoo()
        return coo.row, coo.col

    def jacobian(self, x) -> sparse.csr_matrix:
        x = np.asarray(x, dtype=float)
        s = self.scales
        X, U, T, mdot, dT, dq = self._node_models(x)
        Uc = self._scaled_controls(U, T, mdot)
        body = BodyParameters(self.mu_s)
        Xc, Ucc = X[self.col_nodes], Uc[self.col_nodes]
        F = eom(Xc, Ucc, body)
        Jx, Ju = eom_partials(Xc, Ucc, body)
        tf = x[self.i_tf]
        h = (0.5 * self.widths * tf)[self.col_seg]  # (n_col,)

        vals = np.empty(len(self._rows))
        order = self.grid.order
        Dc = self.D[:-1][np.tile(np.arange(order), self.grid.n_segments)]  # (n_col, order+1)
        vals[self._blocks["D"]] = np.broadcast_to(Dc[:, None, :], (self.n_col, N_STATE, order + 1)).ravel()
        si, sj = np.nonzero(_DX_MASK)
        vals[self._blocks["fx"]] = (-h[:, None] * Jx[:, si, sj]).ravel()
        # chain through thrust/flow for P_E, direct for alpha
        dTs = (dT * s.power_ref / s.force_ref)[self.col_nodes]
        dqs = (dq * s.power_ref / s.mdot_ref)[self.col_nodes]
        dP = Ju[:, :, 0] * dTs[:, None] + Ju[:, :, 2] * dqs[:, None]
        dU = np.stack([dP, Ju[:, :, 1]], axis=-1)  # (n_col, 5, 2)
        ui, uj = np.nonzero(_DU_MASK)
        vals[self._blocks["fu"]] = (-h[:, None] * dU[:, ui, uj]).ravel()
        vals[self._blocks["ftf"]] = (-(0.5 * self.widths[self.col_seg])[:, None] * F).ravel()

        vals[self._blocks["bc"]] = 1.0
        if self.coupled:
            vals[self._blocks["bc_area"]] = -sizing.mass_area_slope(self.mass) * s.area_ref / s.mass_ref

        if self.n_rate:
            n, k = self.grid.n_segments, order + 1
            half = (n - 1) * k
            vals[self._blocks["rate_l"]] = self._rate_rows[np.repeat(np.arange(n - 1), k),
                                                           np.arange(half)]
            vals[self._blocks["rate_r"]] = self._rate_rows[np.repeat(np.arange(n - 1), k),
                                                           half + np.arange(half)]

        _, dpa_da, dpa_dt = self._power_terms(x)
        vals[self._blocks["pw_p"]] = 1.0
        vals[self._blocks["pw_tf"]] = -dpa_dt * self.tau * s.time_ref / s.power_ref
        if self.coupled:
            vals[self._blocks["pw_area"]] = -dpa_da * s.area_ref / s.power_ref
        vals[self._blocks["ms_m"]] = -1.0
        if self.coupled:
            vals[self._blocks["ms_area"]] = sizing.mass_area_slope(self.mass) * s.area_ref / s.mass_ref

        J = sparse.coo_matrix((vals, (self._rows, self._cols)), shape=(self.n_con, self.n_x))
        return J.tocsr()

    # ------------------------------------------------------------ diagnostics
    def max_violation(self, x) -> float:
        c = self.constraints(x)
        if not np.all(np.isfinite(c)):
            return np.inf
        eq = np.abs(c[:self.n_eq]).max(initial=0.0)
        ineq = np.maximum(c[self.n_eq:], 0.0).max(initial=0.0)
        lb, ub = self.variable_bounds()
        box = max(np.maximum(lb - x, 0).max(initial=0.0), np.maximum(x - ub, 0).max(initial=0.0))
        return float(max(eq, ineq, box))

    def defect_report(self, x) -> DefectReport:
        c = self.constraints(x)
        d = c[:self.n_defect].reshape(self.grid.n_segments, self.grid.order, N_STATE)
        t_f = x[self.i_tf] * self.scales.time_ref
        state_norms = np.abs(d).max(axis=1)
        seg_norms = np.sqrt((d**2).sum(axis=(1, 2)))
        N = self.n_nodes
        i0 = self.n_defect
        viol = {
            "boundary": float(np.abs(c[i0:i0 + N_BOUNDARY]).max()),
            "alpha_rate": float(np.abs(c[i0 + N_BOUNDARY:self.n_eq]).max(initial=0.0)),
            "power_path": float(np.maximum(c[self.n_eq:self.n_eq + N], 0).max()),
            "mass_path": float(np.maximum(c[self.n_eq + N:], 0).max()),
        }
        return DefectReport(
            segment_start=self.seg_bounds[:-1] * t_f,
            segment_norms=seg_norms,
            state_norms=state_norms,
            max_defect=float(np.abs(d).max()),
            rms_defect=float(np.sqrt(np.mean(d**2))),
            violations=viol,
        )


def build(grid: GridSpec, cfg: "ScenarioConfig", guess: NodeGuess) -> TranscribedProblem:
    """Transcribe the scenario on ``grid``; the packed guess is stored as ``problem.x0``."""
    problem = TranscribedProblem(
        grid,
        body=cfg.body,
        power=cfg.power,
        mass=cfg.mass,
        cluster=cfg.cluster,
        r0=cfg.orbits.r0,
        rf=cfg.orbits.rf,
        coupled=cfg.mode == "coupled",
        scales=cfg.scale_set(),
        bounds=cfg.bounds,
        tf_guess=guess.t_f,
        fixed_area=cfg.power.A_SA,
        fixed_initial_mass=cfg.baseline_initial_mass(),
    )
    x0 = problem.pack(guess)
    lb, ub = problem.variable_bounds()
    problem.x0 = np.clip(x0, lb, ub)
    return problem


@dataclass
class Solution:
    """Node values of a solved (or attempted) transcription in physical units."""

    status: str
    mode: str
    grid: GridSpec
    t: np.ndarray
    states: np.ndarray
    P_E: np.ndarray
    alpha: np.ndarray
    t_f: float
    area: float
    m_initial: float
    m_dry: float
    r0: float
    rf: float
    body: BodyParameters
    cluster: prop.EngineCluster
    power: pw.PowerConfig
    max_violation: float
    defects: DefectReport | None = None
    x: np.ndarray | None = None

    @classmethod
    def from_problem(cls, problem: TranscribedProblem, x, status: str = "unsolved") -> "Solution":
        v = problem.unpack(x)
        return cls(
            status=status,
            mode="coupled" if problem.coupled else "baseline",
            grid=problem.grid,
            t=v["t"], states=v["states"], P_E=v["P_E"], alpha=v["alpha"],
            t_f=v["t_f"], area=v["area"],
            m_initial=problem.initial_mass_of(x), m_dry=problem.dry_mass_of(x),
            r0=problem.r0, rf=problem.rf, body=problem.body, cluster=problem.cluster,
            power=problem.power, max_violation=problem.max_violation(x),
            defects=problem.defect_report(x), x=np.asarray(x, dtype=float).copy(),
        )

    @property
    def n_nodes(self) -> int:
        return len(self.t)

    @property
    def thrust(self) -> np.ndarray:
        return prop.thrust_and_mdot(self.cluster, self.P_E)[0]

    @property
    def mdot(self) -> np.ndarray:
        return prop.thrust_and_mdot(self.cluster, self.P_E)[1]

    @property
    def P_SA(self) -> np.ndarray:
        return pw.solar_array_power(self.power, self.t, self.area)

    @property
    def P_avail(self) -> np.ndarray:
        return pw.available_power(self.power, self.P_SA)

    @property
    def final_mass(self) -> float:
        return float(self.states[-1, 4])

    @property
    def propellant_used(self) -> float:
        return float(self.states[0, 4] - self.states[-1, 4])

    def control_interpolant(self):
        """Per-segment Lagrange interpolant of (P_E, alpha) on the node polynomials."""
        return SegmentInterpolant(self.grid, self.t_f, np.column_stack([self.P_E, self.alpha]))


class SegmentInterpolant:
    """Evaluates node data with the segment-wise polynomials of the transcription."""

    def __init__(self, grid: GridSpec, t_f: float, values: np.ndarray):
        self.grid = grid
        self.t_f = float(t_f)
        self.bounds = grid.segment_bounds() * t_f
        xi = np.append(lgr_points(grid.order), 1.0)
        vals = np.asarray(values, dtype=float)
        seg_nodes = np.arange(grid.n_segments)[:, None] * grid.order + np.arange(grid.order + 1)
        # monomial coefficients in the local coordinate xi, one set per segment
        V = np.vander(xi, grid.order + 1)
        self.coefs = np.linalg.solve(V, vals[seg_nodes].transpose(1, 0, 2).reshape(grid.order + 1, -1))
        self.coefs = self.coefs.reshape(grid.order + 1, grid.n_segments, -1)

    def segment(self, t) -> int:
        k = int(np.searchsorted(self.bounds, t, side="right") - 1)
        return min(max(k, 0), self.grid.n_segments - 1)

    def eval_segment(self, k: int, t):
        a, b = self.bounds[k], self.bounds[k + 1]
        xi = 2.0 * (np.asarray(t, dtype=float) - a) / (b - a) - 1.0
        c = self.coefs[:, k, :]
        out = np.zeros(np.shape(xi) + (c.shape[1],))
        for row in c:
            out = out * np.asarray(xi)[..., None] + row
        return out

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size, self.coefs.shape[2]))
        for i, ti in enumerate(t):
            out[i] = self.eval_segment(self.segment(ti), ti)
        return out

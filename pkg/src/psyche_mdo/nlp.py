"""Sparse NLP solving: a built-in augmented Lagrangian solver and external adapters.

Any object exposing the callback contract below can be solved:

    n_x, n_eq, n_ineq, variable_bounds(), objective(x), gradient(x),
    constraints(x) -> [equalities (n_eq) | inequalities <= 0 (n_ineq)],
    jacobian(x) -> scipy.sparse matrix, sparsity() -> (rows, cols)
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.optimize import minimize
from scipy.sparse.linalg import lsqr

log = logging.getLogger(__name__)

STATUSES = ("converged", "max-iter", "infeasible", "numerical-failure")
METHODS = ("auglag", "slsqp", "trust-constr", "ipopt")


class SolverUnavailable(RuntimeError):
    """The requested external engine is not installed or not known."""


@dataclass(frozen=True)
class SolverOptions:
    method: str = "auglag"
    max_iterations: int = 60
    max_inner_iterations: int = 4000
    feasibility_tol: float = 1e-6
    optimality_tol: float = 1e-5
    initial_penalty: float = 1e4
    penalty_growth: float = 10.0
    max_penalty: float = 1e12
    lbfgs_memory: int = 30
    verbosity: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"solver.method must be one of {METHODS}, got {self.method!r}")
        if self.max_iterations < 1 or self.max_inner_iterations < 1:
            raise ValueError("solver iteration limits must be >= 1")
        if not (self.feasibility_tol > 0 and self.optimality_tol > 0):
            raise ValueError("solver tolerances must be positive")
        if not (self.initial_penalty > 0 and self.penalty_growth > 1):
            raise ValueError("solver.initial_penalty > 0 and solver.penalty_growth > 1 required")


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    max_violation: float
    step_norm: float
    penalty: float
    inner_iterations: int
    n_evals: int
    stationarity: float


@dataclass
class SolveResult:
    status: str
    x: np.ndarray
    objective: float
    max_violation: float
    iterations: int
    wall_time: float
    history: list[IterationRecord] = field(default_factory=list)
    multipliers: np.ndarray | None = None
    n_evals: int = 0
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def write_log(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective", "max_violation", "step_norm", "penalty",
                        "inner_iterations", "n_evals", "stationarity"])
            for h in self.history:
                w.writerow([h.iteration, repr(h.objective), repr(h.max_violation), repr(h.step_norm),
                            repr(h.penalty), h.inner_iterations, h.n_evals, repr(h.stationarity)])
        return path


class NLProblem:
    """Callback bundle for small hand-written problems (tests, toys).

    ``jac`` returns a dense or sparse matrix; ``pattern`` optionally declares
    the structural nonzeros, otherwise they are taken from ``jac(x_probe)``.
    """

    def __init__(self, n_x, fun, grad, cons=None, jac=None, n_eq=0, n_ineq=0,
                 lb=None, ub=None, pattern=None, x_probe=None):
        self.n_x = int(n_x)
        self.n_eq = int(n_eq)
        self.n_ineq = int(n_ineq)
        self.n_con = self.n_eq + self.n_ineq
        self._fun, self._grad = fun, grad
        self._cons = cons or (lambda x: np.zeros(0))
        self._jac = jac or (lambda x: np.zeros((0, self.n_x)))
        self._lb = np.full(self.n_x, -np.inf) if lb is None else np.asarray(lb, float)
        self._ub = np.full(self.n_x, np.inf) if ub is None else np.asarray(ub, float)
        self._pattern = pattern
        self._probe = np.linspace(0.3, 0.7, self.n_x) if x_probe is None else np.asarray(x_probe)

    def variable_bounds(self):
        return self._lb.copy(), self._ub.copy()

    def objective(self, x):
        return float(self._fun(x))

    def gradient(self, x):
        return np.asarray(self._grad(x), dtype=float)

    def constraints(self, x):
        return np.asarray(self._cons(x), dtype=float)

    def jacobian(self, x):
        return sparse.csr_matrix(self._jac(x), shape=(self.n_con, self.n_x))

    def sparsity(self):
        if self._pattern is not None:
            return tuple(np.asarray(a) for a in self._pattern)
        coo = sparse.coo_matrix(self.jacobian(self._probe))
        keep = coo.data != 0
        return coo.row[keep], coo.col[keep]


class _Counted:
    """Wraps a problem and counts callback invocations."""

    def __init__(self, problem):
        self.p = problem
        self.calls = {"objective": 0, "gradient": 0, "constraints": 0, "jacobian": 0}

    def __getattr__(self, name):
        attr = getattr(self.p, name)
        if name in self.calls:
            def wrapped(x, _attr=attr, _name=name):
                self.calls[_name] += 1
                return _attr(x)
            return wrapped
        return attr

    @property
    def n_evals(self) -> int:
        return self.calls["constraints"]


def _violation(c, n_eq):
    if c.size == 0:
        return 0.0
    if not np.all(np.isfinite(c)):
        return np.inf
    eq = np.abs(c[:n_eq]).max(initial=0.0)
    ineq = np.maximum(c[n_eq:], 0.0).max(initial=0.0)
    return float(max(eq, ineq))


def _projected_gradient(x, g, lb, ub):
    return float(np.abs(x - np.clip(x - g, lb, ub)).max(initial=0.0))


def solve(problem, x0, opts: SolverOptions | None = None) -> SolveResult:
    """Minimise ``problem`` from ``x0``; returns a status rather than raising on failure."""
    opts = opts or SolverOptions()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (problem.n_x,):
        raise ValueError(f"x0 has shape {x0.shape}, problem expects ({problem.n_x},)")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    if opts.method == "auglag":
        return _auglag(problem, x0, opts)
    return _external(problem, x0, opts)


class _LBFGS:
    """Compact limited-memory BFGS matrix with Powell damping."""

    def __init__(self, n: int, memory: int, sigma: float = 1e-2):
        self.n, self.memory, self.sigma = n, memory, sigma
        self.S: list[np.ndarray] = []
        self.Y: list[np.ndarray] = []

    def dense(self) -> np.ndarray:
        B = self.sigma * np.eye(self.n)
        if not self.S:
            return B
        S, Y = np.column_stack(self.S), np.column_stack(self.Y)
        SY = S.T @ Y
        L = np.tril(SY, -1)
        D = np.diag(np.diag(SY))
        W = np.hstack([self.sigma * S, Y])
        M = np.block([[self.sigma * S.T @ S, L], [L.T, -D]])
        return B - W @ np.linalg.solve(M, W.T)

    def update(self, s, y, Bs):
        sBs = float(s @ Bs)
        sy = float(s @ y)
        if sBs <= 0 or not np.isfinite(sy):
            return
        if sy < 0.2 * sBs:
            theta = 0.8 * sBs / (sBs - sy)
            y = theta * y + (1.0 - theta) * Bs
            sy = float(s @ y)
        if sy <= 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
            return
        self.S.append(s.copy())
        self.Y.append(y.copy())
        if len(self.S) > self.memory:
            self.S.pop(0)
            self.Y.pop(0)
        self.sigma = float(np.clip(y @ y / sy, 1e-8, 1e8))


def _auglag(problem, x0, opts: SolverOptions) -> SolveResult:
    start = time.perf_counter()
    P = _Counted(problem)
    lb, ub = P.variable_bounds()
    x = np.clip(x0, lb, ub)
    m = P.n_eq
    rho = opts.initial_penalty
    omega = 1.0 / rho
    eta = 1.0 / rho**0.1
    qn = _LBFGS(P.n_x, opts.lbfgs_memory)

    c = P.constraints(x)
    viol = _violation(c, m)
    if not np.isfinite(viol):
        return SolveResult("numerical-failure", x, np.nan, np.inf, 0, time.perf_counter() - start,
                           message="constraints are not finite at x0", n_evals=P.n_evals)
    lam, mu = _initial_multipliers(P, x, c, lb, ub)
    history = [IterationRecord(0, P.objective(x), viol, 0.0, rho, 0, P.n_evals, np.nan)]
    best_viol = viol
    status, message = "max-iter", "outer iteration limit reached"
    stat = np.inf

    for k in range(1, opts.max_iterations + 1):
        x_new, nit, ok = _inner(P, x, lam, mu, rho, omega, lb, ub, qn, opts.max_inner_iterations)
        if not ok:
            status, message = "numerical-failure", "non-finite values during inner solve"
            break
        c = P.constraints(x_new)
        v_new = _violation(c, m)
        step = float(np.abs(x_new - x).max())
        if v_new > best_viol and v_new > opts.feasibility_tol:
            # keep the outer iterates feasibility-monotone: retry harder from the last accepted point
            rho *= opts.penalty_growth
            omega, eta = 1.0 / rho, 1.0 / rho**0.1
            if opts.verbosity:
                log.info("outer %d rejected: viol %.3e > %.3e, rho -> %.1e", k, v_new, best_viol, rho)
            if rho > opts.max_penalty:
                status, message = "infeasible", "penalty parameter exceeded its limit"
                break
            continue
        x, viol, best_viol = x_new, v_new, v_new
        if viol <= eta:
            lam = lam + rho * c[:m]
            mu = np.maximum(0.0, mu + rho * c[m:])
            J = P.jacobian(x)
            gL = P.gradient(x) + J.T @ np.concatenate([lam, mu])
            stat = _projected_gradient(x, gL, lb, ub)
            history.append(IterationRecord(k, P.objective(x), viol, step, rho, nit, P.n_evals, stat))
            if viol <= opts.feasibility_tol and stat <= opts.optimality_tol:
                status, message = "converged", "feasibility and stationarity tolerances met"
                break
            eta = max(eta / rho**0.9, 0.1 * opts.feasibility_tol)
            omega = max(omega / rho, 0.1 * opts.optimality_tol)
        else:
            history.append(IterationRecord(k, P.objective(x), viol, step, rho, nit, P.n_evals, np.nan))
            rho *= opts.penalty_growth
            omega, eta = 1.0 / rho, 1.0 / rho**0.1
            if rho > opts.max_penalty:
                status, message = "infeasible", "penalty parameter exceeded its limit"
                break
        if opts.verbosity:
            h = history[-1]
            log.info("outer %3d  f=%.10g  viol=%.3e  stat=%.3e  rho=%.1e  inner=%d",
                     k, h.objective, h.max_violation, h.stationarity, h.penalty, h.inner_iterations)

    return SolveResult(status, x, P.objective(x), viol, len(history) - 1,
                       time.perf_counter() - start, history,
                       np.concatenate([lam, mu]), P.n_evals, message)


def _initial_multipliers(P, x, c, lb, ub):
    """Least-squares multiplier estimate at the starting point.

    Only equality rows and nearly active inequality rows take part, and
    variables sitting on a bound are left out of the stationarity residual.
    """
    m = P.n_eq
    lam, mu = np.zeros(P.n_eq), np.zeros(P.n_ineq)
    if P.n_con == 0:
        return lam, mu
    rows = np.concatenate([np.ones(m, bool), c[m:] > -1e-3])
    cols = (x > lb) & (x < ub)
    if not rows.any() or not cols.any():
        return lam, mu
    J = P.jacobian(x).tocsr()[rows][:, cols]
    g = P.gradient(x)[cols]
    est = lsqr(J.T, -g, atol=1e-10, btol=1e-10, iter_lim=20 * P.n_con)[0]
    if not np.all(np.isfinite(est)):
        return lam, mu
    full = np.zeros(P.n_con)
    full[rows] = est
    return full[:m], np.maximum(full[m:], 0.0)


def _inner(P, x, lam, mu, rho, omega, lb, ub, qn: _LBFGS, max_iter: int):
    """Bound-constrained minimisation of the augmented Lagrangian.

    Projected Newton steps on the free variables, with curvature taken as the
    exact Gauss-Newton penalty term rho*J'J plus a limited-memory BFGS model
    of the Lagrangian Hessian and an adaptive Levenberg shift.
    Returns ``(x, iterations, finite)``.
    """
    m = P.n_eq

    def evaluate(z):
        c = P.constraints(z)
        f = P.objective(z)
        if not (np.all(np.isfinite(c)) and np.isfinite(f)):
            return None
        ce, ci = c[:m], c[m:]
        si = np.maximum(0.0, mu + rho * ci)
        val = f + lam @ ce + 0.5 * rho * ce @ ce + (si @ si - mu @ mu) / (2.0 * rho)
        return val, c, si

    def derivatives(z, c, si):
        J = P.jacobian(z).tocsr()
        g0 = P.gradient(z)
        ce = c[:m]
        mult = np.concatenate([lam + rho * ce, si])
        return J, g0, g0 + J.T @ mult

    ev = evaluate(x)
    if ev is None:
        return x, 0, False
    phi, c, si = ev
    J, g0, g = derivatives(x, c, si)
    shift = 1e-8
    it = 0
    for it in range(1, max_iter + 1):
        if _projected_gradient(x, g, lb, ub) <= omega:
            break
        eps = min(1e-8, _projected_gradient(x, g, lb, ub))
        binding = ((x <= lb + eps) & (g > 0)) | ((x >= ub - eps) & (g < 0))
        free = ~binding
        active = np.concatenate([np.ones(m, bool), si > 0])
        Ja = J[active]
        H = rho * (Ja.T @ Ja).toarray() + qn.dense()
        Hf = H[np.ix_(free, free)]
        d = np.zeros_like(x)
        scale = max(1.0, float(np.abs(np.diag(Hf)).max(initial=1.0)))
        while True:
            try:
                cf = np.linalg.cholesky(Hf + shift * scale * np.eye(Hf.shape[0]))
                break
            except np.linalg.LinAlgError:
                shift = max(10.0 * shift, 1e-10)
        d[free] = -np.linalg.solve(cf.T, np.linalg.solve(cf, g[free]))

        # projected Armijo search
        t, accepted = 1.0, False
        for _ in range(40):
            x_t = np.clip(x + t * d, lb, ub)
            ev_t = evaluate(x_t)
            if ev_t is not None:
                decrease = g @ (x_t - x)
                if ev_t[0] <= phi + 1e-4 * min(decrease, 0.0) and decrease < 0:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            if shift > 1e6:
                break
            shift *= 100.0
            continue
        shift = max(shift * (0.3 if t == 1.0 else 3.0), 1e-12)
        s = x_t - x
        phi, c, si = ev_t
        J_new, g0_new, g_new = derivatives(x_t, c, si)
        # curvature pair for the Lagrangian part only (the penalty part is exact)
        mult = np.concatenate([lam + rho * c[:m], si])
        y = (g0_new - g0) + (J_new - J).T @ mult
        qn.update(s, y, qn.dense() @ s)
        x, J, g0, g = x_t, J_new, g0_new, g_new
    return x, it, True


def _external(problem, x0, opts: SolverOptions) -> SolveResult:
    start = time.perf_counter()
    P = _Counted(problem)
    lb, ub = P.variable_bounds()
    m = P.n_eq
    x0 = np.clip(x0, lb, ub)

    if opts.method == "ipopt":
        try:
            from cyipopt import minimize_ipopt as engine
        except ImportError as exc:
            raise SolverUnavailable("solver.method 'ipopt' needs the cyipopt package") from exc
    else:
        engine = None

    cons = []
    if P.n_eq:
        cons.append({"type": "eq", "fun": lambda z: P.constraints(z)[:m],
                     "jac": lambda z: P.jacobian(z)[:m].toarray()})
    if P.n_ineq:
        cons.append({"type": "ineq", "fun": lambda z: -P.constraints(z)[m:],
                     "jac": lambda z: -P.jacobian(z)[m:].toarray()})
    bounds = list(zip(np.where(np.isfinite(lb), lb, None), np.where(np.isfinite(ub), ub, None)))
    kw = dict(fun=P.objective, x0=x0, jac=P.gradient, bounds=bounds)

    if opts.method == "slsqp":
        res = minimize(method="SLSQP", constraints=cons, tol=opts.optimality_tol,
                       options={"maxiter": opts.max_iterations * 50}, **kw)
    elif opts.method == "trust-constr":
        from scipy.optimize import NonlinearConstraint
        lo = np.concatenate([np.zeros(m), np.full(P.n_ineq, -np.inf)])
        hi = np.zeros(P.n_con)
        nlc = NonlinearConstraint(P.constraints, lo, hi, jac=P.jacobian)
        res = minimize(method="trust-constr", constraints=[nlc] if P.n_con else [],
                       options={"maxiter": opts.max_iterations * 50, "gtol": opts.optimality_tol,
                                "xtol": 1e-12}, **kw)
    else:
        res = engine(constraints=cons, tol=opts.optimality_tol,
                     options={"max_iter": opts.max_iterations * 50,
                              "constr_viol_tol": opts.feasibility_tol}, **kw)

    x = np.asarray(res.x, dtype=float)
    c = P.constraints(x)
    viol = _violation(c, m)
    if not np.isfinite(viol):
        status = "numerical-failure"
    elif viol <= opts.feasibility_tol and res.success:
        status = "converged"
    elif viol > opts.feasibility_tol and res.success:
        status = "infeasible"
    else:
        status = "max-iter"
    nit = int(getattr(res, "nit", 0) or 0)
    history = [IterationRecord(nit, P.objective(x), viol, 0.0, np.nan, nit, P.n_evals, np.nan)]
    return SolveResult(status, x, P.objective(x), viol, nit, time.perf_counter() - start,
                       history, None, P.n_evals, str(getattr(res, "message", "")))

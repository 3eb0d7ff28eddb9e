"""Optimal transport on the phase circle and the inverse-barycenter estimator.

The estimator solves

    min  sum_{q,l} <C, M_ql> + eta * sum_q |sum_l G_ql sum_{j,k} e^{i psi_k} M_ql[j,k] - p_q|^2
    s.t. M_ql >= 0,  M_ql 1 = mu0_l  for every q

over transport plans M_ql (K x K, barycenter node j -> sensor node k). The
barycenter is the common row-sum vector and the per-sensor measures are
column sums, so both are eliminated through the plans.

Two solvers share one duality-gap certificate.

Column generation (default). Every feasible set of plans is a non-negative
combination of atoms: unit barycenter mass at node j of wave l, sent to
node k_q at every sensor q. The restricted master over the current atoms
is a small non-negative least-squares problem; pricing a new atom is
separable over sensors and has a closed form, so one round costs
O(Q L K). Optimal solutions need few atoms, which keeps the full-size
problem (over a million plan variables) cheap.

ADMM (``method="admm"``) on the split M in the row-sum consensus subspace,
Z in the non-negative orthant. The M-update is an equality-constrained
quadratic whose Hessian is rho*I plus a rank-2Q term, inverted in closed
form; everything else is elementwise. Accurate on small grids, slow to
reach tight gaps on large ones.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .lift import DiscreteMeasure, GroundCost, PhaseGrid, VectorMeasure
from .model import CoefficientVector, DimensionError, PlaneWaveDictionary
from .simulate import MeasurementSet

log = logging.getLogger(__name__)


class InfeasibleError(ValueError):
    """Marginals with different total mass cannot be coupled."""


class DataError(ValueError):
    """Non-finite problem data."""


class ConvergenceError(RuntimeError):
    """Iteration limit reached before the requested tolerance.

    ``best`` holds the last feasible iterate as a :class:`BarycenterSolution`.
    """

    def __init__(self, msg, best=None, diagnostics=None):
        super().__init__(msg)
        self.best = best
        self.diagnostics = diagnostics


# ---------------------------------------------------------------------------
# Two-measure transport: transportation simplex (u-v method)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransportPlan:
    """Coupling between a source (rows) and a target (columns) measure."""

    matrix: np.ndarray

    @property
    def source(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    @property
    def target(self) -> np.ndarray:
        return self.matrix.sum(axis=0)


def _northwest_corner(a, b):
    n, m = a.size, b.size
    a, b = a.copy(), b.copy()
    X = np.zeros((n, m))
    basis = []
    i = j = 0
    while i < n and j < m:
        t = min(a[i], b[j])
        X[i, j] = t
        basis.append((i, j))
        a[i] -= t
        b[j] -= t
        # advance exactly one index per step so the basis is a spanning tree
        if (a[i] <= b[j] and i < n - 1) or j == m - 1:
            i += 1
        else:
            j += 1
    return X, basis


def _potentials(C, basis, n, m):
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    rows = [[] for _ in range(n)]
    cols = [[] for _ in range(m)]
    for (i, j) in basis:
        rows[i].append(j)
        cols[j].append(i)
    u[0] = 0.0
    stack = [("r", 0)]
    while stack:
        kind, idx = stack.pop()
        if kind == "r":
            for j in rows[idx]:
                if np.isnan(v[j]):
                    v[j] = C[idx, j] - u[idx]
                    stack.append(("c", j))
        else:
            for i in cols[idx]:
                if np.isnan(u[i]):
                    u[i] = C[i, idx] - v[idx]
                    stack.append(("r", i))
    return u, v


def _cycle(basis, entering, n):
    """Alternating row/column cycle through ``entering`` within basis + entering."""
    cells = basis + [entering]
    by_row, by_col = {}, {}
    for c in cells:
        by_row.setdefault(c[0], []).append(c)
        by_col.setdefault(c[1], []).append(c)
    # depth-first search for a path from entering back to itself alternating
    # row moves and column moves
    start = entering
    stack = [(start, [start], True)]
    while stack:
        cell, path, move_row = stack.pop()
        nbrs = by_row[cell[0]] if move_row else by_col[cell[1]]
        for nb in nbrs:
            if nb == cell:
                continue
            if nb == start and len(path) >= 4 and not move_row:
                return path
            if nb in path:
                continue
            stack.append((nb, path + [nb], not move_row))
    raise RuntimeError("no cycle found in transportation basis")


def transport_simplex(a, b, C, max_pivots: int = 100000):
    """Exact balanced transportation problem min <C, X>, X 1 = a, X^T 1 = b, X >= 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    n, m = a.size, b.size
    X, basis = _northwest_corner(a, b)
    tol = 1e-12 * max(1.0, np.abs(C).max())
    for _ in range(max_pivots):
        u, v = _potentials(C, basis, n, m)
        reduced = C - u[:, None] - v[None, :]
        for (i, j) in basis:
            reduced[i, j] = 0.0
        i, j = np.unravel_index(np.argmin(reduced), reduced.shape)
        if reduced[i, j] >= -tol:
            return X
        cyc = _cycle(basis, (int(i), int(j)), n)
        minus = cyc[1::2]
        theta_cell = min(minus, key=lambda c: (X[c], c))
        theta = X[theta_cell]
        for s, c in enumerate(cyc):
            X[c] += theta if s % 2 == 0 else -theta
        X[theta_cell] = 0.0
        basis.remove(theta_cell)
        basis.append((int(i), int(j)))
    raise ConvergenceError("transportation simplex exceeded pivot limit")


def _masses(m) -> np.ndarray:
    return m.masses if isinstance(m, DiscreteMeasure) else np.asarray(m, dtype=float)


def ot_distance(mu, nu, cost: GroundCost):
    """Optimal transport cost between two equal-mass measures and its plan.

    Returns ``(value, TransportPlan)``.
    """
    a, b = _masses(mu), _masses(nu)
    if a.size != cost.K or b.size != cost.K:
        raise DimensionError(f"measures of size {a.size}, {b.size} on a {cost.K}-node cost")
    ma, mb = a.sum(), b.sum()
    if abs(ma - mb) > 1e-9 * max(ma, mb, 1e-300) and abs(ma - mb) > 1e-300:
        raise InfeasibleError(f"total masses differ: {ma} vs {mb}")
    if ma == 0.0:
        return 0.0, TransportPlan(np.zeros((cost.K, cost.K)))
    # rescale the target so the two marginals balance exactly
    b = b * (ma / mb)
    X = transport_simplex(a, b, cost.matrix)
    X = np.maximum(X, 0.0)
    return float(np.sum(cost.matrix * X)), TransportPlan(X)


def vector_ot_distance(mu: VectorMeasure, nu: VectorMeasure, cost: GroundCost) -> float:
    """Sum of component-wise transport costs."""
    if mu.masses.shape != nu.masses.shape:
        raise DimensionError(f"shapes {mu.masses.shape} and {nu.masses.shape} differ")
    return float(sum(ot_distance(mu.masses[l], nu.masses[l], cost)[0] for l in range(len(mu))))


def ot_barycenter(measures, cost: GroundCost, return_value: bool = False):
    """Forward barycenter: argmin_mu (1/Q) sum_q T(mu, mu_q), as one linear program.

    Solved with HiGHS; used to exercise transport machinery on small grids.
    """
    B = np.array([_masses(m) for m in measures], dtype=float)
    Q, K = B.shape
    if K != cost.K:
        raise DimensionError(f"measures have {K} nodes, cost has {cost.K}")
    tot = B.sum(axis=1)
    if np.ptp(tot) > 1e-9 * max(tot.max(), 1e-300):
        raise InfeasibleError(f"total masses differ: {tot}")
    # variables: Q plans (row-major K x K each), then mu (K)
    n = Q * K * K + K
    c = np.concatenate([np.tile(cost.matrix.ravel(), Q) / Q, np.zeros(K)])
    rows, cols, vals = [], [], []
    r = 0
    for q in range(Q):
        off = q * K * K
        for j in range(K):  # row sums equal mu
            idx = off + j * K + np.arange(K)
            rows += [r] * (K + 1)
            cols += list(idx) + [Q * K * K + j]
            vals += [1.0] * K + [-1.0]
            r += 1
        for k in range(K):  # column sums equal mu_q
            idx = off + np.arange(K) * K + k
            rows += [r] * K
            cols += list(idx)
            vals += [1.0] * K
            r += 1
    from scipy.sparse import csr_matrix
    A = csr_matrix((vals, (rows, cols)), shape=(r, n))
    beq = np.concatenate([np.concatenate([np.zeros(K), B[q]]) for q in range(Q)])
    res = linprog(c, A_eq=A, b_eq=beq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise ConvergenceError(f"barycenter LP failed: {res.message}")
    mu = np.maximum(res.x[-K:], 0.0)
    out = DiscreteMeasure(mu)
    return (out, float(res.fun)) if return_value else out


# ---------------------------------------------------------------------------
# Inverse barycenter problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BarycenterProblem:
    pressures: np.ndarray
    G: np.ndarray
    grid: PhaseGrid
    cost: GroundCost
    eta: float

    def __post_init__(self):
        p = np.asarray(self.pressures, dtype=complex).ravel()
        G = np.atleast_2d(np.asarray(self.G, dtype=complex))
        if G.shape[0] != p.size:
            raise DimensionError(f"G has {G.shape[0]} rows for {p.size} measurements")
        if self.cost.K != self.grid.K:
            raise DimensionError("ground cost and phase grid disagree on K")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        object.__setattr__(self, "pressures", p)
        object.__setattr__(self, "G", G)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.G.shape[0], self.G.shape[1], self.grid.K

    @property
    def gamma(self) -> float:
        return self.cost.gamma


def assemble_problem(measurements: MeasurementSet, dictionary: PlaneWaveDictionary,
                     grid: PhaseGrid, gamma: float, eta: float) -> BarycenterProblem:
    from .lift import make_ground_cost

    if abs(measurements.frequency_hz - dictionary.frequency_hz) > 1e-9 * dictionary.frequency_hz:
        raise DimensionError("measurement and dictionary frequencies differ")
    if not gamma > 0 or not eta > 0:
        raise ValueError(f"gamma and eta must be positive, got {gamma}, {eta}")
    G = dictionary.steering_matrix(measurements.array.positions_m)
    return BarycenterProblem(measurements.pressures, G, grid, make_ground_cost(grid, gamma), eta)


@dataclass(frozen=True)
class SolverOptions:
    rel_gap: float = 1e-5
    feas_tol: float = 1e-7
    max_iters: int = 50000
    rho: Optional[float] = None
    relaxation: float = 1.6
    check_every: int = 20
    adaptive_rho: bool = True
    raise_on_failure: bool = True
    method: str = "colgen"


@dataclass
class SolverDiagnostics:
    iterations: int = 0
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    gap: float = float("nan")
    lower_bound: float = float("nan")
    rho: float = float("nan")
    runtime_s: float = 0.0
    converged: bool = False
    max_marginal_violation: float = 0.0


@dataclass(frozen=True)
class BarycenterSolution:
    """Solver output. ``plans`` has shape (Q, L, K, K)."""

    plans: np.ndarray
    objective: float
    diagnostics: SolverDiagnostics = field(compare=False)
    atoms: Optional[tuple] = field(default=None, compare=False, repr=False)

    @property
    def barycenter(self) -> VectorMeasure:
        # plans are exactly feasible so any sensor gives the same row sums
        return VectorMeasure(self.plans.sum(axis=3).mean(axis=0))

    @property
    def sensor_measures(self) -> list[VectorMeasure]:
        return [VectorMeasure(m) for m in self.plans.sum(axis=2)]

    def plan(self, q: int, l: int) -> TransportPlan:
        return TransportPlan(self.plans[q, l])

    @property
    def K(self) -> int:
        return self.plans.shape[-1]


class _Operators:
    """Linear maps of the problem in a scaled frame.

    The data map A sends plans to the Q complex model pressures,
    (A M)_q = sum_l G_ql sum_{j,k} e^{i psi_k} M_ql[j,k]; its adjoint w.r.t.
    the real inner product is (A* y)_qljk = Re(conj(y_q) G_ql e^{i psi_k}).
    """

    def __init__(self, problem: BarycenterProblem):
        self.G = problem.G
        self.e = problem.grid.phasors
        self.C = np.asarray(problem.cost.matrix)
        self.Q, self.L, self.K = problem.shape
        self.Ge = self.G[:, :, None] * self.e[None, None, :]  # (Q, L, K)
        # A A* is block diagonal over sensors with 2x2 real blocks
        blocks = np.empty((self.Q, 2, 2))
        for col, w in enumerate((1.0, 1.0j)):
            y = np.full(self.Q, w)
            out = self.apply(self.adjoint(y))
            blocks[:, 0, col] = out.real
            blocks[:, 1, col] = out.imag
        self.AAt = blocks

    def apply(self, M: np.ndarray) -> np.ndarray:
        colsum = M.sum(axis=2)  # (Q, L, K)
        return np.einsum("qlk,qlk->q", colsum, self.Ge)

    def adjoint_small(self, y: np.ndarray) -> np.ndarray:
        """A* y without the trivial broadcast over source nodes, shape (Q, L, K)."""
        return (np.conj(y)[:, None, None] * self.Ge).real

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        s = self.adjoint_small(y)
        return np.broadcast_to(s[:, :, None, :], (self.Q, self.L, self.K, self.K))

    def solve_small(self, y: np.ndarray, shift: float) -> np.ndarray:
        """(shift*I + A A*)^{-1} y, per-sensor 2x2 solves."""
        mats = self.AAt + shift * np.eye(2)[None]
        rhs = np.stack([y.real, y.imag], axis=1)[..., None]
        sol = np.linalg.solve(mats, rhs)[..., 0]
        return sol[:, 0] + 1j * sol[:, 1]


def _project_consensus(X: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto {M : M_ql 1 equal across q}."""
    rs = X.sum(axis=3)
    dev = rs - rs.mean(axis=0, keepdims=True)
    return X - dev[..., None] / X.shape[3]


def _repair(Z: np.ndarray) -> np.ndarray:
    """Feasible point near Z >= 0: scale each row down to the smallest row sum across sensors."""
    rs = Z.sum(axis=3)
    target = rs.min(axis=0, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(rs > 0, target / rs, 0.0)
    return Z * scale[..., None]


def _objective(ops: _Operators, M: np.ndarray, p: np.ndarray, eta: float) -> float:
    transport = float(np.einsum("qljk,jk->", M, ops.C))
    r = ops.apply(M) - p
    return transport + eta * float(np.vdot(r, r).real)


def _lower_bound(ops: _Operators, M: np.ndarray, p: np.ndarray, eta: float,
                 mass_bound: float) -> float:
    """Dual value at y = 2 eta (A M - p), with total barycenter mass capped by ``mass_bound``.

    For a dual vector y the inner minimisation over feasible plans is
    sum_{l,j} t_lj * sum_q min_k (C_jk + (A* y)_qlk) with t_lj >= 0 the
    barycenter masses; capping sum t at the a-priori bound keeps it finite.
    """
    y = 2.0 * eta * (ops.apply(M) - p)
    w = ops.adjoint_small(y)  # (Q, L, K)
    h = (ops.C[None, None, :, :] + w[:, :, None, :]).min(axis=3).sum(axis=0)
    dual = -float(np.vdot(y, p).real) - float(np.vdot(y, y).real) / (4.0 * eta)
    return dual + mass_bound * min(0.0, float(h.min()))


def _finish(plans, objective, lb, scale, diag, t0, opts):
    diag.lower_bound = lb * scale
    diag.gap = (objective - lb) * scale
    rs = plans.sum(axis=3)
    diag.max_marginal_violation = float(np.abs(rs - rs.mean(axis=0, keepdims=True)).max()) \
        if plans.size else 0.0
    diag.runtime_s = time.perf_counter() - t0
    sol = BarycenterSolution(plans, objective * scale, diag)
    if not diag.converged:
        msg = (f"inverse barycenter solver stopped after {diag.iterations} iterations with "
               f"relative gap {diag.gap / max(abs(sol.objective), 1e-300):.3e} > {opts.rel_gap:.1e}")
        if opts.raise_on_failure:
            raise ConvergenceError(msg, best=sol, diagnostics=diag)
        log.warning(msg)
    return sol


def solve_barycenter(problem: BarycenterProblem, opts: SolverOptions = SolverOptions(),
                     warm_start: Optional[BarycenterSolution] = None) -> BarycenterSolution:
    """Solve the inverse barycenter problem to a certified relative duality gap.

    ``opts.method`` selects column generation (default) or ADMM on the full
    plan variables.
    """
    if not np.all(np.isfinite(problem.pressures)) or not np.all(np.isfinite(problem.G)):
        raise DataError("measurements or steering matrix contain NaN/Inf")
    if opts.method == "colgen":
        return _solve_colgen(problem, opts, warm_start)
    if opts.method == "admm":
        return _solve_admm(problem, opts, warm_start)
    raise ValueError(f"unknown solver method {opts.method!r}")


def _solve_admm(problem, opts, warm_start):
    t0 = time.perf_counter()
    ops = _Operators(problem)
    Q, L, K = problem.shape
    gamma = problem.gamma
    p_raw = problem.pressures

    # Work with data of unit RMS; the objective is 1-homogeneous in
    # (M, p) once eta is rescaled by the data scale.
    scale = float(np.sqrt(np.mean(np.abs(p_raw) ** 2)))
    diag = SolverDiagnostics()
    if scale == 0.0:
        diag.converged = True
        return _finish(np.zeros((Q, L, K, K)), 0.0, 0.0, 1.0, diag, t0, opts)
    p = p_raw / scale
    eta = problem.eta * scale

    C = np.broadcast_to(ops.C, (Q, L, K, K))
    c0 = 2.0 * eta * ops.adjoint(p) - C  # lies in the consensus subspace
    rho = opts.rho if opts.rho is not None else 1.0
    alpha = opts.relaxation

    if warm_start is not None and warm_start.plans.shape == (Q, L, K, K):
        Z = warm_start.plans / scale
    else:
        Z = np.zeros((Q, L, K, K))
    U = np.zeros_like(Z)
    best = Z if warm_start is not None else np.zeros_like(Z)
    best_ub = _objective(ops, _repair(best), p, eta)
    lb = -np.inf
    mass_cap = eta * float(np.vdot(p, p).real) / (Q * gamma)
    r_norm = s_norm = np.inf
    it = 0
    for it in range(1, opts.max_iters + 1):
        V = Z - U
        b = rho * _project_consensus(V) + c0
        w = ops.solve_small(ops.apply(b), rho / (2.0 * eta))
        M = (b - ops.adjoint(w)) / rho
        Mh = alpha * M + (1.0 - alpha) * Z
        Z_old = Z
        Z = np.maximum(Mh + U, 0.0)
        U = U + Mh - Z

        if it % opts.check_every == 0 or it == opts.max_iters:
            r_norm = float(np.linalg.norm(M - Z))
            s_norm = rho * float(np.linalg.norm(Z - Z_old))
            cand = _repair(Z)
            ub = _objective(ops, cand, p, eta)
            if ub < best_ub:
                best_ub, best = ub, cand
            cap = min(mass_cap, best_ub / (Q * gamma))
            lb = max(lb, _lower_bound(ops, cand, p, eta, cap),
                     _lower_bound(ops, M, p, eta, cap))
            if best_ub - lb <= opts.rel_gap * max(abs(best_ub), 1e-12):
                diag.converged = True
                break
            if opts.adaptive_rho:
                pr = r_norm / max(np.linalg.norm(M), np.linalg.norm(Z), 1e-12)
                du = s_norm / max(rho * np.linalg.norm(U), 1e-12)
                if pr > 0 and du > 0:
                    ratio = np.sqrt(pr / du)
                    if ratio > 5.0 or ratio < 0.2:
                        new_rho = float(np.clip(rho * ratio, 1e-6, 1e6))
                        U *= rho / new_rho
                        rho = new_rho

    diag.iterations = it
    diag.primal_residual = r_norm
    diag.dual_residual = s_norm
    diag.rho = rho
    return _finish(best * scale, best_ub, lb, scale, diag, t0, opts)


def _solve_master(D: np.ndarray, c: np.ndarray, p: np.ndarray, eta: float,
                  lam: np.ndarray, tol: float, max_steps: int = 10000) -> np.ndarray:
    """min c.lam + eta*||D lam - p||^2 over lam >= 0 (D real, full rows 2Q).

    Primal active-set method in the Lawson-Hanson style. The free set is kept
    with full column rank, so every subproblem has a unique minimiser; an
    entering column that is dependent on the free set is brought in along
    the null direction, where cost decreases at unchanged residual.
    """
    lam = lam.copy()
    free = list(np.flatnonzero(lam > 0))
    rank_tol = 1e-10
    # reduced costs below the rounding floor of the gradient are noise; entering
    # on them lets two dependent columns swap forever
    grad_scale = max(float(np.abs(c).max()),
                     2.0 * eta * float(np.linalg.norm(p)) * float(np.linalg.norm(D, axis=0).max()))
    tol = max(tol, 64.0 * np.finfo(float).eps * grad_scale)

    def sub_solve(idx):
        Dp = D[:, idx]
        Qm, R = np.linalg.qr(Dp)
        rhs = Qm.T @ p - np.linalg.solve(R.T, c[idx]) / (2.0 * eta)
        return np.linalg.solve(R, rhs)

    def inner(free):
        for _ in range(max_steps):
            if not free:
                return free
            idx = np.array(free)
            z = sub_solve(idx)
            if np.all(z > 0):
                lam[idx] = z
                return free
            cur = lam[idx]
            neg = z <= 0
            alpha = np.min(cur[neg] / (cur[neg] - z[neg]))
            lam[idx] = cur + alpha * (z - cur)
            drop = lam[idx] <= 1e-15 * max(1.0, cur.max())
            drop |= neg & (np.arange(idx.size) == np.argmin(
                np.where(neg, cur / np.maximum(cur - z, 1e-300), np.inf)))
            lam[idx[drop]] = 0.0
            free = [i for i, d in zip(free, drop) if not d]
        raise ConvergenceError("master active-set inner loop did not terminate")

    free = inner(free)
    banned: set = set()
    for _ in range(max_steps):
        g = c + 2.0 * eta * (D.T @ (D @ lam - p))
        g[free] = np.inf
        if banned:
            g[list(banned)] = np.inf
        t = int(np.argmin(g))
        if not g[t] < -tol:
            return lam
        if free:
            Dp = D[:, free]
            x, *_ = np.linalg.lstsq(Dp, D[:, t], rcond=None)
            dependent = np.linalg.norm(Dp @ x - D[:, t]) <= rank_tol * np.linalg.norm(D[:, t])
        else:
            dependent = False
        if dependent:
            # direction d = e_t - x keeps D lam fixed and changes cost by g_t < 0
            cur = lam[free]
            shrink = x > 0
            if not np.any(shrink):
                raise ConvergenceError("master problem unbounded along a null direction")
            ratios = cur[shrink] / x[shrink]
            k = int(np.argmin(ratios))
            step = ratios[k]
            lam[free] = cur - step * x
            lam[t] = step
            out = np.array(free)[shrink][k]
            lam[out] = 0.0
            free = [i for i in free if i != out and lam[i] > 0] + [t]
            if step == 0.0:
                banned.add(t)
                free.remove(t)
                continue
        else:
            free = free + [t]
        before = set(free)
        free = inner(free)
        if t not in free and t in before:
            banned.add(t)
        else:
            banned.clear()
    raise ConvergenceError("master active-set method exceeded its step limit")


class _Pricing:
    """Reduced costs of atoms (l, j, k_1..k_Q) for a dual vector y.

    An atom puts unit barycenter mass at node j of wave l and sends it to
    node k_q at sensor q. Its reduced cost is
    sum_q [C_{j k_q} + Re(conj(y_q) G_ql e^{i psi_{k_q}})], minimised per
    sensor independently. Because C_jk = 2 + gamma - 2 cos(psi_j - psi_k),
    each per-sensor term is 2 + gamma + Re(e^{i psi_k} z) with
    z = conj(y_q) G_ql - 2 e^{-i psi_j}, minimised at the node nearest to
    pi - arg z; the two bracketing nodes are checked explicitly.
    """

    def __init__(self, problem: BarycenterProblem):
        self.G = problem.G
        self.C = np.asarray(problem.cost.matrix)
        self.e = problem.grid.phasors
        self.K = problem.grid.K
        self.nodes = problem.grid.nodes_rad

    def best(self, y: np.ndarray):
        """Per (q, l, j): minimal term value and minimising k; shapes (Q, L, K)."""
        K = self.K
        a = np.conj(y)[:, None] * self.G  # (Q, L)
        z = a[:, :, None] - 2.0 * np.conj(self.e)[None, None, :]  # over j
        target = np.mod(np.pi - np.angle(z) + np.pi, 2.0 * np.pi)  # angle + pi in [0, 2pi)
        k0 = np.floor(target / (2.0 * np.pi / K)).astype(int) % K
        k1 = (k0 + 1) % K
        j = np.arange(K)[None, None, :]
        v0 = self.C[j, k0] + (a[:, :, None] * self.e[k0]).real
        v1 = self.C[j, k1] + (a[:, :, None] * self.e[k1]).real
        use1 = v1 < v0
        return np.where(use1, v1, v0), np.where(use1, k1, k0)

    def brute(self, y: np.ndarray):
        a = np.conj(y)[:, None] * self.G
        W = self.C[None, None] + (a[:, :, None, None] * self.e[None, None, None, :]).real
        return W.min(axis=3), W.argmin(axis=3)


def _solve_colgen(problem, opts, warm_start):
    t0 = time.perf_counter()
    Q, L, K = problem.shape
    gamma = problem.gamma
    p_raw = problem.pressures
    scale = float(np.sqrt(np.mean(np.abs(p_raw) ** 2)))
    diag = SolverDiagnostics()
    if scale == 0.0:
        diag.converged = True
        return _finish(np.zeros((Q, L, K, K)), 0.0, 0.0, 1.0, diag, t0, opts)
    p = p_raw / scale
    eta = problem.eta * scale
    p_r = np.concatenate([p.real, p.imag])
    pricing = _Pricing(problem)
    C = pricing.C
    rows = np.arange(Q)

    def column(l, j, ks):
        a = problem.G[rows, l] * pricing.e[ks]
        return np.concatenate([a.real, a.imag]), float(C[j, ks].sum())

    atoms: list = []  # (l, j, ks tuple)
    cols: list = []
    costs: list = []
    index: dict = {}
    lam = np.zeros(0)
    if warm_start is not None and warm_start.atoms is not None \
            and warm_start.plans.shape == (Q, L, K, K):
        for (l, j, ks) in warm_start.atoms[0]:
            key = (int(l), int(j), tuple(int(k) for k in ks))
            if key not in index:
                index[key] = len(atoms)
                atoms.append(key)
                col, cst = column(key[0], key[1], np.array(key[2]))
                cols.append(col)
                costs.append(cst)
        lam = np.zeros(len(atoms))

    tol = 1e-11
    mass_cap0 = eta * float(np.vdot(p, p).real) / (Q * gamma)
    lb = -np.inf
    ub = eta * float(np.vdot(p, p).real)
    it = 0
    max_atoms = max(4 * (2 * Q + L), 200)
    for it in range(1, opts.max_iters + 1):
        if atoms:
            D = np.array(cols).T
            cvec = np.array(costs)
            lam = _solve_master(D, cvec, p_r, eta, lam, tol)
            model = D @ lam
            ub = float(cvec @ lam) + eta * float(np.sum((model - p_r) ** 2))
        else:
            model = np.zeros(2 * Q)
        r = model[:Q] + 1j * model[Q:] - p
        y = 2.0 * eta * r
        vals, ks = pricing.best(y)
        h = vals.sum(axis=0)  # (L, K) reduced cost of the best atom per (l, j)
        dual = -float(np.vdot(y, p).real) - float(np.vdot(y, y).real) / (4.0 * eta)
        cap = min(mass_cap0, ub / (Q * gamma))
        lb = max(lb, dual + cap * min(0.0, float(h.min())))
        if ub - lb <= opts.rel_gap * max(abs(ub), 1e-300) or h.min() >= -tol:
            diag.converged = True
            break
        # enter the best atom of every wave that has a negative reduced cost
        best_j = h.argmin(axis=1)
        best_h = h[np.arange(L), best_j]
        order = np.argsort(best_h, kind="stable")
        added = 0
        for l in order:
            if best_h[l] >= -tol:
                break
            j = int(best_j[l])
            key = (int(l), j, tuple(int(k) for k in ks[:, l, j]))
            if key in index:
                continue
            index[key] = len(atoms)
            atoms.append(key)
            col, cst = column(key[0], j, ks[:, l, j])
            cols.append(col)
            costs.append(cst)
            added += 1
        if added == 0:
            # pricing only returns atoms already present: the master is at
            # its tolerance floor and the gap cannot shrink further
            diag.converged = ub - lb <= opts.rel_gap * max(abs(ub), 1e-300)
            break
        lam = np.concatenate([lam, np.zeros(added)])
        if len(atoms) > max_atoms:
            keep = [i for i in range(len(atoms)) if lam[i] > 0 or i >= len(atoms) - added]
            atoms = [atoms[i] for i in keep]
            cols = [cols[i] for i in keep]
            costs = [costs[i] for i in keep]
            lam = lam[keep]
            index = {a: i for i, a in enumerate(atoms)}

    diag.iterations = it
    plans = np.zeros((Q, L, K, K))
    active = [(a, w) for a, w in zip(atoms, lam) if w > 0]
    for (l, j, ks_), w in active:
        plans[rows, l, j, np.array(ks_)] += w * scale
    sol = _finish(plans, ub, lb, scale, diag, t0, opts)
    object.__setattr__(sol, "atoms", ([a for a, _ in active], np.array([w * scale for _, w in active])))
    return sol


def problem_objective(problem: BarycenterProblem, plans: np.ndarray) -> float:
    """Objective of the inverse problem at arbitrary plans (no feasibility check)."""
    ops = _Operators(problem)
    return _objective(ops, np.asarray(plans, dtype=float), problem.pressures, problem.eta)


def extract_coefficients(solution: BarycenterSolution, grid: PhaseGrid) -> CoefficientVector:
    """First moments of the barycenter rows."""
    if solution.K != grid.K:
        raise DimensionError(f"solution has {solution.K} phase nodes, grid has {grid.K}")
    return CoefficientVector(solution.barycenter.first_moments(grid))


def estimate_ot(measurements: MeasurementSet, dictionary: PlaneWaveDictionary, grid: PhaseGrid,
                gamma: float, eta: float, opts: SolverOptions = SolverOptions(),
                warm_start: Optional[BarycenterSolution] = None) -> CoefficientVector:
    problem = assemble_problem(measurements, dictionary, grid, gamma, eta)
    return extract_coefficients(solve_barycenter(problem, opts, warm_start), grid)

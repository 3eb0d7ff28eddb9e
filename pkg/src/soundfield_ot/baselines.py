"""Reference estimators on the plane-wave dictionary: Tikhonov, Lasso, LAD-Lasso.

All three act on a complex sensing matrix G (Q x L, rows are steering
vectors at the sensors). Sparsity penalties use complex moduli,
sum_l |alpha_l|.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import CoefficientVector, PlaneWaveDictionary
from .ot_solver import ConvergenceError

log = logging.getLogger(__name__)


class RankError(np.linalg.LinAlgError):
    """Unregularised least squares on an underdetermined system."""


@dataclass(frozen=True)
class BaselineOptions:
    tol: float = 1e-8
    rel_gap: float = 1e-5
    max_iters: int = 100000
    raise_on_failure: bool = True


def sensing_matrix(dictionary: PlaneWaveDictionary, positions) -> np.ndarray:
    return dictionary.steering_matrix(positions)


def _stack(G: np.ndarray) -> np.ndarray:
    """Real representation of z -> G z acting on [Re z; Im z]."""
    return np.block([[G.real, -G.imag], [G.imag, G.real]])


def _unstack(x: np.ndarray) -> np.ndarray:
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def spectral_norm(G: np.ndarray, iters: int = 30, tol: float = 1e-10) -> float:
    """Largest singular value by power iteration on G^H G.

    The start vector is pseudo-random with a fixed seed: structured starts
    such as all-ones can be orthogonal to the top singular vector for
    symmetric array geometries.
    """
    start = np.random.default_rng(12345).standard_normal((2, G.shape[1]))
    x = (start[0] + 1j * start[1]) / np.linalg.norm(start)
    sigma = 0.0
    for _ in range(iters):
        y = G.conj().T @ (G @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        new = np.sqrt(ny)
        if abs(new - sigma) <= tol * new:
            sigma = new
            break
        sigma = new
    return sigma


def complex_soft_threshold(z: np.ndarray, thresh) -> np.ndarray:
    """z * max(0, 1 - thresh/|z|), zero where |z| <= thresh."""
    mag = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.where(mag > thresh, 1.0 - thresh / np.where(mag > 0, mag, 1.0), 0.0)
    return z * shrink


def tikhonov(G, p, lam: float) -> CoefficientVector:
    """argmin ||G a - p||^2 + lam ||a||^2 via the real normal equations."""
    G = np.atleast_2d(np.asarray(G, dtype=complex))
    p = np.asarray(p, dtype=complex).ravel()
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    A = _stack(G)
    b = np.concatenate([p.real, p.imag])
    N = A.T @ A + lam * np.eye(A.shape[1])
    if lam == 0 and np.linalg.matrix_rank(N) < N.shape[0]:
        raise RankError(f"singular normal equations ({G.shape[0]} sensors, {G.shape[1]} waves)")
    x = np.linalg.solve(N, A.T @ b)
    return CoefficientVector(_unstack(x))


def lasso_residual(G, p, lam, a) -> float:
    """Violation of the Lasso stationarity conditions at ``a``."""
    grad = G.conj().T @ (G @ a - p)
    mag = np.abs(a)
    active = mag > 0
    res = np.zeros(a.size)
    res[active] = np.abs(grad[active] + lam * a[active] / mag[active])
    res[~active] = np.maximum(0.0, np.abs(grad[~active]) - lam)
    return float(res.max()) if res.size else 0.0


def lasso(G, p, lam: float, opts: BaselineOptions = BaselineOptions()) -> CoefficientVector:
    """argmin 1/2 ||G a - p||^2 + lam sum |a_l| by accelerated proximal gradient.

    Stops once the stationarity residual falls below ``opts.tol`` times the
    data scale max|G^H p|. Small lam makes the last inactive columns very
    slow to leave the support, so lam is approached by continuation: stage
    values geometrically spaced between max|G^H p| and lam, roughly a factor
    5 apart, each solved loosely and warm-starting the next. The iteration
    budget ``opts.max_iters`` is shared by all stages.
    """
    G = np.atleast_2d(np.asarray(G, dtype=complex))
    p = np.asarray(p, dtype=complex).ravel()
    if not lam > 0:
        raise ValueError("lambda must be positive")
    L = G.shape[1]
    Ghp = G.conj().T @ p
    scale = float(np.abs(Ghp).max())
    if scale <= lam:
        return CoefficientVector(np.zeros(L))
    # power iteration approaches the norm from below; pad the Lipschitz bound
    t = 1.0 / (1.01 * spectral_norm(G) ** 2)
    GhG = G.conj().T @ G
    x = np.zeros(L, dtype=complex)
    ratio = scale / lam
    stages = max(0, int(np.ceil(np.log(ratio) / np.log(5.0) - 0.5)))
    used = 0
    res = np.inf
    for k in range(max(stages - 1, 0), -1, -1):
        stage_lam = lam * ratio ** (k / max(stages, 1)) if k else lam
        final = k == 0
        target = opts.tol * scale if final else 1e-3 * stage_lam
        yk = x.copy()
        tk = 1.0
        converged = False
        while used < opts.max_iters:
            used += 1
            grad = GhG @ yk - Ghp
            x_new = complex_soft_threshold(yk - t * grad, stage_lam * t)
            # adaptive restart keeps the momentum from overshooting
            if np.real(np.vdot(yk - x_new, x_new - x)) > 0:
                tk = 1.0
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            yk = x_new + ((tk - 1.0) / t_next) * (x_new - x)
            x, tk = x_new, t_next
            if used % 10 == 0:
                res = lasso_residual(G, p, stage_lam, x)
                if res <= target:
                    converged = True
                    break
        if final and converged:
            return CoefficientVector(x)
    res = lasso_residual(G, p, lam, x)
    msg = f"lasso stopped after {opts.max_iters} iterations, residual {res:.3e}"
    if opts.raise_on_failure:
        raise ConvergenceError(msg)
    log.warning(msg)
    return CoefficientVector(x)


def lad_lasso_objective(G, p, lam, a) -> float:
    return float(np.abs(G @ a - p).sum() + lam * np.abs(a).sum())


def _lad_dual_bound(G, p, lam, w) -> float:
    """-Re<w, p> after scaling w into {|w_q| <= 1, |(G^H w)_l| <= lam}."""
    s = max(1.0, float(np.abs(w).max()), float(np.abs(G.conj().T @ w).max()) / lam)
    return -float(np.real(np.vdot(w / s, p)))


def _lad_polished_dual(G, p, lam, r, z) -> np.ndarray:
    """Dual point rebuilt from the optimality conditions on the current pattern.

    Off the zero-residual set w_q is the phase of r_q; on it w is the
    least-squares solution of (G^H w)_l = -lam a_l/|a_l| over the support.
    """
    zero = r == 0
    supp = z != 0
    w = np.zeros(p.size, dtype=complex)
    w[~zero] = r[~zero] / np.abs(r[~zero])
    if supp.any() and zero.any():
        rhs = -lam * z[supp] / np.abs(z[supp]) - G[~zero][:, supp].conj().T @ w[~zero]
        w[zero] = np.linalg.lstsq(G[zero][:, supp].conj().T, rhs, rcond=None)[0]
    return w


def lad_lasso(G, p, lam: float, opts: BaselineOptions = BaselineOptions()) -> CoefficientVector:
    """argmin sum_q |(G a - p)_q| + lam sum_l |a_l| by ADMM.

    Splitting: r = G a - p and z = a, with complex soft-thresholding for both.
    The z-split carries lam times the penalty of the r-split; both
    soft-thresholds then use the same level and the iteration is invariant
    to the scale of lam. Stops on a certified duality gap: the scaled
    r-multipliers, and a dual point polished from the current support, are
    scaled into {|w_q| <= 1, |G^H w|_l <= lam}, and -Re<w, p> bounds the
    optimum from below.
    """
    G = np.atleast_2d(np.asarray(G, dtype=complex))
    p = np.asarray(p, dtype=complex).ravel()
    if not lam > 0:
        raise ValueError("lambda must be positive")
    Q, L = G.shape
    if float(np.abs(p).sum()) == 0.0:
        return CoefficientVector(np.zeros(L))
    Gh = G.conj().T
    rho = 1.0 / max(np.sqrt(np.mean(np.abs(p) ** 2)), 1e-300)
    kappa = lam
    if L <= Q:
        Minv = np.linalg.inv(Gh @ G + kappa * np.eye(L))
        a_step = lambda rhs: Minv @ rhs  # noqa: E731
    else:
        # Woodbury through the Q x Q matrix kappa I + G G^H
        S = np.linalg.inv(kappa * np.eye(Q) + G @ Gh)
        a_step = lambda rhs: (rhs - Gh @ (S @ (G @ rhs))) / kappa  # noqa: E731
    a = np.zeros(L, dtype=complex)
    r = -p.copy()
    z = np.zeros(L, dtype=complex)
    u = np.zeros(Q, dtype=complex)  # scaled multiplier for G a - p - r = 0
    v = np.zeros(L, dtype=complex)  # scaled multiplier for a - z = 0
    best_a, best_obj = z.copy(), lad_lasso_objective(G, p, lam, z)
    lb = -np.inf
    gap = np.inf
    for it in range(1, opts.max_iters + 1):
        a = a_step(Gh @ (r + p - u) + kappa * (z - v))
        Ga = G @ a
        r = complex_soft_threshold(Ga - p + u, 1.0 / rho)
        z = complex_soft_threshold(a + v, 1.0 / rho)
        u = u + Ga - p - r
        v = v + a - z
        if it % 10 == 0:
            obj = lad_lasso_objective(G, p, lam, z)
            if obj < best_obj:
                best_obj, best_a = obj, z.copy()
            lb = max(lb, _lad_dual_bound(G, p, lam, rho * u),
                     _lad_dual_bound(G, p, lam, _lad_polished_dual(G, p, lam, r, z)))
            gap = best_obj - lb
            if gap <= opts.rel_gap * max(best_obj, 1e-300):
                return CoefficientVector(best_a)
    msg = f"LAD-lasso stopped after {opts.max_iters} iterations, relative gap {gap / best_obj:.3e}"
    if opts.raise_on_failure:
        raise ConvergenceError(msg)
    log.warning(msg)
    return CoefficientVector(best_a)

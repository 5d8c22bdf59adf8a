"""One-shot zero-sum matrix games: exact LP solutions and regularized saddle points.

The row player maximizes ``u^T M theta``, the column player minimizes it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import brentq
from scipy.special import softmax


class MatrixGameError(RuntimeError):
    pass


@dataclass(frozen=True)
class MatrixGameSolution:
    u: np.ndarray
    theta: np.ndarray
    value: float
    duality_gap: float


@dataclass(frozen=True)
class RegularizerSpec:
    """Strongly convex policy regularizer, scaled by ``tau_max``/``tau_min``.

    ``neg_entropy``: ``sum p log p``. ``tsallis``: ``(sum p^q - 1) / (q - 1)``
    with ``0 < q < 1``.
    """

    kind: Literal["neg_entropy", "tsallis"] = "neg_entropy"
    tau_max: float = 1e-2
    tau_min: float = 1e-2
    q: float = 0.5

    def __post_init__(self):
        if self.kind not in ("neg_entropy", "tsallis"):
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if not (self.tau_max > 0 and self.tau_min > 0):
            raise ValueError("temperatures must be positive")
        if self.kind == "tsallis" and not 0.0 < self.q < 1.0:
            raise ValueError("tsallis q must lie in (0, 1)")

    def scaled(self, factor: float) -> "RegularizerSpec":
        return RegularizerSpec(self.kind, self.tau_max * factor, self.tau_min * factor, self.q)

    def penalty(self, p: np.ndarray) -> float:
        p = np.asarray(p, dtype=float)
        if self.kind == "neg_entropy":
            nz = p[p > 0]
            return float(np.sum(nz * np.log(nz)))
        return float((np.sum(p**self.q) - 1.0) / (self.q - 1.0))

    # gradient of the penalty and its derivative, both in log-probability coordinates
    def _grad(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "neg_entropy":
            return x + 1.0
        q = self.q
        return q / (q - 1.0) * np.exp((q - 1.0) * x)

    def _grad_dx(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "neg_entropy":
            return np.ones_like(x)
        q = self.q
        return q * np.exp((q - 1.0) * x)

    def best_response(self, payoff: np.ndarray, tau: float) -> np.ndarray:
        """``argmax_p p^T payoff - tau * Omega(p)`` over the simplex."""
        payoff = np.asarray(payoff, dtype=float)
        if self.kind == "neg_entropy":
            return softmax(payoff / tau)
        q = self.q
        below = payoff.max() - payoff
        scale = (1.0 - q) / (tau * q)

        def weights(log_d):
            return ((np.exp(log_d) + below) * scale) ** (1.0 / (q - 1.0))

        # multiplier offset d above the top payoff: at d_hi every weight is <= 1/n
        # (equality for constant payoffs, so step past it), as d -> 0 the leading
        # weight blows up
        log_hi = np.log(payoff.size ** (1.0 - q) / scale) + 1.0
        log_d = brentq(lambda t: weights(t).sum() - 1.0, log_hi - 60.0, log_hi, xtol=1e-14)
        p = weights(log_d)
        return p / p.sum()


def _check_matrix(M) -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise MatrixGameError(f"payoff must be a non-empty matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise MatrixGameError("payoff matrix has non-finite entries")
    return M


def duality_gap(M: np.ndarray, u: np.ndarray, theta: np.ndarray) -> float:
    """``max_i (M theta)_i - min_j (u^T M)_j``."""
    return float((M @ theta).max() - (u @ M).min())


def value_bounds(M) -> tuple[float, float]:
    """Pure-strategy ``(maximin, minimax)``; the game value lies between them."""
    M = _check_matrix(M)
    return float(M.min(axis=1).max()), float(M.max(axis=0).min())


def _make_solution(M, u, theta) -> MatrixGameSolution:
    lo = float((u @ M).min())
    hi = float((M @ theta).max())
    return MatrixGameSolution(u, theta, 0.5 * (lo + hi), hi - lo)


def _pure(m: int, n: int, i: int, j: int):
    u = np.zeros(m)
    theta = np.zeros(n)
    u[i] = 1.0
    theta[j] = 1.0
    return u, theta


def _simplex_max(A: np.ndarray, pivot_cap: int):
    """Maximize ``1^T y`` s.t. ``A y <= 1, y >= 0`` for entrywise-positive ``A``.

    Dense tableau with Bland's rule. Returns ``(y, x)`` where ``x`` are the
    dual multipliers read off the slack columns of the final objective row.
    """
    m, n = A.shape
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = 1.0
    T[m, :n] = -1.0
    basis = list(range(n, n + m))
    eps = 1e-12
    for _ in range(pivot_cap):
        obj = T[m, :-1]
        entering = np.flatnonzero(obj < -eps)
        if entering.size == 0:
            break
        col = int(entering[0])
        colv = T[:m, col]
        pos = colv > eps
        if not pos.any():
            raise MatrixGameError("LP unbounded; positivity shift failed")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, best))
        row = min(ties, key=lambda r: basis[r])
        T[row] /= T[row, col]
        others = np.arange(m + 1) != row
        T[others] -= np.outer(T[others, col], T[row])
        basis[row] = col
    else:
        raise MatrixGameError(f"simplex pivot cap {pivot_cap} exceeded")
    y = np.zeros(n + m)
    y[basis] = T[:m, -1]
    x = T[m, n : n + m].copy()
    return np.maximum(y[:n], 0.0), np.maximum(x, 0.0)


def solve_exact(M, tol: float = 1e-9) -> MatrixGameSolution:
    """Nash equilibrium of a zero-sum matrix game by linear programming."""
    M = _check_matrix(M)
    if not tol > 0:
        raise ValueError("tol must be positive")
    m, n = M.shape
    row_mins = M.min(axis=1)
    col_maxs = M.max(axis=0)
    i = int(np.argmax(row_mins))
    j = int(np.argmin(col_maxs))
    if row_mins[i] == col_maxs[j]:
        # pure saddle: M[i, j] is both its row's min and its column's max
        return _make_solution(M, *_pure(m, n, i, j))
    shift = 1.0 - M.min()
    y, x = _simplex_max(M + shift, 50 * (m + n) ** 2)
    if y.sum() <= 0 or x.sum() <= 0:
        raise MatrixGameError("degenerate simplex output")
    sol = _make_solution(M, x / x.sum(), y / y.sum())
    if sol.duality_gap > tol:
        raise MatrixGameError(f"LP duality gap {sol.duality_gap:.3e} exceeds tol {tol:.1e}")
    return sol


def _kkt(M, reg: RegularizerSpec, t1: float, t2: float, z: np.ndarray):
    m, n = M.shape
    x, y, l1, l2 = z[:m], z[m : m + n], z[m + n], z[m + n + 1]
    u, th = np.exp(x), np.exp(y)
    F = np.concatenate(
        [
            M @ th - t1 * reg._grad(x) - l1,
            M.T @ u + t2 * reg._grad(y) - l2,
            [u.sum() - 1.0, th.sum() - 1.0],
        ]
    )
    J = np.zeros((m + n + 2, m + n + 2))
    J[:m, :m] = np.diag(-t1 * reg._grad_dx(x))
    J[:m, m : m + n] = M * th
    J[:m, m + n] = -1.0
    J[m : m + n, :m] = M.T * u
    J[m : m + n, m : m + n] = np.diag(t2 * reg._grad_dx(y))
    J[m : m + n, m + n + 1] = -1.0
    J[m + n, :m] = u
    J[m + n + 1, m : m + n] = th
    return F, J


def _newton(M, reg, t1, t2, z, max_steps: int):
    """Damped Newton on the optimality conditions, run to machine-precision stagnation."""
    m, n = M.shape
    F, J = _kkt(M, reg, t1, t2, z)
    res = np.abs(F).max()
    steps = 0
    floor = 4.0 * np.finfo(float).eps * max(1.0, np.abs(M).max()) * (m + n)
    while res > floor and steps < max_steps:
        steps += 1
        try:
            d = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(J, -F, rcond=None)[0]
        step = 1.0
        # keep log-probabilities from jumping across many orders of magnitude at once
        big = np.abs(d[: m + n]).max()
        if big > 50.0:
            step = 50.0 / big
        while step >= 1e-10:
            cand = z + step * d
            Fc, Jc = _kkt(M, reg, t1, t2, cand)
            rc = np.abs(Fc).max()
            if np.isfinite(rc) and rc < res:
                break
            step *= 0.5
        else:
            break
        z, F, J, res = cand, Fc, Jc, rc
    return z, res, steps


def solve_regularized(M, reg: RegularizerSpec, tol: float = 1e-10, max_sweeps: int = 100_000):
    """Unique saddle point of ``u^T M theta - tau_max Omega(u) + tau_min Omega(theta)``.

    Newton steps on the optimality conditions (in log-probability
    coordinates) follow a continuation path from a large temperature down to
    the requested one. Convergence is declared once the smoothed best
    responses to the iterate move it by less than ``tol`` (floored at the
    rounding level of the response map, about ``eps * |M| / tau``). The
    reported duality gap is that of the unregularized game.
    """
    M = _check_matrix(M)
    m, n = M.shape
    spread = float(M.max() - M.min())
    t_lo = min(reg.tau_max, reg.tau_min)
    factor = 1.0
    while t_lo * factor < max(spread, 1.0):
        factor *= 2.0
    z = np.concatenate([np.full(m, -np.log(m)), np.full(n, -np.log(n)), [0.0, 0.0]])
    u0, th0 = np.full(m, 1.0 / m), np.full(n, 1.0 / n)
    t1, t2 = reg.tau_max * factor, reg.tau_min * factor
    z[m + n] = float(np.mean(M @ th0 - t1 * reg._grad(z[:m])))
    z[m + n + 1] = float(np.mean(M.T @ u0 + t2 * reg._grad(z[m : m + n])))
    sweeps = 0
    while True:
        t1, t2 = reg.tau_max * factor, reg.tau_min * factor
        z, res, steps = _newton(M, reg, t1, t2, z, max_steps=200)
        sweeps += steps
        if factor <= 1.0:
            break
        factor /= 2.0
    # the response map amplifies rounding by about |M| / tau
    floor = 1e3 * np.finfo(float).eps * (1.0 + np.abs(M).max() / t_lo)
    move = np.inf
    while sweeps < max_sweeps:
        u = softmax(z[:m])
        th = softmax(z[m : m + n])
        u_next = reg.best_response(M @ th, reg.tau_max)
        th_next = reg.best_response(-(M.T @ u), reg.tau_min)
        move = max(np.abs(u_next - u).max(), np.abs(th_next - th).max())
        sweeps += 1
        if move < max(tol, floor):
            return _make_solution(M, u, th)
        z, res, steps = _newton(M, reg, reg.tau_max, reg.tau_min, z, max_steps=50)
        sweeps += steps + 1
    gap = duality_gap(M, softmax(z[:m]), softmax(z[m : m + n]))
    raise MatrixGameError(
        f"regularized solver did not converge in {max_sweeps} sweeps (last move {move:.2e}, gap {gap:.2e})"
    )


def check_interchange(M, sol_exact: MatrixGameSolution, sol_approx: MatrixGameSolution, eps: float) -> bool:
    """Cross pairs of an exact NE and an ``eps``-NE are ``2 eps``-NE."""
    M = _check_matrix(M)
    m, n = M.shape
    for s in (sol_exact, sol_approx):
        if s.u.shape != (m,) or s.theta.shape != (n,):
            raise MatrixGameError("solution dimensions do not match the payoff matrix")
    g1 = duality_gap(M, sol_exact.u, sol_approx.theta)
    g2 = duality_gap(M, sol_approx.u, sol_exact.theta)
    return bool(max(g1, g2) <= 2.0 * eps + 1e-8)


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def smoothness_constant(M, reg: RegularizerSpec, delta: float = 1e-3, trials: int = 20, seed: int = 0) -> float:
    """Empirical ``max TV(solution change) / ||dM||_max`` over random perturbations."""
    M = _check_matrix(M)
    rng = np.random.default_rng(seed)
    base = solve_regularized(M, reg)
    worst = 0.0
    for _ in range(trials):
        dM = rng.uniform(-delta, delta, size=M.shape)
        norm = np.abs(dM).max()
        sol = solve_regularized(M + dM, reg)
        ratio = max(tv_distance(sol.u, base.u), tv_distance(sol.theta, base.theta)) / norm
        worst = max(worst, ratio)
    return worst

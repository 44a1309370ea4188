"""Discretized L1 (fuel-optimal) control and feasibility/minimum-time search.

The continuous problem

    minimize    sum_i lambda_i * integral |u_i(t)| dt
    subject to  dx/dt = A x + B u,  x(0) = x0,  x(T) = 0,  |u_i(t)| <= 1

is sampled on a uniform grid of N zero-order-hold intervals, which turns the
terminal condition into the linear equation ``G u = c`` and leaves a
box-constrained weighted L1 program. That program is solved by a two-block
operator-splitting (ADMM) iteration: one block projects onto ``{G u = c}``,
the other applies a weighted soft threshold and clips to the box.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateProgramError, InvalidInputError, UnboundedSearchError
from .model import PlantModel, discretize_zoh, is_controllable

__all__ = [
    "ControlProblem",
    "ReachabilityProgram",
    "AdmmSettings",
    "SolveResult",
    "default_grid_size",
    "build_reachability",
    "solve_l1",
    "check_feasible",
    "minimum_time",
    "l0_measure",
    "l0_per_channel",
]

L0_THRESHOLD = 1e-3
MAX_GRID = 5000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERS = "max_iters"


def default_grid_size(T, n):
    return int(min(max(100 * math.ceil(T), n), MAX_GRID))


@dataclass(eq=False)
class ControlProblem:
    plant: PlantModel
    x0: np.ndarray
    T: float
    N: int = None
    lam: np.ndarray = None

    def __post_init__(self):
        n, m = self.plant.n, self.plant.m
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.x0.shape != (n,):
            raise InvalidInputError(f"x0 must have length {n}, got {self.x0.shape[0]}")
        if not np.all(np.isfinite(self.x0)):
            raise InvalidInputError("x0 must be finite")
        if not (np.isfinite(self.T) and self.T > 0):
            raise InvalidInputError(f"horizon T must be positive, got {self.T}")
        self.T = float(self.T)
        if self.N is None:
            self.N = default_grid_size(self.T, n)
        self.N = int(self.N)
        if self.N < n or self.N * m < n:
            raise InvalidInputError(f"grid size N={self.N} too small for n={n}")
        if self.lam is None:
            self.lam = np.ones(m)
        self.lam = np.asarray(self.lam, dtype=float).reshape(-1)
        if self.lam.shape != (m,):
            raise InvalidInputError(f"lambda must have length {m}")
        if not np.all(self.lam > 0):
            raise InvalidInputError("channel weights must be strictly positive")

    @property
    def dt(self):
        return self.T / self.N


@dataclass(eq=False)
class ReachabilityProgram:
    """``G u = c`` with ``u`` the row-major flattening of the N-by-m sample grid."""

    G: np.ndarray
    c: np.ndarray
    w: np.ndarray
    dt: float
    N: int
    m: int
    box_bound: float = 1.0
    warning: str = None


@dataclass
class AdmmSettings:
    rho: float = 1.0
    max_iter: int = 20000
    eps_abs: float = 1e-8
    eps_rel: float = 1e-6
    eps_feas: float = 1e-6
    alpha: float = 1.6
    adaptive_rho: bool = True
    stall_window: int = 500
    polish: bool = True
    check_every: int = 100

    def __post_init__(self):
        for name in ("rho", "max_iter", "eps_abs", "eps_rel", "eps_feas"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if not 0 < self.alpha < 2:
            raise InvalidInputError("relaxation alpha must lie in (0, 2)")


@dataclass(eq=False)
class SolveResult:
    u: np.ndarray
    status: str
    J1: float
    J0: float
    iterations: int
    primal_residual: float
    dual_residual: float
    terminal_residual: float = float("nan")
    polished: bool = False
    info: dict = field(default_factory=dict)


def build_reachability(problem):
    """Assemble ``G`` and ``c`` so that a grid control reaches the origin iff ``G u = c``.

    Block column k is ``Ad^(N-1-k) Bd`` and multiplies the sample held on
    ``[k dt, (k+1) dt)``; ``c = -Ad^N x0``.
    """
    plant = problem.plant
    n, m, N = plant.n, plant.m, problem.N
    sysd = discretize_zoh(plant, problem.dt)
    G = np.empty((n, N * m))
    block = sysd.Bd.copy()
    for k in range(N - 1, -1, -1):
        G[:, k * m:(k + 1) * m] = block
        block = sysd.Ad @ block
    AdN = np.linalg.matrix_power(sysd.Ad, N)
    c = -AdN @ problem.x0
    w = np.tile(problem.lam, N) * problem.dt
    note = None
    controllable, rank = is_controllable(plant)
    if not controllable:
        note = (f"plant is not controllable (Kalman rank {rank} < {n}); "
                "the program may still be feasible for this x0")
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return ReachabilityProgram(G=G, c=c, w=w, dt=problem.dt, N=N, m=m, warning=note)


class _AffineProjector:
    """Orthogonal projection onto ``{u : G u = c}`` with a cached Cholesky factor."""

    def __init__(self, G, c):
        self.G = G
        self.c = c
        gram = G @ G.T
        evals = np.linalg.eigvalsh(gram)
        if evals.size and (evals[-1] <= 0 or evals[0] <= 1e-13 * evals[-1]):
            raise DegenerateProgramError(
                "G G^T is numerically singular; check controllability or increase N")
        self.L = np.linalg.cholesky(gram)

    def solve_gram(self, r):
        y = np.linalg.solve(self.L, r)
        return np.linalg.solve(self.L.T, y)

    def __call__(self, v):
        return v - self.G.T @ self.solve_gram(self.G @ v - self.c)


def _shrink_clip(v, kappa, bound):
    return np.clip(np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0), -bound, bound)


def _stalled(history, window, floor):
    """True when the last ``window`` residuals improved by under 1% while above ``floor``."""
    if len(history) <= window:
        return False
    now, then = history[-1], history[-1 - window]
    return now > floor and now > 0.99 * then


def _farkas(G, c, delta, gram_solve):
    """Infeasibility certificate from a displacement ``delta`` between the two sets.

    ``delta = G^T nu`` is normal to the affine set; the sets are disjoint iff
    some ``nu`` has ``c^T nu > |G^T nu|_1``. Returns the (relative) margin.
    """
    nu = gram_solve(G @ delta)
    lhs = float(c @ nu)
    rhs = float(np.abs(G.T @ nu).sum())
    scale = max(abs(lhs), rhs, 1e-300)
    return (lhs - rhs) / scale


def _polish(program, z, tol):
    """Snap to the vertex of the feasible polytope suggested by an iterate.

    Entries within ``tol`` of {-1, 0, +1} are fixed there; the remaining free
    entries are solved (least-norm) from ``G u = c``. Returns None if the
    guess leaves the box.
    """
    bound = program.box_bound
    snap = np.where(np.abs(z) < tol, 0.0, z)
    snap = np.where(np.abs(snap - bound) < tol, bound, snap)
    snap = np.where(np.abs(snap + bound) < tol, -bound, snap)
    free = (snap != 0) & (np.abs(snap) != bound)
    G, c = program.G, program.c
    if free.sum() > 4 * G.shape[0]:
        return None
    u = np.where(free, 0.0, snap)
    rhs = c - G @ u
    if free.any():
        sol, *_ = np.linalg.lstsq(G[:, free], rhs, rcond=None)
        u[free] = sol
    if np.any(np.abs(u) > bound * (1 + 1e-12)):
        return None
    return u


def _interior_correction(program, ub):
    """Least-norm fix of ``G u = c`` using only entries strictly inside the box."""
    bound = program.box_bound
    free = np.abs(ub) < bound
    if free.sum() < program.G.shape[0]:
        return None
    Gf = program.G[:, free]
    step, *_ = np.linalg.lstsq(Gf, program.c - program.G @ ub, rcond=None)
    u = ub.copy()
    u[free] += step
    if np.any(np.abs(u) > bound):
        return None
    return u


def _dual_value(G, c, w, nu, bound):
    """Lagrange dual ``c^T nu - sum_j bound * max(0, |g_j^T nu| - w_j)``."""
    return float(c @ nu - bound * np.maximum(np.abs(G.T @ nu) - w, 0.0).sum())


def _certify(program, u, w, nu0):
    """Duality gap of ``u`` using ``nu0`` snapped to complementary slackness."""
    G, bound = program.G, program.box_bound
    frac = (np.abs(u) > 1e-12) & (np.abs(u) < bound * (1 - 1e-12))
    nu = nu0
    if frac.any():
        Gf = G[:, frac]
        target = w[frac] * np.sign(u[frac])
        corr, *_ = np.linalg.lstsq(Gf.T, target - Gf.T @ nu0, rcond=None)
        nu = nu0 + corr
    primal = float(np.sum(w * np.abs(u)))
    gaps = [primal - _dual_value(G, program.c, w, v, bound) for v in (nu, nu0)]
    return min(gaps), primal


def _residual(program, u):
    return float(np.linalg.norm(program.G @ u - program.c))


def _result(program, u, status, it, r_pri, r_dual, polished=False, **info):
    w = program.w
    grid = u.reshape(program.N, program.m)
    return SolveResult(
        u=grid,
        status=status,
        J1=float(np.sum(w * np.abs(u))),
        J0=float(np.sum(w * (np.abs(u) > L0_THRESHOLD))),
        iterations=it,
        primal_residual=float(r_pri),
        dual_residual=float(r_dual),
        terminal_residual=_residual(program, u),
        polished=polished,
        info=info,
    )


def solve_l1(program, settings=None):
    """Minimize ``sum w_j |u_j|`` subject to ``G u = c`` and ``|u_j| <= 1``.

    ADMM with over-relaxation and residual-balancing ``rho``. Every
    ``check_every`` iterations the iterate is snapped to the polytope vertex
    it suggests and a dual vector is recovered from the scaled ADMM dual; the
    solve stops as optimal once that pair has a relative duality gap below
    ``eps_rel`` (or once the plain ADMM residual test passes).

    ``status`` is ``"infeasible"`` only when the primal residual stalls above
    ``1e3 * eps_feas`` and the residual direction is a valid Farkas
    certificate; ``"max_iters"`` otherwise.
    """
    s = settings or AdmmSettings()
    G, c = program.G, program.c
    p = G.shape[1]
    if not np.any(c):
        return _result(program, np.zeros(p), OPTIMAL, 0, 0.0, 0.0, gap=0.0)
    proj = _AffineProjector(G, c)
    # objective scale does not move the minimizer; normalize so rho ~ 1 is sensible
    w = program.w / program.w.max()
    bound = program.box_bound
    rho = s.rho
    z = np.zeros(p)
    y = np.zeros(p)
    sqrt_p = math.sqrt(p)
    history = []
    r_pri = r_dual = float("inf")
    gap = float("inf")
    it = 0
    for it in range(1, s.max_iter + 1):
        x = proj(z - y)
        x_hat = s.alpha * x + (1 - s.alpha) * z
        z_old = z
        z = _shrink_clip(x_hat + y, w / rho, bound)
        y = y + x_hat - z
        r_pri = float(np.linalg.norm(x - z))
        r_dual = float(rho * np.linalg.norm(z - z_old))
        history.append(r_pri)
        eps_pri = sqrt_p * s.eps_abs + s.eps_rel * max(np.linalg.norm(x), np.linalg.norm(z))
        eps_dual = sqrt_p * s.eps_abs + s.eps_rel * rho * np.linalg.norm(y)
        if r_pri <= eps_pri and r_dual <= eps_dual and _residual(program, z) <= s.eps_feas:
            nu = proj.solve_gram(G @ (rho * y))
            gap, _ = _certify(program, z, w, nu)
            return _result(program, z, OPTIMAL, it, r_pri, r_dual, rho=rho, gap=gap)
        if s.polish and it % s.check_every == 0:
            nu = proj.solve_gram(G @ (rho * y))
            for tol in (1e-2, 1e-3, 1e-5):
                cand = _polish(program, z, tol)
                if cand is None or _residual(program, cand) > s.eps_feas:
                    continue
                gap, primal = _certify(program, cand, w, nu)
                if gap <= s.eps_rel * max(primal, 1e-12):
                    return _result(program, cand, OPTIMAL, it, r_pri, r_dual,
                                   polished=True, rho=rho, gap=gap)
        if _stalled(history, s.stall_window, 1e3 * s.eps_feas):
            if _farkas(G, c, x - z, proj.solve_gram) > 1e-9:
                return _result(program, z, INFEASIBLE, it, r_pri, r_dual, rho=rho)
            history.clear()
        if s.adaptive_rho and it % 50 == 0:
            if r_pri > 10 * r_dual:
                rho *= 2.0
                y /= 2.0
            elif r_dual > 10 * r_pri:
                rho /= 2.0
                y *= 2.0
    return _result(program, z, MAX_ITERS, it, r_pri, r_dual, rho=rho, gap=gap)


def check_feasible(program, settings=None):
    """Alternating projections between ``{G u = c}`` and the box.

    Returns ``(feasible, gap)`` where ``gap`` is the final distance between
    the two projections. Besides the plain gap test, every ``check_every``
    sweeps the box iterate is corrected on its interior entries, which
    settles feasible instances close to the boundary quickly. A stall is
    reported as infeasible only with a Farkas certificate.
    """
    s = settings or AdmmSettings()
    G, c = program.G, program.c
    if not np.any(c):
        return True, 0.0
    proj = _AffineProjector(G, c)
    bound = program.box_bound
    ub = np.zeros(G.shape[1])
    history = []
    gap = float("inf")
    for it in range(1, s.max_iter + 1):
        ua = proj(ub)
        ub = np.clip(ua, -bound, bound)
        gap = float(np.linalg.norm(ua - ub))
        if gap <= s.eps_feas:
            return True, gap
        if it % s.check_every == 0:
            cand = _interior_correction(program, ub)
            if cand is not None and _residual(program, cand) <= s.eps_feas:
                return True, gap
        history.append(gap)
        if _stalled(history, s.stall_window, 1e3 * s.eps_feas):
            if _farkas(G, c, ua - ub, proj.solve_gram) > 1e-9:
                return False, gap
            history.clear()
    return False, gap


def minimum_time(plant, x0, N_per_unit=100, tol=1e-3, settings=None, T_cap=None):
    """Smallest horizon (to ``tol``) for which ``x0`` can be steered to the origin.

    Brackets by doubling from 1.0, then bisects on :func:`check_feasible`.
    Returns the upper (feasible) end of the final bracket.

    Raises
    ------
    UnboundedSearchError
        If no feasible horizon exists below ``T_cap`` (default: ten times
        ``max(1, |x0| / |B|)``).
    """
    x0 = np.asarray(x0, dtype=float).reshape(plant.n)
    if not np.any(x0):
        return 0.0
    if T_cap is None:
        T_cap = 10.0 * max(1.0, np.linalg.norm(x0) / np.linalg.norm(plant.B, 2))

    def feasible(T):
        N = int(min(max(math.ceil(N_per_unit * T), plant.n), MAX_GRID))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            program = build_reachability(ControlProblem(plant, x0, T, N=N))
        try:
            return check_feasible(program, settings)[0]
        except DegenerateProgramError:
            return False

    lo, hi = 0.0, min(1.0, T_cap)
    while not feasible(hi):
        lo = hi
        if hi >= T_cap:
            raise UnboundedSearchError(
                f"no feasible horizon found up to T={T_cap:g}")
        hi = min(2.0 * hi, T_cap)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def l0_per_channel(u, dt, threshold=L0_THRESHOLD):
    """Time each channel spends with ``|u| > threshold`` (length-m array)."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    return dt * np.count_nonzero(np.abs(u) > threshold, axis=0).astype(float)


def l0_measure(u, dt, threshold=L0_THRESHOLD, weights=None):
    """Grid approximation of the weighted support measure ``sum_i lambda_i |supp u_i|``."""
    per = l0_per_channel(u, dt, threshold)
    if weights is None:
        weights = np.ones_like(per)
    return float(np.dot(np.asarray(weights, dtype=float), per))

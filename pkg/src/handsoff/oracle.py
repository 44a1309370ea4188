"""Exhaustive search over ternary piecewise-constant controls (test oracle).

Independent of the convex solver: it never looks at the L1 program. For a
single-input plant with n <= 2 it enumerates every signal with values in
{-1, 0, +1} and at most ``K_max`` switches whose switch instants lie on a
uniform grid of ``grid`` cells, keeps the ones whose terminal state is within
a rounding tolerance of the origin, and then refines the best candidates by
moving switch instants continuously until the exact terminal state vanishes.

For ternary signals fuel and support coincide (|u| is 0 or 1), so the
minimum-J0 and minimum-J1 certificates are the same signal.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .errors import ComplexityGuardError, InvalidInputError
from .model import discretize_zoh, expm, propagate_segment
from .structure import ChannelSignal, SwitchingSignal

__all__ = ["OracleResult", "oracle_bang_off_bang", "terminal_state"]

MAX_STATES = 2
MAX_SWITCHES = 4
MAX_GRID = 200


@dataclass
class OracleResult:
    signal: SwitchingSignal
    J1: float
    J0: float
    feasible: bool
    terminal_error: float
    tolerance: float
    candidates: int = 0


def terminal_state(plant, x0, signal):
    """Exact state at ``signal.T`` after applying ``signal`` segment by segment."""
    x = np.asarray(x0, dtype=float).reshape(plant.n)
    for t0, t1, values in signal.segments():
        x = propagate_segment(plant, x, values, t1 - t0)
    return x


def _value_patterns(K):
    """All value sequences v_0..v_K over {-1, 0, 1} with adjacent entries distinct."""
    out = []
    for v0 in (-1, 0, 1):
        seqs = [(v0,)]
        for _ in range(K):
            seqs = [s + (v,) for s in seqs for v in (-1, 0, 1) if v != s[-1]]
        out.extend(seqs)
    return out


def _combos(M, k):
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.combinations(range(1, M), k)), dtype=np.int64)


class _GridSearch:
    """Prefix sums of per-cell input responses: ``P[i] = sum_{k<i} g_k``.

    With values v_0..v_K and switch cells i_1 < ... < i_K the terminal state is
    ``free + v_K P[M] + sum_j (v_{j-1} - v_j) P[i_j]``.
    """

    def __init__(self, plant, x0, T, M):
        self.M = M
        self.h = T / M
        cell = discretize_zoh(plant, self.h)
        g = np.empty((M, plant.n))
        col = cell.Bd[:, 0]
        for k in range(M - 1, -1, -1):
            g[k] = col
            col = cell.Ad @ col
        # whiten by the grid Gramian so that "close to the origin" weighs
        # every state direction by how hard it is to reach
        gram = g.T @ g
        evals, evecs = np.linalg.eigh(gram)
        S = evecs @ np.diag(1.0 / np.sqrt(np.maximum(evals, 1e-300))) @ evecs.T
        g = g @ S.T
        self.P = np.vstack([np.zeros(plant.n), np.cumsum(g, axis=0)])
        self.free = S @ (expm(plant.A * T) @ x0)
        gnorm = np.linalg.norm(g, axis=1)
        self.gmax = float(gnorm.max())
        # half-cell shift of a switch at boundary i moves the state by at most this
        self.edge_tol = np.zeros(M + 1)
        self.edge_tol[1:M] = 0.5 * np.maximum(gnorm[:-1], gnorm[1:]) * (1 + 1e-9)
        self._combos = {}

    def combos(self, k):
        if k not in self._combos:
            self._combos[k] = _combos(self.M, k)
        return self._combos[k]

    def candidates(self, pattern, cap=np.inf, keep=2, block=512):
        """Grid signals for ``pattern`` that land near the origin.

        "Near" means within the worst-case effect of moving every switch of an
        exact solution by half a cell, so the rounding of any exact solution
        whose switches are at least a cell apart is always among the hits.
        Returns up to ``keep`` ``(support, switch_cells)`` pairs with support
        at most ``cap``, lowest support first.
        """
        K = len(pattern) - 1
        M, h = self.M, self.h
        d = np.array([pattern[j - 1] - pattern[j] for j in range(1, K + 1)], dtype=float)
        on = np.array([pattern[j] != 0 for j in range(K + 1)], dtype=float)
        coef = on[:-1] - on[1:]
        base = self.free + pattern[-1] * self.P[M]
        const = on[-1] * M
        if K == 0:
            if np.linalg.norm(base) <= 0.5 * self.gmax and const * h <= cap:
                return [(const * h, np.zeros(0, dtype=np.int64))]
            return []
        a = K // 2
        left = self.combos(a)
        right = self.combos(K - a)
        Lcost = left @ coef[:a]
        Rcost = right @ coef[a:]
        # support is separable in the switch cells; with the ordering
        # i_a < i_(a+1) each half gets a tight lower bound from the other
        first = right[:, 0]
        last = left[:, -1] if a else np.zeros(len(left), dtype=np.int64)
        r_by_first = np.full(M + 1, np.inf)
        np.minimum.at(r_by_first, first, Rcost)
        r_after = np.minimum.accumulate(r_by_first[::-1])[::-1]   # min over first >= i
        l_by_last = np.full(M + 1, np.inf)
        np.minimum.at(l_by_last, last, Lcost)
        l_before = np.minimum.accumulate(l_by_last)                # min over last <= i
        Lbound = Lcost + r_after[np.minimum(last + 1, M)]
        Rbound = Rcost + l_before[first - 1]
        budget = cap / h - const if np.isfinite(cap) else np.inf
        lkeep = Lbound <= budget + 1e-9
        rkeep = Rbound <= budget + 1e-9
        left, Lcost = left[lkeep], Lcost[lkeep]
        right, Rcost, Rbound = right[rkeep], Rcost[rkeep], Rbound[rkeep]
        if not len(left) or not len(right):
            return []
        Lpts = np.einsum("rkn,k->rn", self.P[left], d[:a])
        Ltol = self.edge_tol[left] @ np.abs(d[:a])
        Rpts = -np.einsum("rkn,k->rn", self.P[right], d[a:]) - base
        Rtol = self.edge_tol[right] @ np.abs(d[a:])
        radius = Ltol.max() + Rtol.max()
        ltree = cKDTree(Lpts)
        best = []
        order = np.argsort(Rbound, kind="stable")
        for start in range(0, len(order), block):
            chunk = order[start:start + block]
            bar = min(cap / h - const, best[-1][0] / h - const if len(best) == keep else np.inf)
            if Rbound[chunk[0]] > bar + 1e-9:
                break
            pairs = ltree.sparse_distance_matrix(
                cKDTree(Rpts[chunk]), radius, output_type="ndarray")
            if pairs.size == 0:
                continue
            li, ri, dist = pairs["i"], chunk[pairs["j"]], pairs["v"]
            ok = dist <= Ltol[li] + Rtol[ri]
            if a:
                ok &= left[li, -1] < right[ri, 0]
            cost = (Lcost[li] + Rcost[ri] + const) * h
            ok &= cost <= cap + 1e-12
            li, ri, cost = li[ok], ri[ok], cost[ok]
            for k in np.argsort(cost, kind="stable")[:keep]:
                best.append((float(cost[k]), np.concatenate([left[li[k]], right[ri[k]]])))
            best.sort(key=lambda item: item[0])
            del best[keep:]
        return best


def _signal(pattern, times, T):
    switches = tuple((float(t), int(v)) for t, v in zip(times, pattern[1:]))
    return SwitchingSignal(T=T, channels=(ChannelSignal(int(pattern[0]), switches),))


def _clean(pattern, t, T, gap=1e-10):
    """Drop zero-length segments and merge equal neighbours."""
    vals = list(pattern)
    times = [float(x) for x in t]
    changed = True
    while changed:
        changed = False
        edges = [0.0] + times + [T]
        for j in range(len(vals)):
            if edges[j + 1] - edges[j] > gap or len(vals) == 1:
                continue
            # segment j (value vals[j]) has collapsed
            if j == 0:
                del vals[0], times[0]
            elif j == len(vals) - 1:
                del vals[-1], times[-1]
            elif vals[j - 1] == vals[j + 1]:
                del vals[j:j + 2], times[j - 1:j + 1]
            else:
                del vals[j], times[j]
            changed = True
            break
    return tuple(vals), np.array(times)


class _Structure:
    """Terminal map and support of a fixed value pattern as functions of switch instants."""

    def __init__(self, plant, x0, pattern, T):
        self.plant, self.x0, self.T = plant, x0, T
        self.pattern = tuple(pattern)
        self.d = np.array([pattern[j - 1] - pattern[j] for j in range(1, len(pattern))],
                          dtype=float)
        on = np.array([v != 0 for v in pattern], dtype=float)
        self.coef = on[:-1] - on[1:]
        self.tail = on[-1] * T

        self.gamma_T = self._gamma(T)
        self.offset = expm(plant.A * T) @ x0 + pattern[-1] * self.gamma_T

    def _gamma(self, tau):
        # integral of exp(A s) b over [0, tau]
        if tau <= 0:
            return np.zeros(self.plant.n)
        return discretize_zoh(self.plant, tau).Bd[:, 0]

    def residual(self, t):
        # terminal state; also defined (smoothly) for unordered instants
        r = self.offset.copy()
        for dj, tj in zip(self.d, t):
            r += dj * (self.gamma_T - self._gamma(self.T - min(max(tj, 0.0), self.T)))
        return r

    def jacobian(self, t):
        b = self.plant.B[:, 0]
        A = self.plant.A
        return np.column_stack(
            [self.d[j] * (expm(A * (self.T - t[j])) @ b) for j in range(len(t))])

    def support(self, t):
        return float(self.coef @ t + self.tail)


def _ordered(t, T):
    return bool(np.all(np.diff(t) > 0) and (t.size == 0 or (t[0] > 0 and t[-1] < T)))


def _newton(st, t, tol, max_iter=50):
    """Minimum-norm Gauss-Newton on the switch instants, with step halving."""
    T = st.T
    if not _ordered(t, T):
        return None
    r = st.residual(t)
    for _ in range(max_iter):
        err = np.linalg.norm(r)
        if err <= tol:
            return t
        if t.size == 0:
            return None
        step, *_ = np.linalg.lstsq(st.jacobian(t), -r, rcond=None)
        for _ in range(12):
            cand = t + step
            if _ordered(cand, T):
                r_new = st.residual(cand)
                if np.linalg.norm(r_new) < err:
                    t, r = cand, r_new
                    break
            step = 0.5 * step
        else:
            return None
    return None


def _descend(st, t):
    """Lower the support along the feasible set of switch instants (SLSQP)."""
    K = t.size
    if K == 0 or not np.any(st.coef):
        return t
    cons = [{"type": "eq", "fun": st.residual, "jac": st.jacobian}]
    if K > 1:
        D = np.diff(np.eye(K), axis=0)
        cons.append({"type": "ineq", "fun": lambda x: D @ x, "jac": lambda x: D})
    res = minimize(st.support, t, jac=lambda x: st.coef, method="SLSQP",
                   bounds=[(0.0, st.T)] * K, constraints=cons,
                   options={"maxiter": 100, "ftol": 1e-12})
    return np.clip(res.x, 0.0, st.T)


def _refine(plant, x0, pattern, times, T, tol):
    """Exact certificate near a grid hit: feasibility, then lower support, then feasibility."""
    st = _Structure(plant, x0, pattern, T)
    t = _newton(st, np.array(times, dtype=float), tol)
    if t is None:
        return None
    best = (st.support(t), _signal(pattern, t, T))
    pattern2, t2 = _clean(pattern, _descend(st, t), T)
    st2 = _Structure(plant, x0, pattern2, T)
    t2 = _newton(st2, t2, tol)
    if t2 is not None and st2.support(t2) < best[0]:
        best = (st2.support(t2), _signal(pattern2, t2, T))
    sig = best[1]
    return sig, float(np.linalg.norm(terminal_state(plant, x0, sig)))


def oracle_bang_off_bang(plant, x0, T, K_max=4, grid=200, tol=None, refine_top=3):
    """Brute-force minimum-support ternary control for small single-input plants.

    Parameters
    ----------
    plant : PlantModel
        Must have ``m == 1`` and ``n <= 2``.
    x0 : array_like
        Initial state.
    T : float
        Horizon.
    K_max : int
        Largest number of switches considered (at most 4).
    grid : int
        Number of cells of the switch-instant grid (at most 200).
    tol : float, optional
        Terminal-state tolerance of the refined certificate. Defaults to
        ``1e-9 * (1 + |x0|)``.

    Returns
    -------
    OracleResult
        ``feasible`` is False when no candidate could be refined to an exact
        certificate.
    """
    if plant.m != 1 or plant.n > MAX_STATES:
        raise ComplexityGuardError(
            f"oracle limited to m == 1 and n <= {MAX_STATES}, got n={plant.n}, m={plant.m}")
    if not 0 <= K_max <= MAX_SWITCHES:
        raise ComplexityGuardError(f"oracle limited to K_max <= {MAX_SWITCHES}")
    if not 1 <= grid <= MAX_GRID:
        raise ComplexityGuardError(f"oracle limited to grid <= {MAX_GRID} cells")
    if not T > 0:
        raise InvalidInputError("horizon must be positive")
    x0 = np.asarray(x0, dtype=float).reshape(plant.n)
    if tol is None:
        tol = 1e-9 * (1.0 + np.linalg.norm(x0))
    if not np.any(x0):
        zero = SwitchingSignal.zero(1, T)
        return OracleResult(zero, 0.0, 0.0, True, 0.0, tol)

    search = _GridSearch(plant, x0, T, grid)
    h = search.h
    best = None
    cap = np.inf
    examined = 0
    for K in range(K_max + 1):
        level = []
        for pattern in _value_patterns(K):
            for cost, cells in search.candidates(pattern, cap=cap):
                level.append((cost, pattern, cells * h))
        examined += len(level)
        level.sort(key=lambda item: item[0])
        successes = 0
        for attempt, (_, pattern, times) in enumerate(level):
            if successes >= refine_top or attempt >= 8 * refine_top:
                break
            refined = _refine(plant, x0, pattern, times, T, tol)
            if refined is None:
                continue
            successes += 1
            sig, err = refined
            J0 = sig.fuel()
            if best is None or J0 < best[0]:
                best = (J0, sig, err)
        if best is not None:
            # rounding an exact K-switch solution moves its support by <= K h / 2
            cap = best[0] + 0.5 * K_max * h + h
    if best is None:
        return OracleResult(SwitchingSignal.zero(1, T), float("nan"), float("nan"),
                            False, float("nan"), tol, examined)
    J0, sig, err = best
    return OracleResult(sig, J0, J0, True, err, tol, examined)

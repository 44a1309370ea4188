"""Dense kernels for small matrices: matrix exponential, eigenvalues, rank.

Everything here works on plain ``numpy`` arrays and is written for the
desk-scale sizes this package deals with (n up to a few dozen).
"""

import numpy as np

from .errors import DimensionError, InvalidInputError, NumericalFailure

__all__ = ["expm", "hessenberg", "eigvals", "numerical_rank"]

# Pade numerator coefficients b_k for degrees 3, 5, 7, 9, 13, and the
# 1-norm thresholds below which each degree reaches double precision.
_PADE_COEFFS = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
         960960.0, 16380.0, 182.0, 1.0),
}
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _as_square(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


def _pade(M, degree):
    b = _PADE_COEFFS[degree]
    n = M.shape[0]
    ident = np.eye(n)
    M2 = M @ M
    if degree == 13:
        M4 = M2 @ M2
        M6 = M2 @ M4
        U = M @ (M6 @ (b[13] * M6 + b[11] * M4 + b[9] * M2)
                 + b[7] * M6 + b[5] * M4 + b[3] * M2 + b[1] * ident)
        V = (M6 @ (b[12] * M6 + b[10] * M4 + b[8] * M2)
             + b[6] * M6 + b[4] * M4 + b[2] * M2 + b[0] * ident)
    else:
        powers = [ident, M2]
        for _ in range(2, degree // 2 + 1):
            powers.append(powers[-1] @ M2)
        U = sum(b[2 * k + 1] * powers[k] for k in range(degree // 2 + 1))
        U = M @ U
        V = sum(b[2 * k] * powers[k] for k in range(degree // 2 + 1))
    return np.linalg.solve(V - U, V + U)


def expm(M):
    """Matrix exponential by scaling and squaring with a Pade approximant.

    The approximant degree is picked from the 1-norm of ``M`` (degree 13
    plus ``s`` squarings for large norms), following the classical
    backward-error thresholds.

    Parameters
    ----------
    M : (n, n) array_like
        Real square matrix with finite entries.

    Returns
    -------
    ndarray
        ``exp(M)``.
    """
    M = _as_square(M)
    if M.shape[0] == 0:
        return M.copy()
    norm1 = np.abs(M).sum(axis=0).max()
    for degree in (3, 5, 7, 9):
        if norm1 <= _THETA[degree]:
            return _pade(M, degree)
    s = 0
    if norm1 > _THETA[13]:
        s = max(0, int(np.ceil(np.log2(norm1 / _THETA[13]))))
    E = _pade(M / 2.0 ** s, 13)
    for _ in range(s):
        E = E @ E
    return E


def hessenberg(A):
    """Upper Hessenberg form of ``A`` by Householder similarity transforms.

    Returns a complex array similar to ``A``; only the eigenvalues of the
    result are used downstream, so the transforms are not accumulated.
    """
    H = np.array(A, dtype=complex)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        H[k + 1:, k:] -= 2.0 * np.outer(v, v.conj() @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v.conj())
        H[k + 2:, k] = 0.0
    return H


def _givens(x, y):
    r = np.hypot(abs(x), abs(y))
    if r == 0.0:
        return 1.0 + 0j, 0j
    return x / r, y / r


def _qr_sweep(H, lo, hi, mu):
    """One shifted QR step ``RQ + mu*I`` on the active block H[lo:hi+1, lo:hi+1]."""
    idx = slice(lo, hi + 1)
    for k in range(lo, hi + 1):
        H[k, k] -= mu
    rotations = []
    for k in range(lo, hi):
        c, s = _givens(H[k, k], H[k + 1, k])
        rk = H[k, idx].copy()
        rk1 = H[k + 1, idx].copy()
        H[k, idx] = c.conjugate() * rk + s.conjugate() * rk1
        H[k + 1, idx] = -s * rk + c * rk1
        rotations.append((c, s))
    for k, (c, s) in zip(range(lo, hi), rotations):
        rows = slice(lo, min(k + 2, hi) + 1)
        ck = H[rows, k].copy()
        ck1 = H[rows, k + 1].copy()
        H[rows, k] = c * ck + s * ck1
        H[rows, k + 1] = -s.conjugate() * ck + c.conjugate() * ck1
    for k in range(lo, hi + 1):
        H[k, k] += mu


def eigvals(A, max_iter=None):
    """Eigenvalues of a small dense matrix via Hessenberg reduction + shifted QR.

    Uses single Wilkinson shifts in complex arithmetic with deflation on
    negligible subdiagonal entries. For real input, imaginary parts at
    roundoff level are snapped to zero.

    Raises
    ------
    NumericalFailure
        If the total number of QR sweeps exceeds ``max_iter``
        (default ``100 * n``).
    """
    A = _as_square(A)
    n = A.shape[0]
    if max_iter is None:
        max_iter = 100 * n
    H = hessenberg(A)
    eps = np.finfo(float).eps
    scale = max(np.abs(H).max(), np.finfo(float).tiny)
    lam = np.zeros(n, dtype=complex)
    hi = n - 1
    sweeps = 0
    since_deflation = 0
    while hi >= 0:
        if hi == 0:
            lam[0] = H[0, 0]
            break
        lo = hi
        while lo > 0:
            off = abs(H[lo, lo - 1])
            diag = abs(H[lo - 1, lo - 1]) + abs(H[lo, lo])
            if off <= eps * (diag if diag > 0 else scale):
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            lam[hi] = H[hi, hi]
            hi -= 1
            since_deflation = 0
            continue
        sweeps += 1
        since_deflation += 1
        if sweeps > max_iter:
            raise NumericalFailure(
                f"QR iteration did not converge after {max_iter} sweeps "
                f"({hi + 1} eigenvalues unresolved)")
        a, b = H[hi - 1, hi - 1], H[hi - 1, hi]
        c, d = H[hi, hi - 1], H[hi, hi]
        if since_deflation % 11 == 10:
            # exceptional shift to break cycles
            mu = d + 0.75 * abs(c)
        else:
            half = 0.5 * (a - d)
            disc = np.sqrt(half * half + b * c)
            mu1 = 0.5 * (a + d) + disc
            mu2 = 0.5 * (a + d) - disc
            mu = mu1 if abs(mu1 - d) <= abs(mu2 - d) else mu2
        _qr_sweep(H, lo, hi, mu)
    snap = 1e-12 * np.maximum(1.0, np.abs(lam))
    lam = np.where(np.abs(lam.imag) <= snap, lam.real + 0j, lam)
    return lam


def numerical_rank(M, rtol=1e-10):
    """Rank by Householder QR with column pivoting.

    A diagonal entry of R counts toward the rank when it exceeds
    ``rtol * |R[0, 0]|`` (``|R[0, 0]|`` is the largest-column-norm proxy for
    the top singular value).
    """
    R = np.array(M, dtype=float)
    if R.ndim != 2:
        raise DimensionError("rank needs a 2-D array")
    rows, cols = R.shape
    if R.size == 0:
        return 0
    diag = []
    for k in range(min(rows, cols)):
        norms = np.einsum("ij,ij->j", R[k:, k:], R[k:, k:])
        p = k + int(np.argmax(norms))
        if p != k:
            R[:, [k, p]] = R[:, [p, k]]
        x = R[k:, k]
        alpha = np.linalg.norm(x)
        diag.append(alpha)
        if alpha == 0.0:
            break
        v = x.copy()
        v[0] += np.copysign(alpha, x[0]) if x[0] != 0 else alpha
        v /= np.linalg.norm(v)
        R[k:, k:] -= 2.0 * np.outer(v, v @ R[k:, k:])
    if not diag or diag[0] == 0.0:
        return 0
    return int(sum(1 for r in diag if r > rtol * diag[0]))

"""Linear time-invariant plants ``dx/dt = A x + B u`` and their exact kernels."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidInputError
from .linalg import eigvals, expm, numerical_rank

__all__ = [
    "PlantModel",
    "DiscretizedSystem",
    "SpectralInfo",
    "expm",
    "discretize_zoh",
    "controllability_matrix",
    "is_controllable",
    "spectral_info",
    "propagate_segment",
    "plant_from_dict",
]

SINGULAR_RTOL = 1e-9
RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class PlantModel:
    """Continuous-time plant ``dx/dt = A x + B u`` with ``x`` in R^n, ``u`` in R^m."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise DimensionError(f"A must be a non-empty square matrix, got {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0] or B.shape[1] < 1:
            raise DimensionError(
                f"B must have {A.shape[0]} rows and at least one column, got {B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise InvalidInputError("plant matrices must be finite")
        A.flags.writeable = False
        B.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def to_dict(self):
        return {"A": self.A.tolist(), "B": self.B.tolist()}


@dataclass(frozen=True, eq=False)
class DiscretizedSystem:
    """Zero-order-hold sampling of a plant: ``x[k+1] = Ad x[k] + Bd u[k]``."""

    Ad: np.ndarray
    Bd: np.ndarray
    dt: float


@dataclass(frozen=True)
class SpectralInfo:
    eigenvalues: tuple
    omega: float
    a_nonsingular: bool


def discretize_zoh(plant, dt):
    """Exact ZOH discretization from one exponential of ``[[A, B], [0, 0]] * dt``."""
    if not dt > 0:
        raise InvalidInputError(f"time step must be positive, got {dt}")
    n, m = plant.n, plant.m
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = plant.A
    aug[:n, n:] = plant.B
    E = expm(aug * dt)
    return DiscretizedSystem(Ad=E[:n, :n], Bd=E[:n, n:], dt=float(dt))


def controllability_matrix(plant):
    blocks = [plant.B]
    for _ in range(plant.n - 1):
        blocks.append(plant.A @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(plant, rtol=RANK_RTOL):
    """Kalman rank test on ``[B, AB, ..., A^(n-1) B]``.

    Returns
    -------
    (bool, int)
        Whether the rank equals n, and the numerical rank itself.
    """
    rank = numerical_rank(controllability_matrix(plant), rtol=rtol)
    return rank == plant.n, rank


def spectral_info(A):
    lam = eigvals(A)
    mags = np.abs(lam)
    omega = float(np.max(np.abs(lam.imag))) if lam.size else 0.0
    nonsingular = bool(mags.min() > SINGULAR_RTOL * max(1.0, mags.max()))
    return SpectralInfo(eigenvalues=tuple(complex(z) for z in lam),
                        omega=omega, a_nonsingular=nonsingular)


def propagate_segment(plant, x, u_const, tau):
    """State after holding ``u_const`` for ``tau`` seconds, starting from ``x``."""
    if tau < 0:
        raise InvalidInputError(f"duration must be non-negative, got {tau}")
    x = np.asarray(x, dtype=float).reshape(plant.n)
    if tau == 0:
        return x.copy()
    u = np.asarray(u_const, dtype=float).reshape(plant.m)
    sysd = discretize_zoh(plant, tau)
    return sysd.Ad @ x + sysd.Bd @ u


def plant_from_dict(doc):
    """Build a plant from the JSON fragment ``{"A": [[...]], "B": [[...]]}``."""
    try:
        A, B = doc["A"], doc["B"]
    except (KeyError, TypeError) as exc:
        raise InvalidInputError("plant needs fields 'A' and 'B'") from exc
    try:
        A = np.array(A, dtype=float)
        B = np.array(B, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DimensionError(f"ragged or non-numeric matrix: {exc}") from exc
    if B.ndim != 2:
        raise DimensionError(f"B must be a nested (2-D) array, got {B.ndim}-D")
    return PlantModel(A, B)

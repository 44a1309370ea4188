"""Ternary switching signals: extraction from grid samples, structural checks, bit budgets."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .model import is_controllable, spectral_info

__all__ = [
    "ChannelSignal",
    "SwitchingSignal",
    "StructureReport",
    "extract_switching",
    "verify_structure",
    "switching_bound",
    "theoretical_bits",
]

LEVELS = (-1, 0, 1)


@dataclass(frozen=True)
class ChannelSignal:
    """One channel: ``init`` on [0, t_1), then ``switches[j] = (t_j, value)``."""

    init: int
    switches: tuple = ()

    def values(self):
        return [self.init] + [v for _, v in self.switches]

    def times(self):
        return [t for t, _ in self.switches]


@dataclass(frozen=True)
class SwitchingSignal:
    """Piecewise-constant control with values in {-1, 0, +1} on [0, T]."""

    T: float
    channels: tuple

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise InvalidInputError(f"horizon must be positive and finite, got {self.T}")
        chans = tuple(
            c if isinstance(c, ChannelSignal)
            else ChannelSignal(int(c[0]), tuple((float(t), int(v)) for t, v in c[1]))
            for c in self.channels)
        if not chans:
            raise InvalidInputError("signal needs at least one channel")
        for i, ch in enumerate(chans):
            object.__setattr__(ch, "switches", tuple((float(t), int(v)) for t, v in ch.switches))
            prev_v, prev_t = ch.init, 0.0
            if prev_v not in LEVELS:
                raise InvalidInputError(f"channel {i}: initial value {prev_v} not in {{-1,0,1}}")
            for t, v in ch.switches:
                if v not in LEVELS:
                    raise InvalidInputError(f"channel {i}: value {v} not in {{-1,0,1}}")
                if v == prev_v:
                    raise InvalidInputError(f"channel {i}: switch at {t} does not change value")
                if not (prev_t < t < self.T):
                    raise InvalidInputError(
                        f"channel {i}: switch times must increase strictly inside (0, T)")
                prev_v, prev_t = v, t
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "channels", chans)

    @classmethod
    def zero(cls, m, T):
        return cls(T=T, channels=tuple(ChannelSignal(0) for _ in range(m)))

    @property
    def m(self):
        return len(self.channels)

    def switch_counts(self):
        return [len(ch.switches) for ch in self.channels]

    def value_at(self, t):
        """Control vector at time ``t`` (right-continuous)."""
        out = np.empty(self.m)
        for i, ch in enumerate(self.channels):
            v = ch.init
            for ts, vs in ch.switches:
                if ts <= t:
                    v = vs
                else:
                    break
            out[i] = v
        return out

    def breakpoints(self):
        pts = {0.0, self.T}
        for ch in self.channels:
            pts.update(ch.times())
        return sorted(pts)

    def segments(self):
        """Yield ``(t0, t1, u)`` for maximal intervals on which every channel is constant."""
        pts = self.breakpoints()
        for t0, t1 in zip(pts[:-1], pts[1:]):
            yield t0, t1, self.value_at(t0)

    def sample(self, N):
        """Sample on N uniform cells (value at each cell midpoint); shape (N, m)."""
        mids = (np.arange(N) + 0.5) * (self.T / N)
        out = np.empty((N, self.m))
        for i, ch in enumerate(self.channels):
            times = np.array(ch.times())
            vals = np.array(ch.values(), dtype=float)
            out[:, i] = vals[np.searchsorted(times, mids, side="right")]
        return out

    def fuel(self):
        """Integral of sum_i |u_i| over [0, T]; equals the support measure for ternary signals."""
        return float(sum((t1 - t0) * np.abs(u).sum() for t0, t1, u in self.segments()))

    def to_json(self):
        return {
            "T": self.T,
            "channels": [
                {"init": ch.init, "switches": [[t, v] for t, v in ch.switches]}
                for ch in self.channels
            ],
        }

    @classmethod
    def from_json(cls, doc):
        try:
            chans = tuple(
                ChannelSignal(int(c["init"]),
                              tuple((float(t), int(v)) for t, v in c.get("switches", [])))
                for c in doc["channels"])
            return cls(T=float(doc["T"]), channels=chans)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidInputError):
                raise
            raise InvalidInputError(f"malformed switching signal: {exc}") from exc


@dataclass
class StructureReport:
    switch_counts: list
    total_switches: int
    bound: float
    bound_applicable: bool
    sign_flip_violations: int
    bang_bang_fraction: float
    omega: float

    @property
    def within_bound(self):
        return self.total_switches <= math.ceil(self.bound - 1e-9)


def extract_switching(u, T, eps_level=0.25):
    """Run-length encode grid samples into a :class:`SwitchingSignal`.

    Each sample is rounded to the nearest level in {-1, 0, +1}; samples
    farther than ``eps_level`` from every level are still rounded but count
    against the returned bang-bang fraction. A switch is placed at the left
    edge of the first sample of each new run.

    Returns
    -------
    (SwitchingSignal, float)
        The signal and the fraction of samples within ``eps_level`` of a level.
    """
    if not 0 < eps_level < 0.5:
        raise InvalidInputError("eps_level must lie in (0, 0.5)")
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    N = u.shape[0]
    if N == 0:
        raise InvalidInputError("no samples")
    q = np.clip(np.rint(u), -1, 1)
    close = np.abs(u - q) <= eps_level
    dt = T / N
    chans = []
    for i in range(u.shape[1]):
        col = q[:, i].astype(int)
        starts = np.nonzero(np.diff(col))[0] + 1
        switches = tuple((k * dt, int(col[k])) for k in starts)
        chans.append(ChannelSignal(int(col[0]), switches))
    return SwitchingSignal(T=T, channels=tuple(chans)), float(close.mean())


def switching_bound(n, m, T, omega):
    """Upper bound ``2 n m (1 + T omega / pi)`` on the number of discontinuities."""
    return 2.0 * n * m * (1.0 + T * omega / math.pi)


def verify_structure(signal, plant, T=None, bang_bang_fraction=1.0):
    """Check a switching signal against the bang-off-bang guarantees for ``plant``.

    Interior switches are counted (a nonzero value at t = 0 is not a
    discontinuity). The bound is always reported; ``bound_applicable`` says
    whether its hypotheses (controllable pair, nonsingular A) hold.
    """
    T = signal.T if T is None else T
    spectrum = spectral_info(plant.A)
    controllable, _ = is_controllable(plant)
    counts = signal.switch_counts()
    flips = 0
    for ch in signal.channels:
        vals = ch.values()
        flips += sum(1 for a, b in zip(vals[:-1], vals[1:]) if a * b == -1)
    return StructureReport(
        switch_counts=counts,
        total_switches=sum(counts),
        bound=switching_bound(plant.n, plant.m, T, spectrum.omega),
        bound_applicable=bool(controllable and spectrum.a_nonsingular),
        sign_flip_violations=flips,
        bang_bang_fraction=float(bang_bang_fraction),
        omega=spectrum.omega,
    )


def theoretical_bits(n, m, b, T, omega):
    """Bits to describe one horizon of a bang-off-bang control and the implied rate.

    Returns ``(1 + 2nmb(1 + T omega/pi), 1/T + 2nmb(1/T + omega/pi))``.
    """
    if min(n, m, b, T) <= 0 or omega < 0:
        raise InvalidInputError("n, m, b, T must be positive and omega non-negative")
    total = 1.0 + 2.0 * n * m * b * (1.0 + T * omega / math.pi)
    rate = 1.0 / T + 2.0 * n * m * b * (1.0 / T + omega / math.pi)
    return total, rate

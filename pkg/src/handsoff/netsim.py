"""Networked closed loop: solve, encode, transmit over a lossy channel, apply.

At each horizon start ``kT`` the controller measures the state, solves the
hands-off problem back to the origin over ``[0, T]``, extracts the switching
signal and packs it with ``b``-bit switch times. The packet is dropped if
it exceeds the bit budget or the loss draw for that horizon falls below
``loss_prob``; the plant then holds ``u = 0``. Otherwise the plant applies
the decoded (quantized) signal, propagated exactly segment by segment.
"""

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .codec import bit_count, decode, encode
from .errors import DivergenceError, InvalidInputError
from .model import propagate_segment
from .solver import AdmmSettings, ControlProblem, build_reachability, solve_l1
from .structure import SwitchingSignal, extract_switching

__all__ = [
    "ChannelModel",
    "SimConfig",
    "HorizonRecord",
    "SimTrace",
    "rng_stream",
    "rng_draw",
    "run_closed_loop",
    "sweep_bits",
]

DIVERGENCE_NORM = 1e12
_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def rng_draw(seed, k):
    """The k-th uniform draw in [0, 1) of the splitmix64 stream started at ``seed``."""
    state = (int(seed) + (k + 1) * _GOLDEN) & _MASK
    return (_mix(state) >> 11) * 2.0 ** -53


def rng_stream(seed):
    """Infinite generator of splitmix64 uniforms; item k equals ``rng_draw(seed, k)``."""
    state = int(seed) & _MASK
    while True:
        state = (state + _GOLDEN) & _MASK
        yield (_mix(state) >> 11) * 2.0 ** -53


@dataclass(frozen=True)
class ChannelModel:
    bit_budget: int = 0      # 0 means unlimited
    loss_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.bit_budget < 0:
            raise InvalidInputError("bit budget must be non-negative")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise InvalidInputError(f"loss probability must lie in [0, 1], got {self.loss_prob}")


@dataclass
class SimConfig:
    horizons: int
    T: float
    b: int = 8
    settings: AdmmSettings = None
    eps_level: float = 0.25
    terminal_tol: float = 1e-6
    n_grid: int = None
    lam: np.ndarray = None
    samples: int = 100       # dense trace points per horizon

    def __post_init__(self):
        if int(self.horizons) < 1:
            raise InvalidInputError("need at least one horizon")
        if not (math.isfinite(self.T) and self.T > 0):
            raise InvalidInputError(f"horizon length must be positive, got {self.T}")
        if self.samples < 1:
            raise InvalidInputError("need at least one sample per horizon")
        self.horizons = int(self.horizons)

    def solver_settings(self):
        base = self.settings or AdmmSettings()
        return AdmmSettings(**{**base.__dict__, "eps_feas": self.terminal_tol})


@dataclass
class HorizonRecord:
    k: int
    t0: float
    x_start: list
    status: str
    switch_count: int
    packet_bits: int
    dropped: bool
    drop_reason: str
    loss_draw: float
    open_loop_error: float
    signal: dict           # the applied signal (zero on drop)

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class SimTrace:
    n: int
    m: int
    records: list = field(default_factory=list)
    t: list = field(default_factory=list)
    x: list = field(default_factory=list)
    u: list = field(default_factory=list)
    final_state: np.ndarray = None
    total_bits: int = 0
    total_fuel: float = 0.0
    total_support: float = 0.0

    @property
    def final_error(self):
        return float(np.linalg.norm(self.final_state))

    def summary(self):
        return {
            "final_error": self.final_error,
            "final_state": [float(v) for v in self.final_state],
            "total_bits": int(self.total_bits),
            "total_fuel": float(self.total_fuel),
            "total_support": float(self.total_support),
            "horizons": len(self.records),
            "dropped": sum(r.dropped for r in self.records),
        }

    def to_json(self):
        return {"summary": self.summary(), "horizons": [r.to_dict() for r in self.records]}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(self.n)]
                   + [f"u{i + 1}" for i in range(self.m)])
        for t, x, u in zip(self.t, self.x, self.u):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x]
                       + [repr(float(v)) for v in u])
        return buf.getvalue()


def _propagate(plant, x, signal, sample_times):
    """Exact state at each of ``sample_times`` (sorted, within [0, T]) and at T."""
    pts = sorted(set(signal.breakpoints()) | set(sample_times))
    states = {0.0: x.copy()}
    for t0, t1 in zip(pts[:-1], pts[1:]):
        x = propagate_segment(plant, x, signal.value_at(t0), t1 - t0)
        states[t1] = x
    return [states[t] for t in sample_times], x


def _open_loop_error(plant, x, signal):
    return float(np.linalg.norm(_propagate(plant, x, signal, [])[1]))


def run_closed_loop(plant, x0, config, channel=None):
    """Simulate ``config.horizons`` transmissions; returns a :class:`SimTrace`.

    Raises
    ------
    DivergenceError
        If the state norm exceeds 1e12; ``horizon`` names the offending index.
    """
    channel = channel or ChannelModel()
    x = np.asarray(x0, dtype=float).reshape(plant.n)
    settings = config.solver_settings()
    T = config.T
    trace = SimTrace(n=plant.n, m=plant.m)
    local = [T * j / config.samples for j in range(config.samples)]
    for k in range(config.horizons):
        x_start = x.copy()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            problem = ControlProblem(plant, x, T, N=config.n_grid, lam=config.lam)
            result = solve_l1(build_reachability(problem), settings)
        if result.status == "infeasible":
            signal = SwitchingSignal.zero(plant.m, T)
        else:
            signal, _ = extract_switching(result.u, T, config.eps_level)
        packet = encode(signal, config.b)
        header, payload = bit_count(packet)
        bits = header + payload
        draw = rng_draw(channel.seed, k)
        reason = ""
        if channel.bit_budget and bits > channel.bit_budget:
            reason = "budget"
        elif draw < channel.loss_prob:
            reason = "loss"
        if reason != "budget":
            trace.total_bits += bits
        applied = SwitchingSignal.zero(plant.m, T) if reason else decode(packet)
        samples, x = _propagate(plant, x, applied, local)
        trace.total_fuel += applied.fuel()
        trace.total_support += applied.fuel()
        for t, xs in zip(local, samples):
            trace.t.append(k * T + t)
            trace.x.append(xs)
            trace.u.append(applied.value_at(t))
        trace.records.append(HorizonRecord(
            k=k,
            t0=k * T,
            x_start=[float(v) for v in x_start],
            status=result.status,
            switch_count=sum(signal.switch_counts()),
            packet_bits=int(bits),
            dropped=bool(reason),
            drop_reason=reason,
            loss_draw=draw,
            open_loop_error=_open_loop_error(plant, x_start, signal),
            signal=applied.to_json(),
        ))
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            raise DivergenceError(f"state norm exceeded {DIVERGENCE_NORM:g} in horizon {k}",
                                  horizon=k)
    trace.t.append(config.horizons * T)
    trace.x.append(x.copy())
    trace.u.append(np.zeros(plant.m))
    trace.final_state = x
    return trace


def sweep_bits(plant, x0, config, b_list):
    """Lossless closed loop for each ``b``; rows of ``(b, final_error, total_bits)``."""
    rows = []
    for b in b_list:
        cfg = SimConfig(**{**config.__dict__, "b": int(b)})
        trace = run_closed_loop(plant, x0, cfg, ChannelModel())
        rows.append((int(b), trace.final_error, int(trace.total_bits)))
    return rows

"""Monte Carlo oracle: Euler-Maruyama paths and threshold stopping rules.

Randomness is counter-based: the normal increment used by path i at step
k is a pure function of (seed, i, k), built from the SplitMix64 mixer and
Box-Muller.  Path i is therefore identical whatever the batch size or
thread count, and reductions run over per-path arrays in index order.

Named families run through a compiled kernel; custom coefficients fall
back to a vectorised numpy loop that uses the same random numbers.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional, Sequence

import numba
import numpy as np

from .errors import DomainError, ParameterError
from .processes import DiffusionSpec, Family

GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0**-53
_TWO_PI = 2.0 * math.pi

UNRELIABLE_FLAGGED_FRAC = 0.01
THREADS_ENV = "THRESHOLD_OPTIONS_THREADS"

# prefer layers that need no version probe; TBB is last resort
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_FAMILY_CODE = {Family.GBM: 0, Family.ABM: 1, Family.GEOMETRIC_OU: 2, Family.CIR: 3}


@dataclass(frozen=True)
class SimConfig:
    step: float
    horizon: float
    n_paths: int
    seed: int = 0
    scheme: str = "EulerMaruyama"

    def __post_init__(self):
        if not (self.step > 0.0 and math.isfinite(self.step)):
            raise ParameterError("step", f"time step must be positive, got {self.step!r}")
        if not (self.horizon >= self.step and math.isfinite(self.horizon)):
            raise ParameterError("horizon", f"horizon must be finite and >= step, got {self.horizon!r}")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ParameterError("n_paths", f"need at least one path, got {self.n_paths!r}")
        if not (0 <= int(self.seed) < 2**64):
            raise ParameterError("seed", "seed must be an unsigned 64-bit integer")
        if self.scheme != "EulerMaruyama":
            raise ParameterError("scheme", f"unsupported scheme {self.scheme!r}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.horizon / self.step)))

    @classmethod
    def default(cls, rho: float, **overrides) -> "SimConfig":
        """dt = 1e-4/rho and a horizon where exp(-rho T) = exp(-10)."""
        kw = {"step": 1e-4 / rho, "horizon": 10.0 / rho, "n_paths": 10_000, "seed": 0}
        kw.update(overrides)
        return cls(**kw)


@dataclass(frozen=True)
class StoppingEstimate:
    """Discounted stopped payoff statistics; unstopped paths contribute zero."""

    mean: float
    std_error: float
    n_stopped: int
    never_stopped_frac: float
    truncation_bound: float
    n_paths: int
    flagged_frac: float = 0.0
    mean_at_threshold: Optional[float] = None
    std_error_at_threshold: Optional[float] = None

    @property
    def unreliable(self) -> bool:
        return self.flagged_frac > UNRELIABLE_FLAGGED_FRAC


class PathStep(NamedTuple):
    step: int
    t: float
    x: np.ndarray
    flagged: np.ndarray


@dataclass(frozen=True)
class BruteForceResult:
    best_p: float
    thresholds: tuple[float, ...]
    estimates: tuple[StoppingEstimate, ...]
    diff_std_errors: tuple[float, ...]
    payoff: str
    common_random_numbers: bool = True


# --------------------------------------------------------------------------
# counter-based normals


@numba.njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _path_key(seed, path):
    return _mix64(_mix64(np.uint64(seed)) + (np.uint64(path) + np.uint64(1)) * GOLDEN_GAMMA)


@numba.njit(cache=True)
def _uniform(key, counter):
    bits = _mix64(key + (np.uint64(counter) + np.uint64(1)) * GOLDEN_GAMMA)
    return float(bits >> np.uint64(11)) * _TWO_M53


@numba.njit(cache=True)
def _normal(key, step):
    """Standard normal for 1-based ``step`` of the path with ``key``."""
    j = (step - 1) // 2
    u1 = 1.0 - _uniform(key, 2 * j)
    u2 = _uniform(key, 2 * j + 1)
    r = math.sqrt(-2.0 * math.log(u1))
    if (step - 1) % 2 == 0:
        return r * math.cos(_TWO_PI * u2)
    return r * math.sin(_TWO_PI * u2)


def path_keys(seed: int, paths: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        s = _mix64_np(np.full(paths.shape, np.uint64(seed), dtype=np.uint64))
        return _mix64_np(s + (paths.astype(np.uint64) + np.uint64(1)) * GOLDEN_GAMMA)


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _uniform_np(keys: np.ndarray, counter: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        bits = _mix64_np(keys + np.uint64(counter + 1) * GOLDEN_GAMMA)
    return (bits >> np.uint64(11)).astype(np.float64) * _TWO_M53


def normals(keys: np.ndarray, step: int) -> np.ndarray:
    """Vectorised twin of the compiled generator (same values)."""
    j = (step - 1) // 2
    u1 = 1.0 - _uniform_np(keys, 2 * j)
    u2 = _uniform_np(keys, 2 * j + 1)
    r = np.sqrt(-2.0 * np.log(u1))
    if (step - 1) % 2 == 0:
        return r * np.cos(_TWO_PI * u2)
    return r * np.sin(_TWO_PI * u2)


# --------------------------------------------------------------------------
# compiled stopping kernel for the named families


@numba.njit(cache=True)
def _coeffs(code, p1, p2, p3, x):
    if code == 0:
        return p1 * x, p2 * x
    if code == 1:
        return p1, p2
    if code == 2:
        return p1 * (p2 - x) * x, p3 * x
    return p1 * (p2 - x), p3 * math.sqrt(x)


@numba.njit(cache=True, parallel=True)
def _stop_kernel(code, p1, p2, p3, x0, thr, dt, n_steps, seed, lo, hi, floor, out_step, out_x, out_flag):
    n_paths, m = out_step.shape
    sq = math.sqrt(dt)
    for i in numba.prange(n_paths):
        key = _path_key(seed, i)
        x = x0
        nxt = 0
        while nxt < m and thr[nxt] <= x:
            out_step[i, nxt] = 0
            out_x[i, nxt] = x
            nxt += 1
        flagged = False
        spare = 0.0
        k = 1
        while nxt < m and k <= n_steps:
            # Box-Muller pair: cos branch on odd steps, cached sin on even
            if k % 2 == 1:
                j = (k - 1) // 2
                u1 = 1.0 - _uniform(key, 2 * j)
                u2 = _uniform(key, 2 * j + 1)
                r = math.sqrt(-2.0 * math.log(u1))
                z = r * math.cos(_TWO_PI * u2)
                spare = r * math.sin(_TWO_PI * u2)
            else:
                z = spare
            a, s = _coeffs(code, p1, p2, p3, x)
            x = x + a * dt + s * sq * z
            if x <= lo:
                x = lo + floor
                flagged = True
            elif x >= hi:
                x = hi - floor
                flagged = True
            while nxt < m and thr[nxt] <= x:
                out_step[i, nxt] = k
                out_x[i, nxt] = x
                nxt += 1
            k += 1
        out_flag[i] = flagged


def _configure_threads() -> None:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ParameterError(THREADS_ENV, f"expected an integer, got {raw!r}") from None
    limit = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(limit if n <= 0 else min(n, limit))


def _bounds(spec: DiffusionSpec, x0: float) -> tuple[float, float, float]:
    lo, hi = spec.domain.l, spec.domain.r
    floor = np.finfo(float).eps * max(1.0, abs(x0))
    return lo, hi, floor


def _run_stopping(spec: DiffusionSpec, x0: float, thresholds: np.ndarray, cfg: SimConfig):
    """First step index (-1 if never) and state at that step, per path and threshold."""
    spec.domain.require_interior(x0, what="initial state")
    thr = np.ascontiguousarray(np.sort(np.asarray(thresholds, dtype=float)))
    n, m = int(cfg.n_paths), thr.size
    out_step = np.full((n, m), -1, dtype=np.int64)
    out_x = np.full((n, m), np.nan)
    out_flag = np.zeros(n, dtype=np.bool_)
    lo, hi, floor = _bounds(spec, x0)

    if spec.family in _FAMILY_CODE:
        prm = spec.params
        if spec.family in (Family.GBM, Family.ABM):
            p1, p2, p3 = prm.alpha, prm.sigma, 0.0
        else:
            p1, p2, p3 = prm.alpha, prm.xbar, prm.sigma
        _configure_threads()
        _stop_kernel(
            _FAMILY_CODE[spec.family], float(p1), float(p2), float(p3), float(x0), thr,
            float(cfg.step), int(cfg.n_steps), np.uint64(cfg.seed), lo, hi, floor,
            out_step, out_x, out_flag,
        )
        return thr, out_step, out_x, out_flag

    _stop_numpy(spec, x0, thr, cfg, lo, hi, floor, out_step, out_x, out_flag)
    return thr, out_step, out_x, out_flag


def _euler(spec: DiffusionSpec, x: np.ndarray, dt: float, z: np.ndarray) -> np.ndarray:
    a = np.asarray(spec.a(x), dtype=float)
    s = np.asarray(spec.sigma(x), dtype=float)
    return x + a * dt + s * math.sqrt(dt) * z


def _reflect(x: np.ndarray, lo: float, hi: float, floor: float, flagged: np.ndarray) -> None:
    below = x <= lo
    above = x >= hi
    if below.any():
        x[below] = lo + floor
        flagged |= below
    if above.any():
        x[above] = hi - floor
        flagged |= above


def _stop_numpy(spec, x0, thr, cfg, lo, hi, floor, out_step, out_x, out_flag) -> None:
    n, m = out_step.shape
    keys = path_keys(cfg.seed, np.arange(n))
    x = np.full(n, float(x0))
    nxt = np.searchsorted(thr, x, side="right")
    for j in range(m):
        now = j < nxt
        out_step[now, j] = 0
        out_x[now, j] = x0
    idx = np.flatnonzero(nxt < m)
    x = x[idx]
    nxt = nxt[idx]
    flag = np.zeros(idx.size, dtype=bool)
    for k in range(1, cfg.n_steps + 1):
        if idx.size == 0:
            break
        x = _euler(spec, x, cfg.step, normals(keys[idx], k))
        _reflect(x, lo, hi, floor, flag)
        hits = np.searchsorted(thr, x, side="right")
        for j in range(m):
            new = (nxt <= j) & (j < hits)
            if new.any():
                out_step[idx[new], j] = k
                out_x[idx[new], j] = x[new]
        nxt = np.maximum(nxt, hits)
        keep = nxt < m
        if not keep.all():
            out_flag[idx[~keep]] = flag[~keep]
            idx, x, nxt, flag = idx[keep], x[keep], nxt[keep], flag[keep]
    out_flag[idx] = flag


def simulate_paths(spec: DiffusionSpec, x0: float, cfg: SimConfig) -> Iterator[PathStep]:
    """Stream the Euler-Maruyama ensemble one time step at a time.

    Steps that leave the state space are pushed back inside by a
    machine-epsilon margin and the path is flagged.
    """
    spec.domain.require_interior(x0, what="initial state")
    lo, hi, floor = _bounds(spec, x0)
    keys = path_keys(cfg.seed, np.arange(cfg.n_paths))
    x = np.full(cfg.n_paths, float(x0))
    flagged = np.zeros(cfg.n_paths, dtype=bool)
    for k in range(1, cfg.n_steps + 1):
        x = _euler(spec, x, cfg.step, normals(keys, k))
        _reflect(x, lo, hi, floor, flagged)
        yield PathStep(k, k * cfg.step, x.copy(), flagged.copy())


# --------------------------------------------------------------------------
# estimators


def _summary(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def _immediate(value: float, n: int, truncation: float) -> StoppingEstimate:
    return StoppingEstimate(
        mean=value, std_error=0.0, n_stopped=n, never_stopped_frac=0.0,
        truncation_bound=truncation, n_paths=n, flagged_frac=0.0,
        mean_at_threshold=value, std_error_at_threshold=0.0,
    )


def estimate_hitting_discount(spec: DiffusionSpec, x0: float, p: float, cfg: SimConfig) -> StoppingEstimate:
    """Monte Carlo estimate of E exp(-rho tau_p), tau_p the first step with X >= p."""
    spec.domain.require_interior(np.array([x0, p]))
    truncation = math.exp(-spec.rho * cfg.n_steps * cfg.step)
    if x0 >= p:
        return _immediate(1.0, cfg.n_paths, truncation)
    _, steps, _, flags = _run_stopping(spec, x0, np.array([p]), cfg)
    st = steps[:, 0]
    stopped = st >= 0
    disc = np.where(stopped, np.exp(-spec.rho * cfg.step * np.maximum(st, 0)), 0.0)
    mean, se = _summary(disc)
    return StoppingEstimate(
        mean=mean, std_error=se, n_stopped=int(stopped.sum()),
        never_stopped_frac=float(1.0 - stopped.mean()), truncation_bound=truncation,
        n_paths=cfg.n_paths, flagged_frac=float(flags.mean()),
        mean_at_threshold=mean, std_error_at_threshold=se,
    )


def _payoffs(spec, x0, thr, steps, xs, cfg):
    stopped = steps >= 0
    disc = np.where(stopped, np.exp(-spec.rho * cfg.step * np.maximum(steps, 0)), 0.0)
    cost = spec.invest_cost
    at_stop = np.where(stopped, (np.nan_to_num(xs) - cost) * disc, 0.0)
    level = np.where(steps == 0, x0, thr[None, :])
    at_level = np.where(stopped, (level - cost) * disc, 0.0)
    return stopped, at_stop, at_level


def estimate_threshold_npv(spec: DiffusionSpec, x0: float, p: float, cfg: SimConfig) -> StoppingEstimate:
    """Discounted NPV of investing the first time X >= p.

    ``mean`` pays X_tau - I at the stopping step (overshoot included);
    ``mean_at_threshold`` pays p - I instead.
    """
    spec.domain.require_interior(np.array([x0, p]))
    truncation = math.exp(-spec.rho * cfg.n_steps * cfg.step)
    if x0 >= p:
        return _immediate(x0 - spec.invest_cost, cfg.n_paths, truncation * max(abs(p - spec.invest_cost), 0.0))
    thr, steps, xs, flags = _run_stopping(spec, x0, np.array([p]), cfg)
    stopped, at_stop, at_level = _payoffs(spec, x0, thr, steps, xs, cfg)
    mean, se = _summary(at_stop[:, 0])
    mean_t, se_t = _summary(at_level[:, 0])
    return StoppingEstimate(
        mean=mean, std_error=se, n_stopped=int(stopped[:, 0].sum()),
        never_stopped_frac=float(1.0 - stopped[:, 0].mean()),
        truncation_bound=truncation * abs(p - spec.invest_cost),
        n_paths=cfg.n_paths, flagged_frac=float(flags.mean()),
        mean_at_threshold=mean_t, std_error_at_threshold=se_t,
    )


def brute_force_best_threshold(
    spec: DiffusionSpec,
    x0: float,
    p_grid: Sequence[float],
    cfg: SimConfig,
    payoff: str = "threshold",
) -> BruteForceResult:
    """Best grid threshold by simulated NPV, all thresholds on the same paths.

    ``payoff="threshold"`` ranks by (p - I) exp(-rho tau), the form whose
    maximiser is the optimal threshold; ``"stopped"`` ranks by the
    overshoot payoff X_tau - I.  Ties go to the smaller threshold.
    """
    if payoff not in ("threshold", "stopped"):
        raise ParameterError("payoff", f"expected 'threshold' or 'stopped', got {payoff!r}")
    grid = np.asarray(p_grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("p_grid", "threshold grid is empty")
    spec.domain.require_interior(grid, what="grid threshold")
    thr, steps, xs, flags = _run_stopping(spec, x0, grid, cfg)
    stopped, at_stop, at_level = _payoffs(spec, x0, thr, steps, xs, cfg)
    truncation = math.exp(-spec.rho * cfg.n_steps * cfg.step)

    estimates = []
    for j in range(thr.size):
        mean, se = _summary(at_stop[:, j])
        mean_t, se_t = _summary(at_level[:, j])
        estimates.append(
            StoppingEstimate(
                mean=mean, std_error=se, n_stopped=int(stopped[:, j].sum()),
                never_stopped_frac=float(1.0 - stopped[:, j].mean()),
                truncation_bound=truncation * abs(thr[j] - spec.invest_cost),
                n_paths=cfg.n_paths, flagged_frac=float(flags.mean()),
                mean_at_threshold=mean_t, std_error_at_threshold=se_t,
            )
        )
    ranking = at_level if payoff == "threshold" else at_stop
    means = [e.mean_at_threshold if payoff == "threshold" else e.mean for e in estimates]
    best = 0
    for j in range(1, thr.size):
        if means[j] > means[best]:
            best = j
    diff_se = tuple(_summary(ranking[:, best] - ranking[:, j])[1] for j in range(thr.size))
    return BruteForceResult(
        best_p=float(thr[best]),
        thresholds=tuple(float(t) for t in thr),
        estimates=tuple(estimates),
        diff_std_errors=diff_se,
        payoff=payoff,
    )

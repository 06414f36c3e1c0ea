"""Generic Ito integrator for weighted phase-space trajectory ensembles.

A problem is specified by the drift A, the diffusion matrix B, an optional
weight drift U and an optional stochastic gauge g.  Per step, with zeta a
vector of Gaussian white noises (variance 1/dt per component),

    lambda' = lambda + [A + B (zeta - g)] dt
    log Omega' = log Omega + [U + g . zeta - (1/2) sum_k g_k^2] dt

Both updates are in the Ito interpretation: B and g are evaluated at the
pre-point so noise increments stay uncorrelated with the coefficients.  The
quadratic gauge term is the Ito correction that makes the exponential of the
log-weight update equal (in distribution) to the linear weight equation
dOmega = Omega [U dt + g . dW]; without it, weighted averages would acquire a
path-dependent bias for state-dependent gauges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .ensemble import Ensemble, ObservableEstimate

MIDPOINT_ITERATIONS = 4
MIDPOINT_TOL = 1e-12


@dataclass(frozen=True)
class SdeProblem:
    """Pluggable drift/diffusion/gauge/weight terms of a weighted Ito SDE.

    Callbacks are vectorized over trajectories: they receive the state array
    of shape (n_traj, dimension) and return arrays of shape (n_traj,
    dimension) for the drift, (n_traj, dimension, n_noise) for the diffusion
    matrix, (n_traj,) for the weight drift and (n_traj, n_noise) for the
    gauge.  `dimension` counts complex state components per trajectory.

    `diffusion_dot`, when provided, computes B(lambda) @ w without
    materializing B; the integrator prefers it in the hot path.  `reverse`
    rebuilds the problem with every Hamiltonian-derived term negated (set by
    the unitary model constructors).
    """

    dimension: int
    n_noise: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    weight_drift: Optional[Callable[[np.ndarray], np.ndarray]] = None
    gauge: Optional[Callable[[np.ndarray], np.ndarray]] = None
    diffusion_dot: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    reverse: Optional[Callable[[], "SdeProblem"]] = None
    label: str = ""
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StepSchedule:
    """Fixed-step evolution plan: n_steps of size dt, recording every stride."""

    dt: float
    n_steps: int
    record_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.n_steps % self.record_stride != 0:
            raise ValueError("record_stride must divide n_steps")

    @property
    def span(self):
        return self.dt * self.n_steps


@dataclass
class MomentSeries:
    """Grid of recorded observable estimates, one row per record time."""

    times: list = field(default_factory=list)
    columns: dict = field(default_factory=dict)
    n_alive: list = field(default_factory=list)

    def append(self, time, estimates, n_alive):
        self.times.append(float(time))
        for name, est in estimates.items():
            self.columns.setdefault(name, []).append(est)
        self.n_alive.append(int(n_alive))

    def __len__(self):
        return len(self.times)

    def means(self, name):
        return np.array([est.mean for est in self.columns[name]])

    def errors(self, name):
        return np.array([est.std_error for est in self.columns[name]])


@dataclass
class EvolveResult:
    ensemble: Ensemble
    series: MomentSeries
    aborted: bool = False
    abort_step: Optional[int] = None
    dead_count: int = 0
    alive_fraction: float = 1.0
    midpoint_fallbacks: int = 0


def _as_batch(arr):
    arr = np.asarray(arr)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


def _apply_diffusion(problem, lam, w):
    if problem.n_noise == 0:
        return 0.0
    if problem.diffusion_dot is not None:
        return problem.diffusion_dot(lam, w)
    b = problem.diffusion(lam)
    return np.einsum("tdk,tk->td", b, w)


def _weight_increment(problem, lam_for_drift, lam_pre, zeta, g, dt):
    """Log-weight increment; the gauge noise term stays at the pre-point."""
    inc = 0.0
    if problem.weight_drift is not None:
        inc = inc + problem.weight_drift(lam_for_drift) * dt
    if g is not None:
        inc = inc + ((g * zeta).sum(axis=-1) - 0.5 * (g * g).sum(axis=-1)) * dt
    if np.isscalar(inc):
        inc = np.zeros(lam_pre.shape[0], dtype=complex)
    return inc


def step_ito_euler(lam, log_weight, problem, dt, noise):
    """One Euler-Maruyama step of state and log-weight.

    `noise` must contain n_noise components per trajectory with variance
    1/dt each (white-noise discretization).  Accepts a single state vector
    or a trajectory-major batch.
    """
    lam, single = _as_batch(lam)
    zeta, _ = _as_batch(noise) if problem.n_noise else (np.zeros((lam.shape[0], 0)), False)
    logw = np.atleast_1d(np.asarray(log_weight, dtype=complex))
    g = problem.gauge(lam) if problem.gauge is not None else None
    w = zeta - g if g is not None else zeta
    bz = _apply_diffusion(problem, lam, w)
    lam2 = lam + (problem.drift(lam) + bz) * dt
    logw2 = logw + _weight_increment(problem, lam, lam, zeta, g, dt)
    if single:
        return lam2[0], logw2[0]
    return lam2, logw2


def _midpoint_core(lam, logw, problem, dt, zeta):
    """Semi-implicit midpoint step on the drift; noise term as in Euler.

    The drift is evaluated at the fixed-point midpoint obtained by up to
    MIDPOINT_ITERATIONS damped iterations (early exit below MIDPOINT_TOL).
    Trajectories whose iteration diverges (growing update or non-finite
    iterate) fall back to the Euler step; the count is returned.
    """
    g = problem.gauge(lam) if problem.gauge is not None else None
    w = zeta - g if g is not None else zeta
    bz = _apply_diffusion(problem, lam, w) * dt

    mid = lam
    first_mid = None
    prev_delta = None
    bad = np.zeros(lam.shape[0], dtype=bool)
    for it in range(MIDPOINT_ITERATIONS):
        new_mid = lam + 0.5 * (problem.drift(mid) * dt + bz)
        delta = np.abs(new_mid - mid).max(axis=-1)
        if it == 0:
            first_mid = new_mid
        else:
            with np.errstate(invalid="ignore"):
                bad |= delta > prev_delta
        bad |= ~np.isfinite(new_mid).all(axis=-1)
        mid = new_mid
        prev_delta = delta
        if np.nanmax(delta) < MIDPOINT_TOL:
            break

    lam2 = 2.0 * mid - lam
    n_fallback = int(bad.sum())
    if n_fallback:
        euler = 2.0 * first_mid - lam
        lam2 = np.where(bad[:, None], euler, lam2)
        mid = np.where(bad[:, None], lam, mid)
    logw2 = logw + _weight_increment(problem, mid, lam, zeta, g, dt)
    return lam2, logw2, n_fallback


def step_ito_midpoint(lam, log_weight, problem, dt, noise):
    """One semi-implicit midpoint step; same contract as `step_ito_euler`.

    Converges to the same Ito solution as the Euler step for dt -> 0; the
    weight drift is evaluated at the midpoint, the gauge noise term at the
    pre-point.
    """
    lam, single = _as_batch(lam)
    zeta, _ = _as_batch(noise) if problem.n_noise else (np.zeros((lam.shape[0], 0)), False)
    logw = np.atleast_1d(np.asarray(log_weight, dtype=complex))
    lam2, logw2, n_fb = _midpoint_core(lam, logw, problem, dt, zeta)
    if single:
        return lam2[0], logw2[0]
    return lam2, logw2


_STEPPERS = {"euler": "euler", "midpoint": "midpoint"}


class _StreamNoise:
    """Per-step standard normals drawn blockwise from the trajectory streams.

    Drawing a block of steps at once amortizes the per-call generator
    overhead without changing any stream's sample sequence.  With
    refine = r, each step consumes r sub-draws per component, combined as
    (z_1 + ... + z_r)/sqrt(r): running a schedule at dt with refine=2
    therefore follows the same Brownian path as 2*n_steps at dt/2 with
    refine=1, which is how step-halving convergence is certified.
    """

    def __init__(self, ensemble, n_noise, refine=1, block_bytes=1 << 26):
        self._ens = ensemble
        self._k = int(n_noise)
        self._refine = int(refine)
        if self._refine < 1:
            raise ValueError("noise_refine must be >= 1")
        per_step = ensemble.trajectory_count * max(self._k, 1) * self._refine * 8
        self.block_steps = max(1, int(block_bytes // per_step))

    def draw(self, n_steps):
        n = self._ens.trajectory_count
        out = np.empty((n, n_steps, self._k))
        if self._k == 0:
            return out
        r = self._refine
        for t in range(n):
            z = self._ens.rng(t).standard_normal((n_steps, r, self._k))
            out[t] = z.sum(axis=1)
        if r > 1:
            out /= np.sqrt(r)
        return out


def evolve(ensemble, problem, schedule, recorder=None, *, stepper="midpoint",
           divergence_threshold=1e6, abort_floor=0.9, noise_refine=1,
           noise_block_bytes=1 << 26):
    """Evolve every alive trajectory through the schedule, recording moments.

    The ensemble is advanced in place and returned inside an EvolveResult
    together with the recorded MomentSeries.  A trajectory is killed (flagged,
    frozen at its pre-step state, excluded from averages) as soon as any state
    component exceeds `divergence_threshold` in modulus or turns non-finite.
    If the alive fraction drops below `abort_floor` the run stops early and
    the partial series is returned with ``aborted=True`` -- the signature of
    sampling-error breakdown.

    `recorder` is called every `record_stride` steps (including step 0) with
    the live ensemble and must return a dict of named ObservableEstimates.
    """
    if stepper not in _STEPPERS:
        raise ValueError(f"unknown stepper {stepper!r}")
    if not 0.0 <= abort_floor <= 1.0:
        raise ValueError("abort_floor must lie in [0, 1]")

    series = MomentSeries()

    def record():
        estimates = recorder(ensemble) if recorder is not None else {}
        series.append(ensemble.time, estimates, ensemble.n_alive)

    record()
    result = EvolveResult(ensemble=ensemble, series=series)
    if schedule.n_steps == 0:
        result.dead_count = ensemble.trajectory_count - ensemble.n_alive
        result.alive_fraction = ensemble.alive_fraction
        return result

    dt = schedule.dt
    sqrt_dt = np.sqrt(dt)
    noise = _StreamNoise(ensemble, problem.n_noise, refine=noise_refine,
                         block_bytes=noise_block_bytes)
    midpoint = stepper == "midpoint"

    step = 0
    while step < schedule.n_steps:
        n_block = min(noise.block_steps, schedule.n_steps - step)
        block = noise.draw(n_block)
        for b in range(n_block):
            zeta = block[:, b, :] / sqrt_dt
            lam = ensemble.state
            logw = ensemble.log_weight
            with np.errstate(over="ignore", invalid="ignore", under="ignore"):
                if midpoint:
                    lam2, logw2, n_fb = _midpoint_core(lam, logw, problem, dt, zeta)
                    result.midpoint_fallbacks += n_fb
                else:
                    g = problem.gauge(lam) if problem.gauge is not None else None
                    wn = zeta - g if g is not None else zeta
                    bz = _apply_diffusion(problem, lam, wn)
                    lam2 = lam + (problem.drift(lam) + bz) * dt
                    logw2 = logw + _weight_increment(problem, lam, lam, zeta, g, dt)

                finite = np.isfinite(lam2).all(axis=-1) & np.isfinite(logw2)
                small = np.abs(lam2).max(axis=-1) <= divergence_threshold
            ok = finite & small
            newly_dead = ensemble.alive & ~ok
            keep = ensemble.alive & ok

            ensemble.state = np.where(keep[:, None], lam2, ensemble.state)
            ensemble.log_weight = np.where(keep, logw2, ensemble.log_weight)
            step += 1
            ensemble.step_index += 1
            ensemble.time += dt
            if newly_dead.any():
                ensemble.alive &= ok
                ensemble.death_step[newly_dead] = ensemble.step_index

            if step % schedule.record_stride == 0:
                record()
            if ensemble.alive_fraction < abort_floor:
                result.aborted = True
                result.abort_step = ensemble.step_index
                break
        if result.aborted:
            break

    result.dead_count = ensemble.trajectory_count - ensemble.n_alive
    result.alive_fraction = ensemble.alive_fraction
    return result


def diagnostic_estimate(value):
    """Wrap a deterministic diagnostic as a zero-error ObservableEstimate."""
    return ObservableEstimate(mean=complex(value), std_error=0.0,
                              n_subensembles=0, n_alive=0)

"""Weighted trajectory ensembles with reproducible noise and sub-ensemble errors.

An ensemble is an ordered, fixed-length collection of phase-space trajectories.
Bosonic trajectories carry coherent amplitudes (alpha, beta) and a complex log
weight; fermionic trajectories carry a pair of Green's-function matrices and a
real log weight.  State is stored trajectory-major in contiguous complex
arrays so that the integrator can update every trajectory with vectorized
operations, while per-trajectory views remain available for inspection.

Every trajectory owns a private counter-based random stream derived from
(master_seed, trajectory index), so a run is bit-reproducible regardless of
how trajectories are partitioned over workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

POSITIVE_P = "positive-p"
WIGNER = "wigner"
FERMI = "fermi"

_KINDS = (POSITIVE_P, WIGNER, FERMI)
_SEED_MASK = (1 << 64) - 1


class EstimationError(RuntimeError):
    """Raised when a weighted average cannot be formed (e.g. no alive trajectories)."""


def trajectory_rng(master_seed, index):
    """Private random stream for one trajectory.

    Philox is counter-based: keying it with (master_seed, index) gives
    independent, reproducible streams without any coordination between
    trajectories.
    """
    key = np.array([int(master_seed) & _SEED_MASK, int(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class PhasePoint:
    """One bosonic trajectory: ket/bra amplitudes plus a complex log weight."""

    alpha: np.ndarray
    beta: np.ndarray
    log_weight: complex
    alive: bool


@dataclass
class FermiPoint:
    """One fermionic trajectory: per-spin Green's-function matrices plus log weight."""

    n_up: np.ndarray
    n_down: np.ndarray
    log_weight: float
    alive: bool


@dataclass
class ObservableEstimate:
    """Weighted estimate with a central-limit error bar from sub-ensemble means."""

    mean: complex
    std_error: float
    n_subensembles: int
    n_alive: int
    unreliable: bool = False


class Ensemble:
    """Ordered collection of weighted trajectories sharing one master seed.

    Parameters
    ----------
    kind : str
        One of ``positive-p``, ``wigner`` or ``fermi``; fixes how the state
        array is interpreted.
    n_modes : int
        Number of bosonic modes or lattice sites M.
    state : ndarray, shape (trajectory_count, n_vars), complex
        Flattened phase-space coordinates per trajectory.  Layout:
        positive-p -> [alpha_0..alpha_{M-1}, beta_0..beta_{M-1}],
        wigner     -> [alpha_0..alpha_{M-1}],
        fermi      -> [n_up.flat, n_down.flat] (two M*M blocks).
    log_weight : ndarray, shape (trajectory_count,), complex
        Log of the trajectory weight Omega.
    master_seed : int
        Seed from which every per-trajectory stream is derived.
    """

    def __init__(self, kind, n_modes, state, log_weight, master_seed, *,
                 time=0.0, step_index=0, alive=None, rngs=None):
        if kind not in _KINDS:
            raise ValueError(f"unknown ensemble kind {kind!r}")
        self.kind = kind
        self.n_modes = int(n_modes)
        self.state = np.ascontiguousarray(state, dtype=complex)
        if self.state.ndim != 2:
            raise ValueError("state must be 2-D (trajectory-major)")
        n = self.state.shape[0]
        self.log_weight = np.ascontiguousarray(log_weight, dtype=complex)
        if self.log_weight.shape != (n,):
            raise ValueError("log_weight must have one entry per trajectory")
        self.master_seed = int(master_seed)
        self.time = float(time)
        self.step_index = int(step_index)
        if alive is None:
            alive = np.ones(n, dtype=bool)
        self.alive = np.ascontiguousarray(alive, dtype=bool)
        # -1 means "still alive"; set to the killing step by the integrator.
        self.death_step = np.full(n, -1, dtype=np.int64)
        self._expected_vars = {
            POSITIVE_P: 2 * self.n_modes,
            WIGNER: self.n_modes,
            FERMI: 2 * self.n_modes * self.n_modes,
        }[kind]
        if self.state.shape[1] != self._expected_vars:
            raise ValueError(
                f"state has {self.state.shape[1]} variables per trajectory, "
                f"expected {self._expected_vars} for kind {kind!r}")
        if rngs is None:
            rngs = [trajectory_rng(self.master_seed, k) for k in range(n)]
        self._rngs = rngs

    # -- basic shape info ---------------------------------------------------

    @property
    def trajectory_count(self):
        return self.state.shape[0]

    @property
    def n_vars(self):
        return self.state.shape[1]

    @property
    def n_alive(self):
        return int(self.alive.sum())

    @property
    def alive_fraction(self):
        return self.n_alive / self.trajectory_count

    def rng(self, traj_index):
        """The private random stream of one trajectory (stateful)."""
        return self._rngs[traj_index]

    # -- kind-specific views ------------------------------------------------

    def alpha_view(self):
        if self.kind == FERMI:
            raise TypeError("fermionic ensembles have no coherent amplitudes")
        return self.state[:, :self.n_modes]

    def beta_view(self):
        if self.kind == POSITIVE_P:
            return self.state[:, self.n_modes:]
        if self.kind == WIGNER:
            # Diagonal representation: the bra amplitude is the conjugate.
            return np.conj(self.state[:, :self.n_modes])
        raise TypeError("fermionic ensembles have no coherent amplitudes")

    def green_views(self):
        if self.kind != FERMI:
            raise TypeError("green_views is only defined for fermionic ensembles")
        m = self.n_modes
        n_up = self.state[:, :m * m].reshape(-1, m, m)
        n_down = self.state[:, m * m:].reshape(-1, m, m)
        return n_up, n_down

    def point(self, k):
        """Snapshot of trajectory k as a PhasePoint or FermiPoint."""
        if self.kind == FERMI:
            n_up, n_down = self.green_views()
            return FermiPoint(n_up[k].copy(), n_down[k].copy(),
                              float(self.log_weight[k].real), bool(self.alive[k]))
        return PhasePoint(self.alpha_view()[k].copy(), np.array(self.beta_view()[k]),
                          complex(self.log_weight[k]), bool(self.alive[k]))

    @property
    def points(self):
        return [self.point(k) for k in range(self.trajectory_count)]


def coherent_ensemble(alpha0, trajectory_count, master_seed):
    """Positive-P ensemble of identical coherent states: beta = conj(alpha).

    All trajectories start at the classical-diagonal point with unit weight.
    """
    alpha0 = np.atleast_1d(np.asarray(alpha0, dtype=complex))
    n = int(trajectory_count)
    if n < 1:
        raise ValueError("trajectory_count must be >= 1")
    row = np.concatenate([alpha0, np.conj(alpha0)])
    state = np.tile(row, (n, 1))
    return Ensemble(POSITIVE_P, alpha0.size, state, np.zeros(n, dtype=complex),
                    master_seed)


def derive_noise(ensemble, traj_index, count, variance):
    """Gaussian samples from one trajectory's private stream.

    Returns `count` independent zero-mean samples with the requested variance.
    Successive calls advance the stream, so identical (seed, index, call
    sequence) always reproduces identical output.
    """
    if not 0 <= traj_index < ensemble.trajectory_count:
        raise IndexError(f"trajectory index {traj_index} out of range")
    variance = float(variance)
    if variance <= 0.0:
        raise ValueError("variance must be positive")
    if count < 0:
        raise ValueError("count must be non-negative")
    return ensemble.rng(traj_index).standard_normal(int(count)) * np.sqrt(variance)


def _block_slices(n, n_sub):
    """Contiguous index blocks of (near-)equal size: deterministic partition."""
    if n_sub < 2:
        raise ValueError("n_sub must be >= 2")
    if n_sub > n:
        raise ValueError("more sub-ensembles than trajectories")
    bounds = np.linspace(0, n, n_sub + 1).astype(int)
    return [slice(bounds[i], bounds[i + 1]) for i in range(n_sub)]


def _evaluate_observable(ensemble, observable):
    values = observable(ensemble) if callable(observable) else observable
    values = np.asarray(values, dtype=complex)
    if values.shape != (ensemble.trajectory_count,):
        raise ValueError("observable must yield one value per trajectory")
    return values


def _shifted_weights(ensemble):
    """exp(log_weight) with the maximum alive log-modulus subtracted.

    The shift prevents overflow for widely spread weights; every weighted
    ratio is invariant under it.  Dead trajectories get weight zero.
    """
    alive = ensemble.alive
    if not alive.any():
        raise EstimationError("all trajectories are dead")
    shift = ensemble.log_weight.real[alive].max()
    w = np.zeros(ensemble.trajectory_count, dtype=complex)
    w[alive] = np.exp(ensemble.log_weight[alive] - shift)
    return w


def weighted_block_means(ensemble, observable, n_sub=10):
    """Global weighted mean plus the means of contiguous sub-ensemble blocks.

    Building block for every estimator: the spread of the block means gives
    the central-limit error bar, and ratio estimators propagate their errors
    by forming the ratio block by block.
    """
    values = _evaluate_observable(ensemble, observable)
    w = _shifted_weights(ensemble)
    norm = w.sum()
    mean = (w * values).sum() / norm
    blocks = _block_slices(ensemble.trajectory_count, n_sub)
    block_means = np.empty(len(blocks), dtype=complex)
    for b, sl in enumerate(blocks):
        wb = w[sl]
        nb = wb.sum()
        if not ensemble.alive[sl].any():
            raise EstimationError(f"sub-ensemble {b} has no alive trajectories")
        block_means[b] = (wb * values[sl]).sum() / nb
    return mean, block_means, ensemble.n_alive


def subensemble_error(block_means):
    """Standard error of the mean estimated from sub-ensemble means."""
    n_sub = len(block_means)
    return float(np.std(block_means, ddof=1) / np.sqrt(n_sub))


def weighted_mean(ensemble, observable, n_sub=10):
    """Weighted ensemble average sum_k w_k O_k / sum_k w_k over alive trajectories.

    Parameters
    ----------
    observable : callable or ndarray
        Either a function of the ensemble returning one complex value per
        trajectory, or such an array directly.
    n_sub : int
        Number of contiguous equal-size sub-ensembles used for the error bar.

    Returns
    -------
    ObservableEstimate
        The global weighted mean; std_error is the standard deviation of the
        sub-ensemble means divided by sqrt(n_sub).
    """
    mean, block_means, n_alive = weighted_block_means(ensemble, observable, n_sub)
    return ObservableEstimate(mean=complex(mean),
                              std_error=subensemble_error(block_means),
                              n_subensembles=int(n_sub),
                              n_alive=n_alive)


def estimate_quadratic_moment(ensemble, i, j, spin="sum", n_sub=10):
    """Estimate of <adag_i a_j>.

    For bosonic ensembles this is the weighted mean of beta_i * alpha_j (for
    the diagonal Wigner ensemble beta is conj(alpha), i.e. the symmetrically
    ordered moment).  For fermionic ensembles it is the weighted mean of the
    Green's-function entry n_ij, per spin or summed over spins.
    """
    m = ensemble.n_modes
    if not (0 <= i < m and 0 <= j < m):
        raise IndexError(f"mode index out of range for M={m}")
    if ensemble.kind == FERMI:
        n_up, n_down = ensemble.green_views()
        if spin == "up":
            values = n_up[:, i, j]
        elif spin == "down":
            values = n_down[:, i, j]
        elif spin == "sum":
            values = n_up[:, i, j] + n_down[:, i, j]
        else:
            raise ValueError("spin must be 'up', 'down' or 'sum'")
    else:
        values = ensemble.beta_view()[:, i] * ensemble.alpha_view()[:, j]
    return weighted_mean(ensemble, values, n_sub=n_sub)

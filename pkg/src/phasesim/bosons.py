"""Bosonic phase-space mappings: Kerr oscillator, lattice models, collisions.

The lattice Hamiltonian is H/hbar = sum_ij omega_ij adag_i a_j
+ chi sum_j adag_j adag_j a_j a_j, with omega Hermitian (chemical potential on
the diagonal) and the interaction normally ordered so single-particle states
acquire no nonlinear phase.

Two samplings are provided.  The doubled-phase-space mapping (positive-P)
is exact: independent trajectories obey

    d alpha_j = -i (sum_k omega_jk alpha_k + 2 chi beta_j alpha_j^2) dt
               + sqrt(-2 i chi) alpha_j dW_j
    d beta_j  = +i (sum_k conj(omega)_jk beta_k + 2 chi alpha_j beta_j^2) dt
               + sqrt(+2 i chi) beta_j dW'_j

with independent real noises dW, dW' and principal square-root branches.
The truncated-Wigner sampling drops third-order derivative terms: it evolves
a deterministic mean-field equation with a symmetric-ordering-corrected
nonlinearity and samples only the initial half-quantum vacuum noise; its
moments are symmetrically ordered and therefore approximate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .ensemble import (
    POSITIVE_P,
    WIGNER,
    Ensemble,
    ObservableEstimate,
    coherent_ensemble,
    subensemble_error,
    weighted_block_means,
    weighted_mean,
)
from .engine import SdeProblem

KERR_CHI = 0.5  # single-well nonlinearity in the normalization with drift Re[beta*alpha]

_SQRT_I = np.exp(1j * np.pi / 4)       # principal branch of sqrt(i)
_SQRT_MINUS_I = np.exp(-1j * np.pi / 4)


@dataclass(frozen=True)
class BoseLatticeModel:
    """Linear coupling matrix plus on-site nonlinearity strength."""

    omega: np.ndarray
    chi: float

    def __post_init__(self):
        omega = np.atleast_2d(np.asarray(self.omega, dtype=complex))
        if omega.shape[0] != omega.shape[1] or omega.shape[0] < 1:
            raise ValueError("omega must be a square matrix with M >= 1")
        if not np.allclose(omega, omega.conj().T, atol=1e-12):
            raise ValueError("omega must be Hermitian for unitary evolution")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "chi", float(self.chi))

    @property
    def n_modes(self):
        return self.omega.shape[0]


@dataclass(frozen=True)
class KerrGaugeConfig:
    """Stochastic-gauge choice for the single-mode Kerr problem.

    g1 and g2 are functions of the amplitude arrays (alpha, beta) returning
    one complex gauge value per trajectory for the alpha-side and beta-side
    noises respectively.
    """

    gauge_kind: str = "none"
    g1: Optional[Callable] = None
    g2: Optional[Callable] = None

    def __post_init__(self):
        if self.gauge_kind not in ("none", "custom"):
            raise ValueError("gauge_kind must be 'none' or 'custom'")
        if self.gauge_kind == "custom" and (self.g1 is None or self.g2 is None):
            raise ValueError("custom gauge requires both g1 and g2")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def custom(cls, g1, g2):
        return cls("custom", g1, g2)

    @classmethod
    def drift_stabilizing(cls):
        """Gauge that makes the nonlinear frequency real.

        Moves the imaginary part of beta*alpha out of the alpha/beta drift
        and into the weight, so the effective drift rotates with Re[beta*alpha]
        instead of beta*alpha.  Weighted moments are unchanged.
        """
        def g1(alpha, beta):
            return _SQRT_I * np.imag(beta * alpha)

        def g2(alpha, beta):
            return -_SQRT_MINUS_I * np.imag(beta * alpha)

        return cls("custom", g1, g2)


def _positive_p_problem(model, gauge=None, sign=1, label=""):
    m = model.n_modes
    omega = sign * model.omega
    chi = sign * model.chi
    om_t = np.ascontiguousarray(omega.T)
    om_ct = np.ascontiguousarray(np.conj(omega).T)
    noise_a = np.sqrt(-2j * chi)
    noise_b = np.sqrt(+2j * chi)

    def drift(lam):
        a = lam[:, :m]
        b = lam[:, m:]
        da = -1j * (a @ om_t + 2.0 * chi * b * a * a)
        db = +1j * (b @ om_ct + 2.0 * chi * a * b * b)
        return np.concatenate([da, db], axis=1)

    def diffusion_dot(lam, w):
        a = lam[:, :m]
        b = lam[:, m:]
        return np.concatenate([noise_a * a * w[:, :m],
                               noise_b * b * w[:, m:]], axis=1)

    def diffusion(lam):
        n = lam.shape[0]
        out = np.zeros((n, 2 * m, 2 * m), dtype=complex)
        idx = np.arange(m)
        out[:, idx, idx] = noise_a * lam[:, :m]
        out[:, m + idx, m + idx] = noise_b * lam[:, m:]
        return out

    gauge_fn = None
    if gauge is not None and gauge.gauge_kind == "custom":
        if m != 1:
            raise ValueError("gauge presets are defined for the single-mode problem")
        g1, g2 = gauge.g1, gauge.g2

        def gauge_fn(lam):
            a = lam[:, 0]
            b = lam[:, 1]
            return np.stack([g1(a, b), g2(a, b)], axis=1)

    return SdeProblem(
        dimension=2 * m,
        n_noise=2 * m,
        drift=drift,
        diffusion=diffusion,
        diffusion_dot=diffusion_dot,
        gauge=gauge_fn,
        reverse=lambda: _positive_p_problem(model, gauge, -sign, label),
        label=label or f"positive-p M={m}",
        meta={"model": model, "sign": sign, "kind": POSITIVE_P},
    )


def bose_hubbard_positive_p(model):
    """Exact doubled-phase-space sampling of the lattice model.

    With chi = 0 the dynamics reduces to the exactly solvable linear
    mode-coupling problem; weights stay constant (weight drift and gauge are
    zero by default).
    """
    return _positive_p_problem(model)


def kerr_problem(omega, n_mean, gauge=None):
    """Single-well problem with fixed nonlinearity chi = 1/2.

    The canonical initial condition is the coherent state
    alpha(0) = conj(beta(0)) = sqrt(n_mean) (real phase); build it with
    `kerr_initial_ensemble`.  The alpha-side noise coefficient is
    sqrt(-i) * alpha and the beta side sqrt(+i) * beta (principal branches);
    the optional gauge reshapes individual trajectories without changing
    weighted moments.
    """
    if n_mean <= 0:
        raise ValueError("n_mean must be positive")
    gauge = gauge or KerrGaugeConfig.none()
    model = BoseLatticeModel(np.array([[omega]], dtype=complex), KERR_CHI)
    problem = _positive_p_problem(model, gauge=gauge, label=f"kerr omega={omega}")
    problem.meta["n_mean"] = float(n_mean)
    return problem


def kerr_initial_ensemble(n_mean, trajectory_count, master_seed):
    return coherent_ensemble(np.array([np.sqrt(n_mean)], dtype=complex),
                             trajectory_count, master_seed)


def time_reverse(problem):
    """Problem with all Hamiltonian-derived drift terms negated.

    Evolving forward for a span T and then with the reversed problem for T
    returns every physical moment to its initial value within sampling error,
    although the trajectory distribution itself ends up broader than it
    started (the representation of a state is not unique).
    """
    if problem.reverse is None:
        raise ValueError("problem does not define a Hamiltonian-sign reversal")
    return problem.reverse()


def bose_hubbard_wigner(model):
    """Truncated-Wigner sampling: deterministic drift, initial vacuum noise.

    The drift is the mean-field equation with the symmetric-ordering shift
    2 chi (|alpha|^2 - 1) alpha in place of the bare nonlinearity; there is no
    dynamical noise for unitary evolution.  Estimates from the resulting
    ensembles are symmetrically ordered: subtract 1/2 per mode from number
    estimates (`wigner_number_correction`).  The truncation drops third-order
    derivative terms, so results are approximate (good for large occupation
    and short times).
    """
    m = model.n_modes
    om_t = np.ascontiguousarray(model.omega.T)
    chi = model.chi

    def drift(lam):
        return -1j * (lam @ om_t + chi * (2.0 * np.abs(lam) ** 2 - 2.0) * lam)

    def diffusion(lam):
        return np.zeros((lam.shape[0], m, 0), dtype=complex)

    def reverse():
        return bose_hubbard_wigner(BoseLatticeModel(-model.omega, -model.chi))

    return SdeProblem(dimension=m, n_noise=0, drift=drift, diffusion=diffusion,
                      reverse=reverse, label=f"wigner M={m}",
                      meta={"model": model, "kind": WIGNER})


def init_wigner(mean_field, trajectory_count, master_seed):
    """Wigner ensemble: mean field plus half a quantum of vacuum noise per mode.

    Each trajectory draws 2M standard normals from its private stream
    (real parts first), giving complex fluctuations of variance 1/2.
    """
    mean_field = np.atleast_1d(np.asarray(mean_field, dtype=complex))
    m = mean_field.size
    ens = Ensemble(WIGNER, m, np.tile(mean_field, (int(trajectory_count), 1)),
                   np.zeros(int(trajectory_count), dtype=complex), master_seed)
    for k in range(ens.trajectory_count):
        z = ens.rng(k).standard_normal(2 * m)
        ens.state[k] += 0.5 * (z[:m] + 1j * z[m:])
    return ens


def wigner_number_correction(estimate):
    """Symmetric -> normal ordering for a single-mode number estimate."""
    return ObservableEstimate(mean=estimate.mean - 0.5,
                              std_error=estimate.std_error,
                              n_subensembles=estimate.n_subensembles,
                              n_alive=estimate.n_alive,
                              unreliable=estimate.unreliable)


# -- estimators -------------------------------------------------------------


def estimate_field(ensemble, j=0, n_sub=10):
    """<a_j>: weighted mean of alpha_j (same estimator for both samplings)."""
    return weighted_mean(ensemble, ensemble.alpha_view()[:, j], n_sub=n_sub)


def estimate_number(ensemble, j=0, n_sub=10):
    """<n_j> with normal ordering; applies the -1/2 shift for Wigner ensembles."""
    values = ensemble.beta_view()[:, j] * ensemble.alpha_view()[:, j]
    est = weighted_mean(ensemble, values, n_sub=n_sub)
    if ensemble.kind == WIGNER:
        est = wigner_number_correction(est)
    return est


def estimate_total_number(ensemble, n_sub=10):
    values = (ensemble.beta_view() * ensemble.alpha_view()).sum(axis=1)
    est = weighted_mean(ensemble, values, n_sub=n_sub)
    if ensemble.kind == WIGNER:
        est.mean = est.mean - 0.5 * ensemble.n_modes
    return est


def estimate_quadrature_variances(ensemble, j=0, n_sub=10):
    """Variances of X = a + adag and Y = -i(a - adag) for mode j.

    For the doubled representation the normally ordered parts are
    <(alpha+beta)^2> - <alpha+beta>^2 plus the commutator 1; the diagonal
    Wigner ensemble estimates the symmetric moments directly.  Errors come
    from block-level variances.
    """
    a = ensemble.alpha_view()[:, j]
    b = ensemble.beta_view()[:, j]
    x = a + b
    y = -1j * (a - b)
    commutator = 0.0 if ensemble.kind == WIGNER else 1.0
    out = []
    for q in (x, y):
        m1, blocks1, n_alive = weighted_block_means(ensemble, q, n_sub)
        m2, blocks2, _ = weighted_block_means(ensemble, q * q, n_sub)
        var = (m2 - m1 ** 2).real + commutator
        block_var = (blocks2 - blocks1 ** 2).real + commutator
        out.append(ObservableEstimate(mean=var,
                                      std_error=subensemble_error(block_var),
                                      n_subensembles=n_sub, n_alive=n_alive))
    return tuple(out)


def estimate_g2(ensemble, k1, k2, n_sub=10):
    """Normalized second-order correlation g2(k1, k2).

    For k1 != k2 this is <beta1 alpha1 beta2 alpha2> /
    (<beta1 alpha1> <beta2 alpha2>); for k1 == k2 the normally ordered
    <beta^2 alpha^2> / <beta alpha>^2.  The error is the sub-ensemble spread
    of the block-level ratios.  If either denominator is consistent with
    zero at three standard errors the estimate is flagged unreliable.
    """
    if ensemble.kind != POSITIVE_P:
        raise TypeError("g2 estimation requires a positive-P ensemble")
    a = ensemble.alpha_view()
    b = ensemble.beta_view()
    n1 = b[:, k1] * a[:, k1]
    if k1 == k2:
        num = b[:, k1] * b[:, k1] * a[:, k1] * a[:, k1]
        n2 = n1
    else:
        n2 = b[:, k2] * a[:, k2]
        num = n1 * n2
    num_m, num_b, n_alive = weighted_block_means(ensemble, num, n_sub)
    d1_m, d1_b, _ = weighted_block_means(ensemble, n1, n_sub)
    d2_m, d2_b, _ = weighted_block_means(ensemble, n2, n_sub)

    unreliable = False
    for dm, db in ((d1_m, d1_b), (d2_m, d2_b)):
        if abs(dm.real) <= 3.0 * subensemble_error(db):
            unreliable = True
    mean = (num_m / (d1_m * d2_m)).real
    with np.errstate(divide="ignore", invalid="ignore"):
        block_ratio = (num_b / (d1_b * d2_b)).real
    if not np.isfinite(block_ratio).all():
        unreliable = True
        block_ratio = block_ratio[np.isfinite(block_ratio)]
        if block_ratio.size < 2:
            block_ratio = np.array([mean, mean])
    return ObservableEstimate(mean=mean,
                              std_error=subensemble_error(block_ratio),
                              n_subensembles=n_sub, n_alive=n_alive,
                              unreliable=unreliable)


def estimate_g1(ensemble, k1, k2, n_sub=10):
    """First-order coherence g1(k1, k2) = <adag_k1 a_k2>/sqrt(<n_k1><n_k2>)."""
    if ensemble.kind != POSITIVE_P:
        raise TypeError("g1 estimation requires a positive-P ensemble")
    a = ensemble.alpha_view()
    b = ensemble.beta_view()
    num_m, num_b, n_alive = weighted_block_means(ensemble, b[:, k1] * a[:, k2], n_sub)
    d1_m, d1_b, _ = weighted_block_means(ensemble, b[:, k1] * a[:, k1], n_sub)
    d2_m, d2_b, _ = weighted_block_means(ensemble, b[:, k2] * a[:, k2], n_sub)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = num_m / np.sqrt(d1_m * d2_m)
        blocks = num_b / np.sqrt(d1_b * d2_b)
    bad = ~np.isfinite(blocks)
    unreliable = bool(bad.any()) or not np.isfinite(mean)
    blocks = blocks[~bad]
    if blocks.size < 2:
        blocks = np.array([mean, mean])
    return ObservableEstimate(mean=complex(mean),
                              std_error=subensemble_error(blocks),
                              n_subensembles=n_sub, n_alive=n_alive,
                              unreliable=unreliable)


# -- collision-style initial states ----------------------------------------


def ring_kinetic_matrix(n_sites):
    """Periodic lattice Laplacian omega with dispersion 1 - cos k (dx = 1)."""
    omega = np.eye(n_sites, dtype=complex)
    idx = np.arange(n_sites)
    omega[idx, (idx + 1) % n_sites] -= 0.5
    omega[idx, (idx - 1) % n_sites] -= 0.5
    return omega


def collision_model(n_sites, interaction):
    """Free-flight lattice (trap off) with on-site nonlinearity chi = g/2."""
    return BoseLatticeModel(ring_kinetic_matrix(n_sites), 0.5 * interaction)


def gp_ground_profile(n_sites, trap_curvature, interaction, atom_number,
                      dt=0.05, max_steps=20000, tol=1e-12):
    """Mean-field ground state in a harmonic trap by imaginary-time relaxation.

    Gradient flow of the lattice energy functional with the norm re-fixed to
    `atom_number` after every step; iterates until the profile stops moving.
    """
    omega = ring_kinetic_matrix(n_sites)
    x = np.arange(n_sites) - (n_sites - 1) / 2.0
    v = 0.5 * trap_curvature * x ** 2
    h0 = omega + np.diag(v)
    psi = np.exp(-x ** 2 / (2.0 * np.sqrt(n_sites))).astype(complex)
    psi *= np.sqrt(atom_number / np.sum(np.abs(psi) ** 2))
    for _ in range(max_steps):
        grad = h0 @ psi + interaction * np.abs(psi) ** 2 * psi
        new = psi - dt * grad
        new *= np.sqrt(atom_number / np.sum(np.abs(new) ** 2))
        change = np.max(np.abs(new - psi))
        psi = new
        if change < tol:
            break
    return psi


def init_collision_state(model, gp_profile, v_bragg, v_seed, seed_fraction,
                         trajectory_count, master_seed):
    """Coherent ensemble for a counter-propagating collision with a weak seed.

    The mean field is the supplied profile modulated by three plane waves:
    two packets of equal weight at lattice velocities +/- v_bragg and a seed
    of weight `seed_fraction` at -v_seed, all along the single axis
    (velocities are crystal momenta in radians per site, dx = 1).  The packet
    weights are (1 - seed_fraction)/2 each, so the total norm is preserved
    whenever the packets occupy disjoint momentum regions.
    """
    gp_profile = np.asarray(gp_profile, dtype=complex)
    if gp_profile.shape != (model.n_modes,):
        raise ValueError("gp_profile length must equal the mode count")
    if not 0.0 <= seed_fraction < 1.0:
        raise ValueError("seed_fraction must lie in [0, 1)")
    for v in (v_bragg, v_seed):
        if abs(v) > np.pi + 1e-12:
            raise ValueError("momentum exceeds the lattice Nyquist limit pi")
    main = 0.5 * (1.0 - seed_fraction)
    x = np.arange(model.n_modes)
    factor = (np.sqrt(main) * np.exp(1j * v_bragg * x)
              + np.sqrt(main) * np.exp(-1j * v_bragg * x))
    if seed_fraction > 0.0:
        factor = factor + np.sqrt(seed_fraction) * np.exp(-1j * v_seed * x)
    return coherent_ensemble(gp_profile * factor, trajectory_count, master_seed)


def to_momentum_space(ensemble):
    """Ensemble re-expressed in lattice momentum modes (unitary DFT).

    alpha_k = sum_j exp(-i k x_j) alpha_j / sqrt(M) and the bra amplitudes
    with the opposite phase, so beta_k alpha_k estimates the mode occupation
    <n_k>.  Intended for estimation only; shares weights and streams with the
    source ensemble.
    """
    if ensemble.kind != POSITIVE_P:
        raise TypeError("momentum transform expects a positive-P ensemble")
    m = ensemble.n_modes
    a = np.fft.fft(ensemble.alpha_view(), axis=1) / np.sqrt(m)
    b = np.fft.ifft(ensemble.beta_view(), axis=1) * np.sqrt(m)
    return Ensemble(POSITIVE_P, m, np.concatenate([a, b], axis=1),
                    ensemble.log_weight.copy(), ensemble.master_seed,
                    time=ensemble.time, step_index=ensemble.step_index,
                    alive=ensemble.alive.copy(), rngs=ensemble._rngs)


def mode_velocities(n_sites):
    """Lattice velocity (crystal momentum) of each DFT mode index."""
    return 2.0 * np.pi * np.fft.fftfreq(n_sites)

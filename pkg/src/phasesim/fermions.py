"""Gaussian-representation thermal equilibrium of the fermionic Hubbard model.

The grand-canonical density operator obeys d rho / d tau =
-(1/2)[H - mu N, rho]_+ ; mapped onto the number-conserving Gaussian basis
this becomes an Ito flow of one Green's-function matrix per spin,

    d n_s / d tau = (1/2) { (I - n_s) T_s^(1) n_s + n_s T_s^(2) (I - n_s) }
    T_s^(r)[i,j]  = t[i,j] - delta_ij ( U * n_{-s}[j,j] - mu + s * xi_j^(r) )

with shared real noises <xi_j^(r) xi_j'^(r')> = 2 U delta(tau - tau')
delta_jj' delta_rr' entering the two spin sectors with opposite sign
s = (-1 for up, +1 for down), and a weight obeying
d Omega / d tau = -Omega * H(n_up, n_down) where
H(n) = -sum_ij t_ij (n_up + n_down)[i,j] + U sum_j n_down[j,j] n_up[j,j].

Every coefficient is real, so trajectories stay real and the weights stay
positive: there is no sign problem.  State is nevertheless stored in complex
arrays so that any imaginary drift (which would signal a mapping bug) can be
measured rather than assumed away.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import FERMI, Ensemble, weighted_mean
from .engine import SdeProblem, StepSchedule

_SIGN = {"up": -1.0, "down": +1.0}  # spin label sigma = (-1, +1) for (up, down)


@dataclass(frozen=True)
class FermiHubbardModel:
    """Inter-site coupling matrix, on-site repulsion and chemical potential."""

    t_hop: np.ndarray
    U: float
    mu: float
    lattice: str = "custom"

    def __post_init__(self):
        t_hop = np.atleast_2d(np.asarray(self.t_hop, dtype=float))
        if t_hop.shape[0] != t_hop.shape[1]:
            raise ValueError("t_hop must be square")
        if not np.allclose(t_hop, t_hop.T):
            raise ValueError("t_hop must be symmetric")
        if np.abs(np.diag(t_hop)).max(initial=0.0) > 0:
            raise ValueError("t_hop must have zero diagonal")
        if self.U < 0:
            raise ValueError("U must be non-negative")
        object.__setattr__(self, "t_hop", t_hop)
        object.__setattr__(self, "U", float(self.U))
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def n_sites(self):
        return self.t_hop.shape[0]

    @classmethod
    def chain(cls, n_sites, t, U, mu, periodic=False):
        t_hop = np.zeros((n_sites, n_sites))
        for j in range(n_sites - 1):
            t_hop[j, j + 1] = t_hop[j + 1, j] = t
        if periodic and n_sites > 2:
            t_hop[0, n_sites - 1] = t_hop[n_sites - 1, 0] = t
        bc = "periodic" if periodic else "open"
        return cls(t_hop, U, mu, lattice=f"chain-{n_sites}-{bc}")

    @classmethod
    def rectangle(cls, nx, ny, t, U, mu, periodic=False):
        n = nx * ny
        t_hop = np.zeros((n, n))

        def site(ix, iy):
            return iy * nx + ix

        for iy in range(ny):
            for ix in range(nx):
                right = (ix + 1) % nx if periodic else ix + 1
                if right < nx and right != ix:
                    t_hop[site(ix, iy), site(right, iy)] = t
                    t_hop[site(right, iy), site(ix, iy)] = t
                up = (iy + 1) % ny if periodic else iy + 1
                if up < ny and up != iy:
                    t_hop[site(ix, iy), site(ix, up)] = t
                    t_hop[site(ix, up), site(ix, iy)] = t
        bc = "periodic" if periodic else "open"
        return cls(t_hop, U, mu, lattice=f"rectangle-{nx}x{ny}-{bc}")


@dataclass(frozen=True)
class ThermalSchedule:
    """Imaginary-time grid tau in [0, tau_max] in steps of d_tau.

    Values are recorded every `record_every` in tau, which must be a multiple
    of d_tau; `record_taus` lists the recorded grid.
    """

    tau_max: float
    d_tau: float
    record_every: float = 0.0

    def __post_init__(self):
        if not 0 < self.d_tau <= self.tau_max:
            raise ValueError("need 0 < d_tau <= tau_max")
        n_steps = round(self.tau_max / self.d_tau)
        if abs(n_steps * self.d_tau - self.tau_max) > 1e-9 * self.tau_max:
            raise ValueError("d_tau must divide tau_max")
        record_every = self.record_every or self.d_tau
        stride = round(record_every / self.d_tau)
        if stride < 1 or abs(stride * self.d_tau - record_every) > 1e-9 * record_every:
            raise ValueError("record_every must be a multiple of d_tau")
        object.__setattr__(self, "record_every", float(record_every))

    @property
    def n_steps(self):
        return round(self.tau_max / self.d_tau)

    @property
    def record_stride(self):
        return round(self.record_every / self.d_tau)

    @property
    def record_taus(self):
        stride = self.record_stride
        return [k * self.d_tau for k in range(0, self.n_steps + 1, stride)]

    def to_step_schedule(self):
        return StepSchedule(dt=self.d_tau, n_steps=self.n_steps,
                            record_stride=self.record_stride)


def phase_space_energy(model, n_up, n_down):
    """H evaluated on phase-space variables, per trajectory (total energy)."""
    t_part = np.sum(model.t_hop[None, :, :] * (n_up + n_down), axis=(1, 2))
    idx = np.arange(model.n_sites)
    u_part = model.U * np.sum(n_down[:, idx, idx] * n_up[:, idx, idx], axis=1)
    return -t_part + u_part


def fermi_hubbard_problem(model):
    """Matrix-valued Ito problem for grand-canonical imaginary-time evolution.

    Per step the engine draws 2M unit white noises per trajectory; columns
    0..M-1 are the r=1 noises, columns M..2M-1 the r=2 noises, scaled
    internally by sqrt(2U) to the correlation <xi xi> = 2U/d_tau.  Each noise
    is shared between the spin sectors with opposite sign, which is what
    decouples the on-site interaction.
    """
    m = model.n_sites
    dim = 2 * m * m
    t_hop = model.t_hop.astype(complex)
    amp = np.sqrt(2.0 * model.U)
    idx = np.arange(m)
    eye = np.eye(m, dtype=complex)

    def unpack(lam):
        n_up = lam[:, :m * m].reshape(-1, m, m)
        n_down = lam[:, m * m:].reshape(-1, m, m)
        return n_up, n_down

    def drift(lam):
        n_up, n_down = unpack(lam)
        out = np.empty_like(lam).reshape(-1, 2, m, m)
        for s, (n_s, n_other) in enumerate(((n_up, n_down), (n_down, n_up))):
            t_eff = np.broadcast_to(t_hop, n_s.shape).copy()
            t_eff[:, idx, idx] -= model.U * n_other[:, idx, idx] - model.mu
            p_s = eye - n_s
            out[:, s] = 0.5 * (p_s @ t_eff @ n_s + n_s @ t_eff @ p_s)
        return out.reshape(-1, dim)

    def diffusion_dot(lam, w):
        n_up, n_down = unpack(lam)
        xi1 = amp * w[:, :m]
        xi2 = amp * w[:, m:]
        out = np.empty_like(lam).reshape(-1, 2, m, m)
        for s, (name, n_s) in enumerate((("up", n_up), ("down", n_down))):
            coef = -0.5 * _SIGN[name]
            p_s = eye - n_s
            out[:, s] = coef * ((p_s * xi1[:, None, :]) @ n_s
                                + (n_s * xi2[:, None, :]) @ p_s)
        return out.reshape(-1, dim)

    def diffusion(lam):
        n_up, n_down = unpack(lam)
        n_traj = lam.shape[0]
        b = np.zeros((n_traj, 2, m, m, 2, m), dtype=complex)
        for s, (name, n_s) in enumerate((("up", n_up), ("down", n_down))):
            coef = -0.5 * _SIGN[name]
            p_s = eye - n_s
            # column (r=1, j): coef * outer(P[:, j], n[j, :])
            b[:, s, :, :, 0, :] = coef * amp * np.einsum(
                "taj,tjb->tabj", p_s, n_s)
            b[:, s, :, :, 1, :] = coef * amp * np.einsum(
                "taj,tjb->tabj", n_s, p_s)
        return b.reshape(n_traj, dim, 2 * m)

    def weight_drift(lam):
        n_up, n_down = unpack(lam)
        return -phase_space_energy(model, n_up, n_down)

    return SdeProblem(dimension=dim, n_noise=2 * m, drift=drift,
                      diffusion=diffusion, diffusion_dot=diffusion_dot,
                      weight_drift=weight_drift,
                      label=f"fermi-hubbard {model.lattice}",
                      meta={"model": model, "kind": FERMI})


def init_infinite_temperature(model, trajectory_count, master_seed):
    """tau = 0 ensemble: n_up = n_down = I/2 with unit weight.

    This Gaussian kernel is proportional to the identity (maximally mixed)
    operator, which the tau -> 0 oracle checks confirm: <n_sigma> = 1/2 and
    <n_down n_up> = 1/4 exactly.
    """
    m = model.n_sites
    n = int(trajectory_count)
    if n < 1:
        raise ValueError("trajectory_count must be >= 1")
    half = 0.5 * np.eye(m, dtype=complex).ravel()
    row = np.concatenate([half, half])
    return Ensemble(FERMI, m, np.tile(row, (n, 1)), np.zeros(n, dtype=complex),
                    master_seed)


def estimate_double_occupancy(ensemble, n_sub=10):
    """Site-averaged <n_down n_up> (the kernel factorizes across spins)."""
    n_up, n_down = ensemble.green_views()
    idx = np.arange(ensemble.n_modes)
    values = np.mean(n_down[:, idx, idx] * n_up[:, idx, idx], axis=1)
    return weighted_mean(ensemble, values, n_sub=n_sub)


def estimate_energy(ensemble, model, n_sub=10):
    """Total energy -sum t_ij n_ij + U sum n_down n_up (no mu N term)."""
    n_up, n_down = ensemble.green_views()
    return weighted_mean(ensemble, phase_space_energy(model, n_up, n_down),
                         n_sub=n_sub)


def estimate_filling(ensemble, spin="sum", n_sub=10):
    """Site-averaged occupation per spin (or summed over spins)."""
    n_up, n_down = ensemble.green_views()
    idx = np.arange(ensemble.n_modes)
    if spin == "up":
        values = np.mean(n_up[:, idx, idx], axis=1)
    elif spin == "down":
        values = np.mean(n_down[:, idx, idx], axis=1)
    elif spin == "sum":
        values = np.mean(n_up[:, idx, idx] + n_down[:, idx, idx], axis=1)
    else:
        raise ValueError("spin must be 'up', 'down' or 'sum'")
    return weighted_mean(ensemble, values, n_sub=n_sub)


def imaginary_drift(ensemble):
    """Largest imaginary component over state and log-weights, relative to O(1).

    The mapping keeps everything real; a value above machine-epsilon
    accumulation signals an implementation bug.
    """
    state_imag = np.abs(ensemble.state.imag).max(initial=0.0)
    weight_imag = np.abs(ensemble.log_weight.imag).max(initial=0.0)
    return float(max(state_imag, weight_imag))


def thermal_recorder(model, n_sub=10):
    """Recorder with the standard thermal columns plus reality diagnostics."""
    from .engine import diagnostic_estimate

    def record(ensemble):
        return {
            "n_up": estimate_filling(ensemble, "up", n_sub),
            "n_down": estimate_filling(ensemble, "down", n_sub),
            "double_occ": estimate_double_occupancy(ensemble, n_sub),
            "energy": estimate_energy(ensemble, model, n_sub),
            "imag_drift": diagnostic_estimate(imaginary_drift(ensemble)),
            "min_log_weight": diagnostic_estimate(
                ensemble.log_weight.real[ensemble.alive].min()),
        }

    return record

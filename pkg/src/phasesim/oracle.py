"""Brute-force exact-diagonalization oracles for small lattices.

Dense, deliberately small-scale ground truth for the stochastic samplers:
bosonic Fock-space evolution of the lattice Hamiltonian from a coherent
state, and grand-canonical traces for the fermionic Hubbard model.  Where a
closed form exists (Kerr oscillator, free fermions) it is provided as an
independent second computation path.
"""

from __future__ import annotations

import numpy as np


class OracleSizeError(ValueError):
    """Hilbert-space dimension exceeds the oracle's brute-force limit."""


class CutoffError(ValueError):
    """Fock cutoff too small for the requested coherent state."""


MAX_DIM = 10 ** 6


def coherent_cutoff(n_mean):
    """Per-mode cutoff n_max >= nbar + 8 sqrt(nbar) + 10 (Poisson tail < 1e-10)."""
    n_mean = float(n_mean)
    return int(np.ceil(n_mean + 8.0 * np.sqrt(n_mean) + 10.0))


# -- bosons ------------------------------------------------------------------


class FockBasisBoson:
    """Product Fock basis for M modes with a common per-mode cutoff."""

    def __init__(self, n_modes, n_max):
        self.n_modes = int(n_modes)
        self.n_max = int(n_max)
        dim = (self.n_max + 1) ** self.n_modes
        if dim > MAX_DIM:
            raise OracleSizeError(f"dimension {dim} exceeds {MAX_DIM}")
        self.dim = dim
        # occupations[s, j]: photon number of mode j in basis state s
        grids = np.indices((self.n_max + 1,) * self.n_modes)
        self.occupations = grids.reshape(self.n_modes, dim).T

    def lowering_ops(self):
        local = np.diag(np.sqrt(np.arange(1, self.n_max + 1)), 1)
        eye = np.eye(self.n_max + 1)
        ops = []
        for j in range(self.n_modes):
            op = np.array([[1.0]])
            for k in range(self.n_modes):
                op = np.kron(op, local if k == j else eye)
            ops.append(op.astype(complex))
        return ops

    def coherent_state(self, alpha):
        """Truncated product coherent state; raises if the tail is too heavy."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
        if alpha.size != self.n_modes:
            raise ValueError("need one amplitude per mode")
        vecs = []
        for a in alpha:
            v = np.empty(self.n_max + 1, dtype=complex)
            v[0] = np.exp(-0.5 * abs(a) ** 2)
            for n in range(1, self.n_max + 1):
                v[n] = v[n - 1] * a / np.sqrt(n)
            vecs.append(v)
        psi = np.ones(self.dim, dtype=complex)
        for j, v in enumerate(vecs):
            psi = psi * v[self.occupations[:, j]]
        deficit = abs(1.0 - np.vdot(psi, psi).real)
        if deficit > 1e-10:
            raise CutoffError(f"coherent-state truncation deficit {deficit:.2e}")
        return psi, deficit


def bose_hamiltonian(model, basis):
    """Dense H = sum_ij omega_ij adag_i a_j + chi sum_j adag_j adag_j a_j a_j."""
    ops = basis.lowering_ops()
    h = np.zeros((basis.dim, basis.dim), dtype=complex)
    occ = basis.occupations
    for i in range(basis.n_modes):
        for j in range(basis.n_modes):
            w = model.omega[i, j]
            if w == 0:
                continue
            if i == j:
                h[np.diag_indices(basis.dim)] += w * occ[:, j]
            else:
                h += w * (ops[i].conj().T @ ops[j])
    if model.chi:
        for j in range(basis.n_modes):
            h[np.diag_indices(basis.dim)] += (
                model.chi * occ[:, j] * (occ[:, j] - 1))
    return h


def ed_bose_evolve(model, alpha0, times, n_max=None):
    """Exact moments of the lattice model from a coherent start.

    Returns a dict with, per time: 'a' (<a_j>, shape (T, M)),
    'a2' (<a_j^2>), 'nmat' (<adag_i a_j>, shape (T, M, M)), 'g2'
    (normalized pair correlations, shape (T, M, M)), plus the scalar
    truncation 'deficit' and per-time 'norm'.
    """
    alpha0 = np.atleast_1d(np.asarray(alpha0, dtype=complex))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if n_max is None:
        n_max = coherent_cutoff(np.max(np.abs(alpha0) ** 2))
    basis = FockBasisBoson(model.n_modes, n_max)
    h = bose_hamiltonian(model, basis)
    if not np.allclose(h, h.conj().T, atol=1e-12):
        raise AssertionError("oracle Hamiltonian must be Hermitian")
    psi0, deficit = basis.coherent_state(alpha0)
    evals, vecs = np.linalg.eigh(h)
    coeff = vecs.conj().T @ psi0
    ops = basis.lowering_ops()
    occ = basis.occupations

    m = model.n_modes
    out = {
        "times": times,
        "a": np.zeros((times.size, m), dtype=complex),
        "a2": np.zeros((times.size, m), dtype=complex),
        "nmat": np.zeros((times.size, m, m), dtype=complex),
        "g2": np.zeros((times.size, m, m)),
        "norm": np.zeros(times.size),
        "deficit": deficit,
    }
    for ti, t in enumerate(times):
        psi = vecs @ (np.exp(-1j * evals * t) * coeff)
        out["norm"][ti] = np.vdot(psi, psi).real
        lowered = [op @ psi for op in ops]
        prob = np.abs(psi) ** 2
        for j in range(m):
            out["a"][ti, j] = np.vdot(psi, lowered[j])
            out["a2"][ti, j] = np.vdot(psi, ops[j] @ lowered[j])
        for i in range(m):
            for j in range(m):
                out["nmat"][ti, i, j] = np.vdot(lowered[i], lowered[j])
        n_mean = np.einsum("s,sj->j", prob, occ)
        for i in range(m):
            for j in range(m):
                if i == j:
                    num = float(prob @ (occ[:, i] * (occ[:, i] - 1)))
                else:
                    num = float(prob @ (occ[:, i] * occ[:, j]))
                out["g2"][ti, i, j] = num / (n_mean[i] * n_mean[j])
    return out


def kerr_expectation_a(alpha0, omega, times, chi=0.5):
    """Closed-form <a(t)> of the single-well model from a coherent state.

    <a(t)> = alpha exp(-i omega t) exp(|alpha|^2 (exp(-2 i chi t) - 1)):
    the collapse envelope is exp(nbar (cos 2 chi t - 1)), with full revival
    at t = pi / chi.
    """
    alpha0 = complex(alpha0)
    times = np.asarray(times, dtype=float)
    nbar = abs(alpha0) ** 2
    return alpha0 * np.exp(-1j * omega * times
                           + nbar * (np.exp(-2j * chi * times) - 1.0))


def kerr_expectation_a2(alpha0, omega, times, chi=0.5):
    """Closed-form <a(t)^2> of the single-well model from a coherent state."""
    alpha0 = complex(alpha0)
    times = np.asarray(times, dtype=float)
    nbar = abs(alpha0) ** 2
    return alpha0 ** 2 * np.exp(-2j * omega * times - 2j * chi * times
                                + nbar * (np.exp(-4j * chi * times) - 1.0))


# -- fermions ----------------------------------------------------------------


class FockBasisFermi:
    """All 4^M occupation states; mode order site-major, spin-minor.

    Mode index 2*j for (site j, up) and 2*j + 1 for (site j, down); basis
    state s encodes occupations in its bits, created left to right, which
    fixes every fermionic sign.
    """

    def __init__(self, n_sites):
        self.n_sites = int(n_sites)
        self.n_modes = 2 * self.n_sites
        dim = 4 ** self.n_sites
        if dim > MAX_DIM:
            raise OracleSizeError(f"dimension {dim} exceeds {MAX_DIM}")
        self.dim = dim
        states = np.arange(dim, dtype=np.int64)
        self.occ = ((states[:, None] >> np.arange(self.n_modes)[None, :]) & 1
                    ).astype(float)

    def mode(self, site, spin):
        return 2 * site + (0 if spin == "up" else 1)

    def hop_elements(self, m_to, m_from):
        """Sparse matrix elements of cdag_{m_to} c_{m_from} (m_to != m_from)."""
        states = np.arange(self.dim, dtype=np.int64)
        occ_from = (states >> m_from) & 1
        occ_to = (states >> m_to) & 1
        src = states[(occ_from == 1) & (occ_to == 0)]
        dst = src ^ (1 << m_from) ^ (1 << m_to)

        # parity of occupied modes below m_from, then below m_to after removal
        def parity_below(state, m):
            mask = (1 << m) - 1
            x = state & mask
            count = np.zeros_like(x)
            while np.any(x):
                count += x & 1
                x >>= 1
            return count

        p1 = parity_below(src, m_from)
        p2 = parity_below(src ^ (1 << m_from), m_to)
        sign = (-1.0) ** (p1 + p2)
        return dst, src, sign


def fermi_hamiltonian(model, basis):
    """Dense H and number operator diagonal in the occupation basis."""
    h = np.zeros((basis.dim, basis.dim))
    occ = basis.occ
    # interaction: U sum_j n_up n_down (diagonal)
    diag = np.zeros(basis.dim)
    for j in range(model.n_sites):
        diag += model.U * occ[:, basis.mode(j, "up")] * occ[:, basis.mode(j, "down")]
    h[np.diag_indices(basis.dim)] = diag
    # hopping: -sum_ij t_ij cdag_i c_j per spin
    for i in range(model.n_sites):
        for j in range(model.n_sites):
            if i == j or model.t_hop[i, j] == 0:
                continue
            for spin in ("up", "down"):
                dst, src, sign = basis.hop_elements(basis.mode(i, spin),
                                                    basis.mode(j, spin))
                h[dst, src] += -model.t_hop[i, j] * sign
    n_diag = occ.sum(axis=1)
    return h, n_diag


def ed_fermi_thermal(model, taus):
    """Grand-canonical traces Tr[exp(-tau (H - mu N)) O] / Z for small lattices.

    Returns per tau: site-resolved fillings 'n_up', 'n_down' (shape (T, M)),
    site-averaged 'double_occ' and total 'energy' (no -mu N term, matching
    the simulation estimator).
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    basis = FockBasisFermi(model.n_sites)
    h, n_diag = fermi_hamiltonian(model, basis)
    k = h - model.mu * np.diag(n_diag)
    if not np.allclose(k, k.T, atol=1e-12):
        raise AssertionError("oracle Hamiltonian must be Hermitian")
    evals, vecs = np.linalg.eigh(k)
    prob_basis = vecs ** 2  # |<s|k>|^2: all-real eigenvectors

    occ = basis.occ
    m = model.n_sites
    up_cols = [basis.mode(j, "up") for j in range(m)]
    down_cols = [basis.mode(j, "down") for j in range(m)]
    d_vec = np.mean(occ[:, up_cols] * occ[:, down_cols], axis=1)
    # eigenstate expectation values of the diagonal observables
    e_n_up = prob_basis.T @ occ[:, up_cols]
    e_n_down = prob_basis.T @ occ[:, down_cols]
    e_docc = prob_basis.T @ d_vec
    e_number = prob_basis.T @ occ.sum(axis=1)
    e_energy = evals + model.mu * e_number  # <H> = <H - mu N> + mu <N>

    out = {
        "taus": taus,
        "n_up": np.zeros((taus.size, m)),
        "n_down": np.zeros((taus.size, m)),
        "double_occ": np.zeros(taus.size),
        "energy": np.zeros(taus.size),
    }
    e0 = evals.min()
    for ti, tau in enumerate(taus):
        w = np.exp(-tau * (evals - e0))
        z = w.sum()
        out["n_up"][ti] = (w @ e_n_up) / z
        out["n_down"][ti] = (w @ e_n_down) / z
        out["double_occ"][ti] = (w @ e_docc) / z
        out["energy"][ti] = (w @ e_energy) / z
    return out


def free_fermi_thermal(t_hop, mu, taus):
    """Analytic grand-canonical moments at U = 0 (independent cross-check).

    Single-particle energies are eps_k = -eigvals(t_hop); the Green's
    function per spin is the Fermi matrix [I + exp(tau (eps - mu))]^{-1}
    rotated back to the site basis.  Wick's theorem gives the double
    occupancy as the product of the spin fillings.
    """
    t_hop = np.asarray(t_hop, dtype=float)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    eps, modes = np.linalg.eigh(-t_hop)
    m = t_hop.shape[0]
    out = {
        "taus": taus,
        "n_up": np.zeros((taus.size, m)),
        "n_down": np.zeros((taus.size, m)),
        "double_occ": np.zeros(taus.size),
        "energy": np.zeros(taus.size),
        "n_matrix": np.zeros((taus.size, m, m)),
    }
    for ti, tau in enumerate(taus):
        f = 1.0 / (1.0 + np.exp(tau * (eps - mu)))
        n_site = (modes * f[None, :]) @ modes.T
        filling = np.diag(n_site)
        out["n_up"][ti] = filling
        out["n_down"][ti] = filling
        out["n_matrix"][ti] = n_site
        out["double_occ"][ti] = np.mean(filling ** 2)
        out["energy"][ti] = 2.0 * np.sum(eps * f)
    return out

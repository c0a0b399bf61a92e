"""Gaussian-state analysis of Bogoliubov outputs.

Quadratures are x = (a + a^dag)/sqrt(2), p = -i(a - a^dag)/sqrt(2), so the
vacuum covariance is I/2.  Covariance matrices use xxpp ordering with
symplectic form Omega = [[0, I], [-I, 0]].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import EmptySubset, NotPositiveDefinite, NotSymplectic

_DEGENERACY_TOL = 1e-10


def omega(n):
    """Symplectic form for n modes in xxpp ordering."""
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, I], [-I, Z]])


def covariance_from_moments(N, M):
    """Covariance (xxpp) from N_ij = <a_i^dag a_j> and M_ij = <a_i a_j>."""
    n = N.shape[0]
    I = np.eye(n)
    xx = 0.5 * I + N.real + M.real
    xp = N.imag + M.imag
    px = -N.imag + M.imag
    pp = 0.5 * I + N.real - M.real
    return np.block([[xx, xp], [px, pp]])


def covariance_from_quadrature_rotation(N, M):
    """Same covariance built as L Phi L^dag from the complex moment matrix.

    Phi holds the symmetrized second moments of (a, a^dag); L maps (a, a^dag)
    to (x, p).  Used as an independent construction.
    """
    n = N.shape[0]
    I = np.eye(n)
    # <{A_i, A_j^dag}>/2 with A = (a, a^dag)
    aa_dag = 0.5 * (I + N.T + N.T)  # <a_i a_j^dag + a_j^dag a_i>/2 = delta/2 + N_ji
    Phi = np.block([[aa_dag, M], [M.conj(), aa_dag.conj()]])
    L = np.block([[I, I], [-1j * I, 1j * I]]) / np.sqrt(2)
    S = L @ Phi @ L.conj().T
    return S.real


@dataclass
class GaussianState:
    """Zero-mean Gaussian state described by its moment matrices."""

    labels: list
    N: np.ndarray
    M: np.ndarray

    @property
    def n_modes(self):
        return self.N.shape[0]

    @property
    def sigma(self):
        return covariance_from_moments(self.N, self.M)


def moments_from_VW(V, W, labels=None) -> GaussianState:
    """Moments of b = V a + W a^dag acting on vacuum.

    ``V`` and ``W`` may hold any subset of output rows; the state then covers
    exactly those modes.
    """
    N = np.conj(W) @ W.T
    M = V @ W.T
    if labels is None:
        labels = list(range(V.shape[0]))
    return GaussianState(list(labels), N, M)


def reduce(state: GaussianState, subset) -> GaussianState:
    """Reduced state on the modes ``subset`` (indices into ``state.labels``)."""
    idx = np.asarray(subset, dtype=int)
    if idx.size == 0:
        raise EmptySubset("mode subset is empty")
    return GaussianState([state.labels[i] for i in idx], state.N[np.ix_(idx, idx)],
                         state.M[np.ix_(idx, idx)])


def _check_spd(sigma):
    if not np.allclose(sigma, sigma.T, atol=1e-10 * max(1.0, np.max(np.abs(sigma)))):
        raise NotPositiveDefinite("covariance is not symmetric")
    w, v = np.linalg.eigh(0.5 * (sigma + sigma.T))
    if w[0] <= 0:
        raise NotPositiveDefinite(f"covariance has eigenvalue {w[0]:.3g}")
    return w, v


def symplectic_eigenvalues(sigma):
    """Symplectic eigenvalues sorted descending."""
    n = sigma.shape[0] // 2
    ev = np.linalg.eigvals(1j * omega(n) @ sigma)
    return np.sort(np.abs(ev.real))[::-1][::2]


def williamson(sigma):
    """Williamson decomposition sigma = S (D + D) S^T.

    Returns ``(S, d)`` with ``d`` sorted descending.
    """
    n = sigma.shape[0] // 2
    w, v = _check_spd(sigma)
    sqrt_sigma = (v * np.sqrt(w)) @ v.T
    K = sqrt_sigma @ omega(n) @ sqrt_sigma
    ev, Z = np.linalg.eigh(1j * K)
    pos = np.argsort(ev)[::-1][:n]
    d = ev[pos]
    z = Z[:, pos]
    a = np.sqrt(2) * z.real
    b = np.sqrt(2) * z.imag
    O = np.hstack([b, a])
    S = sqrt_sigma @ O @ np.diag(np.concatenate([d, d]) ** -0.5)
    if np.ptp(d) < _DEGENERACY_TOL * max(1.0, d[0]):
        # fully degenerate spectrum: pick the symmetric representative
        wv, vv = np.linalg.eigh(sigma / d[0])
        S = (vv * np.sqrt(wv)) @ vv.T
    return S, d


def is_symplectic(S, tol=1e-8):
    n = S.shape[0] // 2
    Om = omega(n)
    return np.max(np.abs(S @ Om @ S.T - Om)) < tol * max(1.0, np.linalg.norm(S) ** 2)


def _symplectic_gram_schmidt(basis, Om):
    """Isotropic orthonormal u_i spanning, with Om^T u_i, the Om-invariant span of ``basis``."""
    rest = basis.copy()
    us = []
    while rest.shape[1] > 0:
        norms = np.linalg.norm(rest, axis=0)
        j = int(np.argmax(norms))
        if norms[j] < 1e-8:
            break
        u = rest[:, j] / norms[j]
        for prev in us:
            u -= prev * (prev @ u)
            pv = Om.T @ prev
            u -= pv * (pv @ u)
        u /= np.linalg.norm(u)
        us.append(u)
        pair = np.column_stack([u, Om.T @ u])
        rest = rest - pair @ (pair.T @ rest)
    return np.column_stack(us) if us else np.zeros((basis.shape[0], 0))


def bloch_messiah(S):
    """Bloch-Messiah decomposition S = O (R + 1/R) O'.

    Returns ``(O, r, O2)`` with ``r`` the diagonal of R sorted descending.
    """
    n = S.shape[0] // 2
    Om = omega(n)
    if not is_symplectic(S):
        raise NotSymplectic("matrix does not preserve the symplectic form")
    mu, vecs = np.linalg.eigh(S.T @ S)
    order = np.argsort(mu)[::-1]
    mu, vecs = mu[order], vecs[:, order]
    lam = np.sqrt(np.clip(mu, 0, None))
    P = (vecs * lam) @ vecs.T
    O_pol = S @ ((vecs / lam) @ vecs.T)
    big = lam > 1 + _DEGENERACY_TOL
    m = int(np.sum(big))
    small = lam < 1 - _DEGENERACY_TOL
    if int(np.sum(small)) != m:
        m = min(m, int(np.sum(small)))
    Ux = vecs[:, :m]
    middle = vecs[:, m:2 * n - m]
    if middle.shape[1]:
        Ux = np.hstack([Ux, _symplectic_gram_schmidt(middle, Om)])
    Q = np.hstack([Ux, Om.T @ Ux])
    r = np.diag(Q.T @ P @ Q)[:n]
    return O_pol @ Q, r, Q.T


def random_symplectic(n, rng, max_squeezing=1.0):
    """Random symplectic matrix O1 (R + 1/R) O2 with random orthogonal-symplectic O's."""
    from scipy.stats import unitary_group

    def osp():
        U = unitary_group.rvs(n, random_state=rng) if n > 1 else np.exp(2j * np.pi * rng.random()).reshape(1, 1)
        X, Y = U.real, U.imag
        return np.block([[X, -Y], [Y, X]])

    r = np.exp(rng.uniform(-max_squeezing, max_squeezing, n))
    return osp() @ np.diag(np.concatenate([r, 1 / r])) @ osp()


def photon_numbers(d, r, N_reduced):
    """(n_th, n_sq, n_tot) from symplectic eigenvalues d, Bloch-Messiah r and N."""
    n_th = float(np.sum(np.asarray(d) - 0.5))
    n_sq = float(np.sum(np.sinh(np.log(np.asarray(r))) ** 2))
    n_tot = float(np.trace(N_reduced).real)
    return n_th, n_sq, n_tot


def to_db(variance):
    return 10 * np.log10(np.asarray(variance) / 0.5)


def max_squeezing_db(sigma):
    """(squeezing dB, anti-squeezing dB, quadrature vector of the squeezed direction)."""
    w, v = _check_spd(sigma)
    return float(to_db(w[0])), float(to_db(w[-1])), v[:, 0]


@dataclass
class MercerWolf:
    occupancies: np.ndarray
    modes: np.ndarray  # columns
    squeezing_db: np.ndarray
    antisqueezing_db: np.ndarray


def mercer_wolf(N, M=None):
    """Modes diagonalizing N, sorted by occupancy (descending).

    With ``M`` given, each mode's single-mode covariance is formed and its
    minimum and maximum quadrature variances reported in dB.
    """
    w, U = np.linalg.eigh(0.5 * (N + N.conj().T))
    order = np.argsort(w)[::-1]
    w, U = w[order], U[:, order]
    sq = np.zeros_like(w)
    asq = np.zeros_like(w)
    if M is not None:
        for j in range(len(w)):
            u = U[:, j]
            m = u @ M @ u
            n = w[j]
            sq[j] = to_db(0.5 + n - abs(m))
            asq[j] = to_db(0.5 + n + abs(m))
    return MercerWolf(w, U, sq, asq)


def fidelity(sigma_a, sigma_b):
    """Uhlmann fidelity (Tr sqrt(sqrt(rho_a) rho_b sqrt(rho_a)))^2 of zero-mean Gaussian states."""
    _check_spd(sigma_a)
    _check_spd(sigma_b)
    n = sigma_a.shape[0] // 2
    Om = omega(n)
    Vs = sigma_a + sigma_b
    Vaux = Om.T @ np.linalg.solve(Vs, Om / 4 + sigma_b @ Om @ sigma_a)
    A = Vaux @ Om
    inner = np.eye(2 * n) + np.linalg.matrix_power(np.linalg.inv(A), 2) / 4
    root = linalg.sqrtm(inner)
    Ftot4 = np.linalg.det(2 * (root + np.eye(2 * n)) @ Vaux)
    root_fid = np.real(Ftot4) ** 0.25 / np.linalg.det(Vs) ** 0.25
    return float(np.clip(root_fid**2, 0.0, 1.0))


@dataclass
class InterlacingReport:
    ok: bool
    full: np.ndarray
    reduced: np.ndarray
    violations: list = field(default_factory=list)


def drop_mode(sigma, j):
    n = sigma.shape[0] // 2
    keep = [i for i in range(2 * n) if i not in (j, n + j)]
    return sigma[np.ix_(keep, keep)]


def interlacing_check(sigma_full, sigma_reduced, tol=1e-8):
    """Check d~_1 >= d_2 and d_i >= d~_{i+1} >= d_{i+2} (1-based, descending)."""
    d = symplectic_eigenvalues(sigma_full)
    dr = symplectic_eigenvalues(sigma_reduced)
    bad = []
    n = len(d)
    if n >= 2 and dr[0] < d[1] - tol:
        bad.append(("d~1 >= d2", dr[0], d[1]))
    for i in range(n - 2):
        if d[i] < dr[i + 1] - tol:
            bad.append((f"d{i + 1} >= d~{i + 2}", d[i], dr[i + 1]))
        if dr[i + 1] < d[i + 2] - tol:
            bad.append((f"d~{i + 2} >= d{i + 3}", dr[i + 1], d[i + 2]))
    if np.any(dr < 0.5 - tol):
        bad.append(("d~ >= 1/2", float(dr.min()), 0.5))
    return InterlacingReport(not bad, d, dr, bad)


def basis_overlaps(O2):
    """Overlap of the Williamson (thermal) modes with the squeezing modes.

    Returns two labelled matrices: the quadrature-space overlap
    |O2[:n, :n]|^2 + |O2[:n, n:]|^2 and the complex-mode overlap |U|^2 with
    U = X + iY read off the orthogonal-symplectic block form.
    """
    n = O2.shape[0] // 2
    X = O2[:n, :n]
    Y = O2[n:, :n]
    quad = X**2 + O2[:n, n:] ** 2
    complex_mode = np.abs(X + 1j * Y) ** 2
    return {"quadrature_space": quad, "complex_mode": complex_mode}


@dataclass
class StateReport:
    n_modes: int
    symplectic_eigenvalues: np.ndarray
    squeezing_r: np.ndarray
    n_th: float
    n_sq: float
    n_tot: float
    max_squeezing_db: float
    max_antisqueezing_db: float
    mercer_wolf: MercerWolf


def analyze_state(state: GaussianState) -> StateReport:
    """All observables of one (usually reduced) state."""
    sigma = state.sigma
    S, d = williamson(sigma)
    _, r, _ = bloch_messiah(S)
    n_th, n_sq, n_tot = photon_numbers(d, r, state.N)
    sq, asq, _ = max_squeezing_db(sigma)
    mw = mercer_wolf(state.N, state.M)
    return StateReport(state.n_modes, d, np.log(r), n_th, n_sq, n_tot, sq, asq, mw)

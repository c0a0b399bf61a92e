"""Split-step propagation of the linearized signal and idler operators.

Operators are discretized as ``b = sqrt(dk) a(k_i)`` and gathered in the
vector ``(b, b^dagger)``.  The nonlinear generator couples modes only through
k-integrated arc fields, so it factors as ``U G E`` with a small core ``G``
(dimension 2 x 3 bins x local modes).  The exponential of that low-rank
generator is evaluated exactly with the phi_1 function of the small core.

Two operator bases are supported: ``"local"`` (arc fields) and ``"out"``
(asymptotic-out ports).  Both give the same propagator up to the basis change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core_model import GENERATED_LABELS, SystemConfig
from .errors import IllConditioned, SeriesDiverged
from .nonlinear_coupling import ALL_TERMS, NonlinearTable, coupling_blocks
from .pump_solver import PumpTrajectory


@dataclass(frozen=True)
class ModeVectorLayout:
    """Row index of (bin, port or local mode, k index); conjugates follow at +N."""

    labels: tuple
    n_k: tuple
    n_modes: int

    @classmethod
    def from_config(cls, cfg: SystemConfig, n_modes, labels=GENERATED_LABELS):
        return cls(tuple(labels), tuple(cfg.bin(J).n_k for J in labels), int(n_modes))

    @property
    def offsets(self):
        off, out = 0, {}
        for J, n in zip(self.labels, self.n_k):
            out[J] = off
            off += n * self.n_modes
        return out

    @property
    def size(self):
        return sum(self.n_k) * self.n_modes

    def index(self, J, nu, i):
        return self.offsets[J] + nu * self.n_k[self.labels.index(J)] + i

    def rows(self, J, nu):
        n = self.n_k[self.labels.index(J)]
        start = self.index(J, nu, 0)
        return np.arange(start, start + n)

    def to_json(self):
        return {"labels": list(self.labels), "n_k": list(self.n_k), "n_modes": self.n_modes,
                "order": "bin, mode, k", "conjugate_offset": self.size}


@dataclass
class PropagatorMatrix:
    matrix: np.ndarray
    basis: str
    t0: float
    tf: float
    layout: ModeVectorLayout

    @property
    def N(self):
        return self.layout.size

    @property
    def V(self):
        return self.matrix[: self.N, : self.N]

    @property
    def W(self):
        return self.matrix[: self.N, self.N:]


def bogoliubov_defects(V, W):
    """Max-abs violations of V V^dag - W W^dag = I and of the symmetry of V W^T."""
    n = V.shape[0]
    a = np.max(np.abs(V @ V.conj().T - W @ W.conj().T - np.eye(n)))
    vw = V @ W.T
    b = np.max(np.abs(vw - vw.T)) if vw.size else 0.0
    return float(a), float(b)


def phi1(Z, method="expm", tol=1e-14, max_terms=30):
    """phi_1(Z) = sum_n Z^n / (n+1)!.

    ``method="expm"`` uses the augmented-matrix exponential; ``"series"`` sums
    terms until their relative norm falls below ``tol``.
    """
    n = Z.shape[0]
    if method == "expm":
        aug = np.zeros((2 * n, 2 * n), dtype=complex)
        aug[:n, :n] = Z
        aug[:n, n:] = np.eye(n)
        return linalg.expm(aug)[:n, n:]
    term = np.eye(n, dtype=complex)
    total = term.copy()
    base = max(np.linalg.norm(total), 1.0)
    for m in range(1, max_terms):
        term = term @ Z / (m + 1)
        total += term
        if np.linalg.norm(term) < tol * base:
            return total
    raise SeriesDiverged(f"phi_1 series not converged after {max_terms} terms")


class SplitStepPropagator:
    """Builds and composes the short-time propagators for one pump trajectory.

    Args:
        cfg: validated config with bins
        table: nonlinear table
        maps (dict): ModeBasisMaps per generated bin
        trajectory: pump trajectory; its time grid sets the steps
        terms: enabled process families (``ALL_TERMS`` or e.g. ``DP_ONLY``)
        basis: ``"local"`` or ``"out"``
    """

    def __init__(self, cfg: SystemConfig, table: NonlinearTable, maps: dict,
                 trajectory: PumpTrajectory, terms=ALL_TERMS, basis="out", phi_method="expm"):
        self.cfg = cfg
        self.table = table
        self.maps = maps
        self.traj = trajectory
        self.terms = frozenset(terms)
        self.basis = basis
        self.phi_method = phi_method
        P = maps[GENERATED_LABELS[0]].H.shape[-1]
        self.P = P
        self.layout = ModeVectorLayout.from_config(cfg, P)
        N = self.layout.size
        self.N = N
        m = len(GENERATED_LABELS) * P
        self.m = m
        E = np.zeros((m, N), dtype=complex)
        U = np.zeros((N, m), dtype=complex)
        dw = np.zeros(N)
        for j, J in enumerate(GENERATED_LABELS):
            b = cfg.bin(J)
            mp = maps[J]
            if basis == "local":
                Eb = np.broadcast_to(np.eye(P), mp.H.shape)
                Ub = mp.C
            elif basis == "out":
                Eb = mp.H_out
                Ub = np.conj(np.swapaxes(mp.H_out, -1, -2))
            else:
                raise ValueError(f"unknown basis {basis!r}")
            sq = np.sqrt(b.dk)
            off = self.layout.offsets[J]
            n_k = b.n_k
            for nu in range(P):
                cols = off + nu * n_k + np.arange(n_k)
                E[j * P:(j + 1) * P, cols] = sq * Eb[:, :, nu].T
                U[cols, j * P:(j + 1) * P] = sq * Ub[:, nu, :]
                dw[cols] = b.detuning_grid(cfg.dispersion)
        self.E = E
        self.U = U
        self.dw = dw
        self.Wcore = E @ U
        self.dt = trajectory.dt

    # -- generator pieces --------------------------------------------------

    def core(self, t):
        """The 2m x 2m core G(t) in (y, y^dagger) ordering."""
        F = self.traj.fields_at(t)
        X, Y = coupling_blocks(self.table, F["P1"], F["P2"], t, self.terms)
        P, m = self.P, self.m
        G = np.zeros((2 * m, 2 * m), dtype=complex)
        for (row, col), val in X.items():
            r, c = GENERATED_LABELS.index(row), GENERATED_LABELS.index(col)
            idx = np.arange(P)
            G[r * P + idx, c * P + idx] += val
            G[m + r * P + idx, m + c * P + idx] -= np.conj(val)
        for (row, col), val in Y.items():
            r, c = GENERATED_LABELS.index(row), GENERATED_LABELS.index(col)
            idx = np.arange(P)
            G[r * P + idx, m + c * P + idx] += val
            G[m + r * P + idx, c * P + idx] -= np.conj(val)
        return G

    def dense_generators(self, t):
        """(A_L diagonal, A_NL dense) with d/dt b = i (A_L + A_NL) b."""
        A_L = np.concatenate([-self.dw, self.dw])
        G = self.core(t)
        Uf = linalg.block_diag(self.U, np.conj(self.U))
        Ef = linalg.block_diag(self.E, np.conj(self.E))
        return A_L, Uf @ G @ Ef

    def step_core(self, t, dt=None):
        """T with I + K_NL = I + Uf T Ef for the step centred at ``t``."""
        dt = self.dt if dt is None else dt
        G = self.core(t)
        if not np.any(G):
            return None
        Wf = linalg.block_diag(self.Wcore, np.conj(self.Wcore))
        Z = 1j * dt * (Wf @ G)
        return 1j * dt * G @ phi1(Z, self.phi_method)

    def half_phase(self, dt=None):
        dt = self.dt if dt is None else dt
        return np.concatenate([np.exp(-0.5j * self.dw * dt), np.exp(0.5j * self.dw * dt)])

    def step_matrix(self, n, dt=None):
        """Dense short-step propagator for step ``n`` (for tests and small runs)."""
        dt = self.dt if dt is None else dt
        t_mid = self.traj.t[0] + (n + 0.5) * dt
        D = self.half_phase(dt)
        K = np.eye(2 * self.N, dtype=complex)
        T = self.step_core(t_mid, dt)
        if T is not None:
            K = K + self._apply_right(T)
        return D[:, None] * K * D[None, :]

    def _apply_right(self, T):
        """Uf T Ef as a dense matrix."""
        N, m = self.N, self.m
        out = np.empty((2 * N, 2 * N), dtype=complex)
        Uc, Ec = np.conj(self.U), np.conj(self.E)
        out[:N, :N] = self.U @ T[:m, :m] @ self.E
        out[:N, N:] = self.U @ T[:m, m:] @ Ec
        out[N:, :N] = Uc @ T[m:, :m] @ self.E
        out[N:, N:] = Uc @ T[m:, m:] @ Ec
        return out

    # -- composition -------------------------------------------------------

    def n_steps(self):
        return len(self.traj.t) - 1

    def compose(self, n_start=0, n_stop=None) -> PropagatorMatrix:
        """Full propagator over steps [n_start, n_stop), right-to-left product."""
        n_stop = self.n_steps() if n_stop is None else n_stop
        N = self.N
        D = self.half_phase()
        Uf = linalg.block_diag(self.U, np.conj(self.U))
        Ef = linalg.block_diag(self.E, np.conj(self.E))
        K = np.eye(2 * N, dtype=complex)
        for n in range(n_start, n_stop):
            t_mid = self.traj.t[0] + (n + 0.5) * self.dt
            K = D[:, None] * K
            T = self.step_core(t_mid)
            if T is not None:
                K = K + Uf @ (T @ (Ef @ K))
            K = D[:, None] * K
        return PropagatorMatrix(K, self.basis, float(self.traj.t[n_start]), float(self.traj.t[n_stop]),
                                self.layout)

    def propagate_rows(self, rows, n_start=0, n_stop=None):
        """Selected rows of the composed propagator, computed backwards in time.

        Args:
            rows: indices into the 2N-dimensional operator vector

        Returns:
            array (len(rows), 2N)
        """
        n_stop = self.n_steps() if n_stop is None else n_stop
        N = self.N
        D = self.half_phase()
        Uf = linalg.block_diag(self.U, np.conj(self.U))
        Ef = linalg.block_diag(self.E, np.conj(self.E))
        R = np.zeros((len(rows), 2 * N), dtype=complex)
        R[np.arange(len(rows)), rows] = 1.0
        for n in range(n_stop - 1, n_start - 1, -1):
            t_mid = self.traj.t[0] + (n + 0.5) * self.dt
            R = R * D[None, :]
            T = self.step_core(t_mid)
            if T is not None:
                R = R + ((R @ Uf) @ T) @ Ef
            R = R * D[None, :]
        return R


def short_step(A_L, A_NL, dt, method="expm"):
    """K = exp(i A_L dt/2) (I + K_NL) exp(i A_L dt/2) for dense generators."""
    n = A_L.size
    if method == "expm":
        K_nl = linalg.expm(1j * dt * A_NL) - np.eye(n)
    else:
        Z = 1j * dt * A_NL
        K_nl = Z @ phi1(Z, "series")
    D = np.exp(0.5j * A_L * dt)
    return D[:, None] * (np.eye(n) + K_nl) * D[None, :]


def basis_change(maps: dict, layout: ModeVectorLayout):
    """Block-diagonal T with b_local = T b_out on the annihilator half."""
    N = layout.size
    T = np.zeros((N, N), dtype=complex)
    for J in layout.labels:
        Q = maps[J].H_out
        n_k = Q.shape[0]
        for s in range(layout.n_modes):
            for nu in range(layout.n_modes):
                r = layout.index(J, s, 0) + np.arange(n_k)
                c = layout.index(J, nu, 0) + np.arange(n_k)
                T[r, c] = Q[:, s, nu]
    return T


def to_out_basis(K: PropagatorMatrix, maps: dict) -> PropagatorMatrix:
    """Convert a local-basis propagator to the asymptotic-out basis."""
    if K.basis == "out":
        return K
    T = basis_change(maps, K.layout)
    cond = np.linalg.cond(T)
    if cond > 1e10:
        raise IllConditioned(f"basis change has condition number {cond:.3g}")
    Tf = linalg.block_diag(T, np.conj(T))
    M = np.linalg.solve(Tf, K.matrix @ Tf)
    return PropagatorMatrix(M, "out", K.t0, K.tf, K.layout)


def write_vw(path, V, W, layout: ModeVectorLayout, extra=None):
    """Binary dump of V then W (row-major little-endian complex128) plus a JSON sidecar."""
    import json

    with open(path, "wb") as fh:
        np.ascontiguousarray(V, dtype="<c16").tofile(fh)
        np.ascontiguousarray(W, dtype="<c16").tofile(fh)
    meta = {"layout": layout.to_json(), "shape": list(V.shape), "dtype": "<c16",
            "blocks": ["V", "W"], "row_major": True}
    if extra:
        meta.update(extra)
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2)


def read_vw(path):
    import json

    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    rows, cols = meta["shape"]
    data = np.fromfile(path, dtype="<c16")
    V = data[: rows * cols].reshape(rows, cols)
    W = data[rows * cols: 2 * rows * cols].reshape(rows, cols)
    layout = ModeVectorLayout(tuple(meta["layout"]["labels"]), tuple(meta["layout"]["n_k"]),
                              meta["layout"]["n_modes"])
    return V, W, layout, meta

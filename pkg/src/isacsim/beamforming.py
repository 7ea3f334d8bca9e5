"""Transmit beamforming by successive convex approximation (SCA).

The CRB objective is non-convex in the beamformers W but becomes linear in
the Gram (covariance) variables Q_i = W_i W_i^H:

    minimize CRB  <=>  maximize  (kappa1 - kappa2^2)/(1 + kappa1) * sum_{k in G} chi_k Upsilon_k(Q)

with Upsilon_k(Q) = Tr(A_k sum_i Q_i), A_k = alpha_k H_los^H H_los + N_r I.
The communication-rate constraints stay non-convex; each SCA iteration
replaces log det(Psi_k) by its first-order expansion at the anchor Q_bar,
which upper-bounds it, so every surrogate-feasible point is exactly
feasible (inner approximation) and the surrogate is tight at the anchor.

The resulting inner problem -- maximize a linear functional of Hermitian
PSD matrices under concave log-det constraints and a power budget -- is
solved by a log-barrier interior-point method with exact gradients and
Hessians over an orthonormal real parametrisation of the Hermitian blocks.
Beamformers are recovered from the Grams by eigen-truncation; with
L = N_t the recovery is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import metrics
from .channel import ChannelSet
from .metrics import LN2, FimConstants
from .scenario import ScenarioConfig


class InfeasibleStartError(RuntimeError):
    """No strictly feasible starting point for the rate constraints."""


class SolverError(RuntimeError):
    """The inner convex solve failed to converge to its tolerance."""


@dataclass(frozen=True)
class BeamformerSet:
    """Transmit matrices, index 0 for the probe stream, k+1 for receiver k."""

    W: np.ndarray  # (K+1, N_t, L)

    def power(self) -> float:
        return float(np.sum(np.abs(self.W) ** 2))


@dataclass(frozen=True)
class GramSet:
    """Covariance lifting Q_i = W_i W_i^H of a beamformer set."""

    Q: np.ndarray  # (K+1, N_t, N_t) Hermitian PSD

    def total(self) -> np.ndarray:
        return self.Q.sum(axis=0)

    def power(self) -> float:
        return float(np.trace(self.total()).real)

    def check(self, tol: float = 1e-9) -> None:
        for i, Qi in enumerate(self.Q):
            w = np.linalg.eigvalsh(Qi)
            if w.min() < -tol * max(np.trace(Qi).real, 1e-300):
                raise ValueError(f"Gram {i} is not PSD (min eig {w.min()})")


@dataclass
class ScaTrace:
    """Per-iteration record of one SCA run."""

    iterations: list[tuple[float, float, float]] = field(default_factory=list)
    converged: bool = False
    reason: str = ""
    notes: list[str] = field(default_factory=list)

    def export_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("iter,objective,crb,max_violation\n")
            for i, (obj, crb, viol) in enumerate(self.iterations):
                fh.write(f"{i},{obj:.17g},{crb:.17g},{viol:.17g}\n")


# ---------------------------------------------------------------------------
# Hermitian real parametrisation
# ---------------------------------------------------------------------------

_BASIS_CACHE: dict[int, np.ndarray] = {}


def _hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal (Frobenius) basis of n x n Hermitian matrices, shape (n^2, n, n)."""
    if n in _BASIS_CACHE:
        return _BASIS_CACHE[n]
    mats = []
    for i in range(n):
        E = np.zeros((n, n), dtype=complex)
        E[i, i] = 1.0
        mats.append(E)
    for i in range(n):
        for j in range(i + 1, n):
            S = np.zeros((n, n), dtype=complex)
            S[i, j] = S[j, i] = 1.0 / math.sqrt(2.0)
            mats.append(S)
            A = np.zeros((n, n), dtype=complex)
            A[i, j] = 1j / math.sqrt(2.0)
            A[j, i] = -1j / math.sqrt(2.0)
            mats.append(A)
    basis = np.stack(mats)
    _BASIS_CACHE[n] = basis
    return basis


def _vec(Q: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.einsum("aij,ji->a", basis, Q).real


def _vec_many(Qs: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Row m is the coordinate vector of Qs[m]."""
    return np.einsum("aij,mji->ma", basis, Qs).real


def _mat(q: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.tensordot(q, basis, axes=(0, 0))


def _psd_cores(Xs: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Stack of matrices C[m,a,b] = Tr(X_m E_a X_m E_b) (each PSD for PSD X_m)."""
    P = np.einsum("mij,ajk->maik", Xs, basis)
    return np.einsum("maij,mbji->mab", P, P).real


# ---------------------------------------------------------------------------
# linearized rate constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearizedRateConstraint:
    """One receiver's concave surrogate rate constraint.

    value(Q) = log2 det(sigma^2 I + H (sum_{i in involved} Q_i) H^H)
               - sum_{i in interferers} Tr(T Q_i) - offset  >= 0

    interferers = involved minus the receiver's own beamformer; T carries the
    anchor's whitened channel, so value(anchor) equals the exact rate slack.
    """

    k: int
    H: np.ndarray
    involved: tuple[int, ...]
    own: int
    T: np.ndarray
    offset: float
    sigma2: float

    def value(self, Q: np.ndarray) -> float:
        Q = np.asarray(getattr(Q, "Q", Q))
        S = self.sigma2 * np.eye(self.H.shape[0], dtype=complex)
        total = Q[list(self.involved)].sum(axis=0)
        S = S + self.H @ total @ self.H.conj().T
        sign, logdet = np.linalg.slogdet(S)
        lin = sum(np.trace(self.T @ Q[i]).real for i in self.involved if i != self.own)
        return float(logdet / LN2 - lin - self.offset)


def _log2det(X: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(X)
    if sign.real <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return float(logdet / LN2)


def sca_linearize(k: int, b_k: int, Q_bar, H_comm_k: np.ndarray, sigma2: float,
                  R_th: float) -> LinearizedRateConstraint:
    """Build receiver k's surrogate constraint anchored at Q_bar.

    The probe Gram joins the interference set only when the receiver is not
    selected (an unselected receiver cannot cancel the probe).  The anchor
    covariance Psi_bar must be positive definite, which the noise floor
    guarantees for any PSD anchor.
    """
    Q = np.asarray(getattr(Q_bar, "Q", Q_bar))
    n_w = Q.shape[0]
    own = k + 1
    if b_k:
        involved = tuple(i for i in range(1, n_w))
    else:
        involved = tuple(range(n_w))
    interf = tuple(i for i in involved if i != own)
    N_r = H_comm_k.shape[0]
    psi = sigma2 * np.eye(N_r, dtype=complex)
    for i in interf:
        psi = psi + H_comm_k @ Q[i] @ H_comm_k.conj().T
    psi = 0.5 * (psi + psi.conj().T)
    psi_inv = np.linalg.inv(psi)
    T = H_comm_k.conj().T @ psi_inv @ H_comm_k / LN2
    T = 0.5 * (T + T.conj().T)
    offset = _log2det(psi) - sum(np.trace(T @ Q[i]).real for i in interf) + R_th
    return LinearizedRateConstraint(k=k, H=np.asarray(H_comm_k), involved=involved,
                                    own=own, T=T, offset=offset, sigma2=sigma2)


def build_objective_weight(b, consts: FimConstants, channels: ChannelSet,
                           cfg: ScenarioConfig) -> np.ndarray:
    """Hermitian weight F with objective Tr(F sum_i Q_i); its reciprocal is the CRB."""
    b = np.asarray(b)
    p = consts.pulses
    scale = (p.kappa1 - p.kappa2 ** 2) / (1.0 + p.kappa1)
    n = cfg.N_t
    F = np.zeros((n, n), dtype=complex)
    for k in np.flatnonzero(b):
        los = channels.los_sens[k]
        A_k = cfg.rician_alpha[k] * (los.conj().T @ los) + cfg.N_r * np.eye(n)
        F = F + consts.chi[k] * A_k
    return scale * 0.5 * (F + F.conj().T)


# ---------------------------------------------------------------------------
# log-barrier interior point
# ---------------------------------------------------------------------------

class _BarrierSolver:
    """Damped-Newton path following for the lifted subproblem.

    Maximizes c.z subject to the rate surrogates, the power budget, and PSD
    blocks, all folded into logarithmic barriers.  In epigraph mode an extra
    scalar s is appended to the variables and maximized against the
    constraint slacks (phase-1 feasibility search).  The caller normalizes
    the objective so the duality-gap target nu/t is meaningful.
    """

    def __init__(self, weight: np.ndarray, constraints, P_T: float, n: int,
                 n_blocks: int, epigraph: bool = False) -> None:
        self.basis = _hermitian_basis(n)
        self.n = n
        self.n_blocks = n_blocks
        self.bd = n * n
        self.qdim = n_blocks * self.bd
        self.dim = self.qdim + (1 if epigraph else 0)
        self.constraints = list(constraints)
        self.P_T = P_T
        self.epigraph = epigraph
        m = len(self.constraints)

        c = np.zeros(self.dim)
        if epigraph:
            c[-1] = 1.0
        else:
            w = _vec(weight, self.basis)
            for i in range(n_blocks):
                c[i * self.bd:(i + 1) * self.bd] = w
        self.c = c

        # constraint tables: channel stack, involvement masks, linear parts
        self.H = (np.stack([con.H for con in self.constraints])
                  if m else np.zeros((0, 0, n)))
        self.sigma2 = np.array([con.sigma2 for con in self.constraints])
        self.offsets = np.array([con.offset for con in self.constraints])
        self.mask = np.zeros((m, n_blocks), dtype=bool)
        self.lin = np.zeros((m, self.dim))
        for j, con in enumerate(self.constraints):
            self.mask[j, list(con.involved)] = True
            t_vec = _vec(con.T, self.basis)
            for i in con.involved:
                if i != con.own:
                    self.lin[j, i * self.bd:(i + 1) * self.bd] = t_vec
        # group constraints by identical involvement for Hessian placement
        groups: dict[tuple, list[int]] = {}
        for j in range(m):
            groups.setdefault(tuple(self.mask[j]), []).append(j)
        self.groups = {key: np.array(idx) for key, idx in groups.items()}

        self.eye_vec = _vec(np.eye(n, dtype=complex), self.basis)
        self.nu = n_blocks * n + m + 1

    # -- state helpers ----------------------------------------------------
    def pack(self, Q: np.ndarray, s: float = 0.0) -> np.ndarray:
        z = np.empty(self.dim)
        z[:self.qdim] = _vec_many(np.asarray(Q), self.basis).ravel()
        if self.epigraph:
            z[-1] = s
        return z

    def unpack(self, z: np.ndarray) -> np.ndarray:
        coords = z[:self.qdim].reshape(self.n_blocks, self.bd)
        return np.einsum("kb,bij->kij", coords, self.basis)

    def _terms(self, z: np.ndarray):
        """Evaluate every barrier ingredient; None when z is infeasible."""
        Q = self.unpack(z)
        s = z[-1] if self.epigraph else 0.0
        try:
            cholQ = np.linalg.cholesky(Q)
        except np.linalg.LinAlgError:
            return None
        power_slack = self.P_T - float(np.einsum("kii->", Q).real)
        if power_slack <= 0:
            return None
        m = len(self.constraints)
        if m:
            sums = np.stack([Q[self.mask[j]].sum(axis=0) for j in range(m)])
            S = np.einsum("mri,mij,mcj->mrc", self.H, sums, self.H.conj())
            S = S + self.sigma2[:, None, None] * np.eye(self.H.shape[1])[None]
            S = 0.5 * (S + np.conj(np.transpose(S, (0, 2, 1))))
            try:
                cholS = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                return None
            logdets = 2.0 * np.sum(np.log(np.diagonal(cholS, axis1=1, axis2=2).real), axis=1)
            h = logdets / LN2 - self.lin @ z - self.offsets - s
            # relative floor keeps 1/h^2 curvature finite near active constraints
            if np.any(h <= 1e-14 * (1.0 + np.abs(self.offsets))):
                return None
        else:
            cholS = np.zeros((0, 0, 0))
            h = np.zeros(0)
        return Q, s, cholQ, power_slack, h, cholS

    def barrier(self, z: np.ndarray, t: float):
        ev = self._terms(z)
        if ev is None:
            return None
        Q, s, cholQ, power_slack, h, cholS = ev
        val = t * float(self.c @ z) + math.log(power_slack)
        if h.size:
            val += float(np.sum(np.log(h)))
        val += 2.0 * float(np.sum(np.log(np.diagonal(cholQ, axis1=1, axis2=2).real)))
        return val

    def grad_hess(self, z: np.ndarray, t: float):
        ev = self._terms(z)
        if ev is None:
            raise SolverError("barrier evaluated at an infeasible point")
        Q, s, cholQ, power_slack, h, cholS = ev
        d = self.dim
        bd = self.bd
        grad = t * self.c.copy()
        hess = np.zeros((d, d))

        # PSD block barriers: grad vec(Q^-1), Hessian the PSD core of Q^-1
        eye = np.eye(self.n, dtype=complex)
        inv_chol = np.linalg.solve(cholQ, np.broadcast_to(eye, cholQ.shape))
        Qinv = np.einsum("kji,kjl->kil", inv_chol.conj(), inv_chol)
        Qinv = 0.5 * (Qinv + np.conj(np.transpose(Qinv, (0, 2, 1))))
        grad[:self.qdim] += _vec_many(Qinv, self.basis).ravel()
        cores_q = _psd_cores(Qinv, self.basis)
        for i in range(self.n_blocks):
            sl = slice(i * bd, (i + 1) * bd)
            hess[sl, sl] += cores_q[i]

        # power barrier (affine constraint)
        gP = np.zeros(d)
        gP[:self.qdim] = -np.tile(self.eye_vec, self.n_blocks)
        grad += gP / power_slack
        hess += np.outer(gP, gP) / power_slack ** 2

        m = len(self.constraints)
        if m:
            invS_chol = np.linalg.solve(cholS, np.broadcast_to(
                np.eye(self.H.shape[1], dtype=complex), cholS.shape))
            Sinv = np.einsum("mji,mjl->mil", invS_chol.conj(), invS_chol)
            M = np.einsum("mri,mrc,mcj->mij", self.H.conj(), Sinv, self.H)
            M = 0.5 * (M + np.conj(np.transpose(M, (0, 2, 1))))
            vecM = _vec_many(M, self.basis) / LN2           # (m, bd)
            # full constraint gradients: scatter vec(M) on involved blocks
            gcon = np.einsum("mk,ma->mka", self.mask.astype(float), vecM)
            gcon = gcon.reshape(m, self.qdim)
            if self.epigraph:
                gcon = np.hstack([gcon, -np.ones((m, 1))])
            gcon = gcon - self.lin
            grad += (1.0 / h) @ gcon
            # log-det curvature, grouped by identical involvement pattern
            cores = _psd_cores(M, self.basis) / LN2          # (m, bd, bd)
            for key, idx in self.groups.items():
                core_sum = np.tensordot(1.0 / h[idx], cores[idx], axes=(0, 0))
                blocks = np.flatnonzero(np.array(key))
                flat = np.concatenate([np.arange(i * bd, (i + 1) * bd) for i in blocks])
                ones = np.ones((blocks.size, blocks.size))
                hess[np.ix_(flat, flat)] += np.kron(ones, core_sum)
            hess += gcon.T @ ((1.0 / h ** 2)[:, None] * gcon)
        return grad, hess

    def center(self, z: np.ndarray, t: float, tol: float = 1e-9,
               max_newton: int = 200) -> np.ndarray:
        for _ in range(max_newton):
            grad, hess = self.grad_hess(z, t)
            try:
                chol = sla.cho_factor(hess + 1e-12 * np.eye(self.dim), lower=True)
                step = sla.cho_solve(chol, grad)
            except np.linalg.LinAlgError:
                try:
                    reg = 1e-8 * max(1.0, np.nanmax(np.abs(np.diag(hess))))
                    step = np.linalg.solve(hess + reg * np.eye(self.dim), grad)
                except np.linalg.LinAlgError:
                    # hopeless conditioning: keep the last strictly feasible point
                    return z
            if not np.all(np.isfinite(step)):
                return z
            decrement = float(grad @ step)
            if decrement <= 2.0 * tol:
                return z
            base = self.barrier(z, t)
            size = 1.0
            accepted = False
            while size > 1e-14:
                cand = z + size * step
                val = self.barrier(cand, t)
                if val is not None and val >= base + 0.25 * size * decrement:
                    z = cand
                    accepted = True
                    break
                size *= 0.5
            if not accepted:
                return z
        return z

    def solve(self, z0: np.ndarray, gap_tol: float, t0: float = 1.0,
              mu: float = 30.0, max_stages: int = 80) -> tuple[np.ndarray, float]:
        if self._terms(z0) is None:
            raise InfeasibleStartError("starting point is not strictly feasible")
        t = t0
        z = z0
        for _ in range(max_stages):
            final = self.nu / t <= gap_tol
            z = self.center(z, t, tol=1e-9 if final else 1e-6)
            if final:
                return z, t
            t *= mu
        raise SolverError("barrier path following exhausted its stage budget")


def inner_convex_solve(weight: np.ndarray, constraints, P_T: float,
                       Q_start, gap_tol: float | None = None,
                       t0: float | None = None) -> tuple[GramSet, dict]:
    """Solve one SCA subproblem to duality gap <= gap_tol (default 1e-6 * P_T).

    ``Q_start`` must be strictly feasible (Slater point).  With no rate
    constraints the optimum is closed-form: all power on the top eigvector
    of the weight.  Returns the Gram set and a diagnostics dict with the
    objective, the power slack, and a stationarity residual of the final
    barrier center (KKT certificate).
    """
    if P_T < 0:
        raise ValueError("power budget must be >= 0")
    n = weight.shape[0]
    Q0 = np.asarray(getattr(Q_start, "Q", Q_start))
    n_blocks = Q0.shape[0]
    if P_T == 0.0:
        Q = GramSet(Q=np.zeros((n_blocks, n, n), dtype=complex))
        return Q, {"objective": 0.0, "power_slack": 0.0, "kkt_residual": 0.0}
    if not constraints:
        w, V = np.linalg.eigh(weight)
        v = V[:, -1]
        Q = np.zeros((n_blocks, n, n), dtype=complex)
        Q[0] = P_T * np.outer(v, v.conj())
        obj = float(np.trace(weight @ Q[0]).real)
        return GramSet(Q=Q), {"objective": obj, "power_slack": 0.0, "kkt_residual": 0.0}

    scale = float(np.linalg.norm(weight, 2))
    if scale == 0.0:
        raise ValueError("objective weight is zero")
    solver = _BarrierSolver(weight / scale, constraints, P_T, n, n_blocks)
    if gap_tol is None:
        gap_tol = 1e-6 * P_T
    z0 = solver.pack(Q0)
    z, t_used = solver.solve(z0, gap_tol=gap_tol,
                             t0=t0 if t0 is not None else max(1.0, 1.0 / P_T))
    Q = solver.unpack(z)
    Q = 0.5 * (Q + np.conj(np.transpose(Q, (0, 2, 1))))
    grams = GramSet(Q=Q)
    # affine-invariant stationarity certificate at the final barrier center
    grad, hess = solver.grad_hess(z, t_used)
    step = np.linalg.solve(hess + 1e-12 * np.eye(solver.dim), grad)
    info = {
        "objective": float(np.trace(weight @ Q.sum(axis=0)).real),
        "power_slack": P_T - grams.power(),
        "kkt_residual": float(abs(grad @ step)),
        "gap_bound": solver.nu / t_used * scale,
    }
    return grams, info


# ---------------------------------------------------------------------------
# recovery, feasibility phase, SCA loop
# ---------------------------------------------------------------------------

def recover_beamformers(Q, L: int) -> BeamformerSet:
    """Best rank-L beamformers from the Grams by eigen-truncation."""
    arr = np.asarray(getattr(Q, "Q", Q))
    n_blocks, n, _ = arr.shape
    W = np.zeros((n_blocks, n, L), dtype=complex)
    for i in range(n_blocks):
        w, V = np.linalg.eigh(0.5 * (arr[i] + arr[i].conj().T))
        order = np.argsort(w)[::-1][:L]
        vals = np.clip(w[order], 0.0, None)
        W[i] = V[:, order] * np.sqrt(vals)[None, :]
    return BeamformerSet(W=W)


def uniform_gram(cfg: ScenarioConfig) -> GramSet:
    """Uniform-power strictly interior starting point."""
    scale = cfg.P_T / ((cfg.K + 1) * cfg.N_t) * (1.0 - 1e-9)
    Q = np.stack([scale * np.eye(cfg.N_t, dtype=complex) for _ in range(cfg.K + 1)])
    return GramSet(Q=Q)


def exact_rates(b, Q, channels: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    """Exact per-receiver rates evaluated on Gram matrices."""
    arr = np.asarray(getattr(Q, "Q", Q))
    b = np.asarray(b)
    out = np.empty(cfg.K)
    for k in range(cfg.K):
        H = channels.H_comm[k]
        interf = [i for i in range(1, cfg.K + 1) if i != k + 1]
        if not b[k]:
            interf = [0] + interf
        psi = cfg.sigma2 * np.eye(cfg.N_r, dtype=complex)
        for i in interf:
            psi = psi + H @ arr[i] @ H.conj().T
        S = psi + H @ arr[k + 1] @ H.conj().T
        out[k] = _log2det(0.5 * (S + S.conj().T)) - _log2det(0.5 * (psi + psi.conj().T))
    return out


def feasibility_init(b, cfg: ScenarioConfig, channels: ChannelSet,
                     max_rounds: int = 25) -> GramSet:
    """Strictly feasible Grams for the rate constraints, or InfeasibleStartError.

    Phase 1: starting from uniform power, repeatedly maximize the minimum
    linearized rate slack (an epigraph program solved by the same barrier
    machinery) until every exact slack is strictly positive.
    """
    b = np.asarray(b)
    grams = uniform_gram(cfg)
    if cfg.R_th <= 0:
        return grams
    margin = 1e-9 * max(cfg.R_th, 1.0)
    best_slack = -np.inf
    for _ in range(max_rounds):
        slacks = exact_rates(b, grams, channels, cfg) - cfg.R_th
        if slacks.min() > margin:
            return grams
        constraints = [sca_linearize(k, int(b[k]), grams, channels.H_comm[k],
                                     cfg.sigma2, cfg.R_th) for k in range(cfg.K)]
        solver = _BarrierSolver(np.eye(cfg.N_t), constraints, cfg.P_T, cfg.N_t,
                                cfg.K + 1, epigraph=True)
        s0 = float(min(c.value(grams.Q) for c in constraints)) - 1.0
        z0 = solver.pack(grams.Q, s=s0)
        z, _ = solver.solve(z0, gap_tol=1e-6 * max(1.0, cfg.R_th))
        Q = solver.unpack(z)
        grams = GramSet(Q=0.5 * (Q + np.conj(np.transpose(Q, (0, 2, 1)))))
        new_slack = float((exact_rates(b, grams, channels, cfg) - cfg.R_th).min())
        if new_slack > margin:
            return grams
        if new_slack <= best_slack + 1e-10:
            break
        best_slack = new_slack
    raise InfeasibleStartError(
        f"rate threshold {cfg.R_th} bit/s/Hz unreachable within the power budget")


def _closed_form_solution(weight: np.ndarray, cfg: ScenarioConfig) -> tuple[BeamformerSet, GramSet]:
    w, V = np.linalg.eigh(weight)
    v = V[:, -1]
    Q = np.zeros((cfg.K + 1, cfg.N_t, cfg.N_t), dtype=complex)
    Q[0] = cfg.P_T * np.outer(v, v.conj())
    W = np.zeros((cfg.K + 1, cfg.N_t, cfg.L), dtype=complex)
    W[0][:, 0] = math.sqrt(cfg.P_T) * v
    return BeamformerSet(W=W), GramSet(Q=Q)


def _rescale_for_rates(W: np.ndarray, b, channels: ChannelSet, cfg: ScenarioConfig,
                       notes: list[str], tol: float = 1e-6,
                       max_passes: int = 4) -> np.ndarray:
    """Bisect interferer power down when eigen-truncation broke a rate."""
    for _ in range(max_passes):
        rates = np.array([metrics.rate(k, b, W, channels, cfg.sigma2)
                          for k in range(cfg.K)])
        bad = np.flatnonzero(rates < cfg.R_th - tol)
        if bad.size == 0:
            return W
        k = int(bad[0])
        interf = [i for i in range(1, cfg.K + 1) if i != k + 1]
        if not np.asarray(b)[k]:
            interf = [0] + interf
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            Wtry = W.copy()
            for i in interf:
                Wtry[i] = mid * W[i]
            if metrics.rate(k, b, Wtry, channels, cfg.sigma2) >= cfg.R_th:
                lo = mid
            else:
                hi = mid
        for i in interf:
            W[i] = lo * W[i]
        notes.append(f"rescaled interferers of receiver {k} by {lo:.6f} after rank truncation")
    return W


def sca_optimize(b, cfg: ScenarioConfig, channels: ChannelSet, consts: FimConstants,
                 init: GramSet | None = None, max_iters: int = 50,
                 tol: float = 1e-6, inner_gap: float | None = None,
                 objective_weight: np.ndarray | None = None) -> tuple[BeamformerSet, ScaTrace]:
    """Optimize the beamformers for a fixed selection b.

    Iterates linearize -> inner solve -> re-anchor until the relative
    objective gain drops below ``tol``.  The trace records, per accepted
    iterate, the equivalent linear objective, the CRB, and the maximum
    exact-constraint violation (which stays at 0 by construction of the
    inner approximation).

    ``objective_weight`` overrides the sensing weight built from b; the
    mono-static proxy uses it to optimize for a virtual receiver while the
    rate constraints stay on the real ones (whose b entries are then 0).
    """
    b = np.asarray(b)
    if objective_weight is None and b.sum() < 1:
        raise ValueError("need at least one selected receiver")
    trace = ScaTrace()
    weight = (objective_weight if objective_weight is not None
              else build_objective_weight(b, consts, channels, cfg))

    if cfg.R_th <= 0:
        W, grams = _closed_form_solution(weight, cfg)
        obj = float(np.trace(weight @ grams.total()).real)
        trace.iterations.append((obj, 1.0 / obj, 0.0))
        trace.converged = True
        trace.reason = "tolerance"
        return W, trace

    try:
        grams = init if init is not None else feasibility_init(b, cfg, channels)
    except InfeasibleStartError:
        trace.converged = False
        trace.reason = "infeasible-start"
        raise

    def describe(g: GramSet) -> tuple[float, float, float]:
        obj = float(np.trace(weight @ g.total()).real)
        rates = exact_rates(b, g, channels, cfg)
        viol = max(0.0, float(cfg.R_th - rates.min()), g.power() - cfg.P_T)
        return obj, 1.0 / obj, viol

    obj_prev = float(np.trace(weight @ grams.total()).real)
    reason = "max-iters"
    gap = inner_gap if inner_gap is not None else 1e-6 * cfg.P_T
    # after the first solve the anchor is nearly central: restart the barrier
    # path a couple of stages below its end instead of from scratch
    nu = (cfg.K + 1) * cfg.N_t + cfg.K + 1
    warm_t0 = None
    next_t0 = max(1.0, nu / gap / 30.0 ** 2)
    for _ in range(max_iters):
        constraints = [sca_linearize(k, int(b[k]), grams, channels.H_comm[k],
                                     cfg.sigma2, cfg.R_th) for k in range(cfg.K)]
        new_grams, info = inner_convex_solve(weight, constraints, cfg.P_T, grams,
                                             gap_tol=gap, t0=warm_t0)
        warm_t0 = next_t0
        obj_new = float(np.trace(weight @ new_grams.total()).real)
        if obj_new < obj_prev:
            # solver tolerance could not improve on the anchor; stop at the anchor
            reason = "tolerance"
            break
        grams = new_grams
        trace.iterations.append(describe(grams))
        if obj_new - obj_prev <= tol * max(abs(obj_prev), 1e-300):
            reason = "tolerance"
            obj_prev = obj_new
            break
        obj_prev = obj_new
    trace.converged = reason == "tolerance"
    trace.reason = reason
    if not trace.iterations:
        trace.iterations.append(describe(grams))

    W = recover_beamformers(grams, cfg.L).W
    if cfg.L < cfg.N_t:
        W = _rescale_for_rates(W, b, channels, cfg, trace.notes)
    return BeamformerSet(W=W), trace

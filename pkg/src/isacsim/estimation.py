"""Signal synthesis, matched-filter delay/Doppler search, and localization.

The sampled receive model at RE k is

    y_k[m] = H_sens[k] e^{j 2 pi f_tilde m} x[m - tau_tilde] + clutter + noise

with x the pulse-shaped superposition of all transmit streams, sampled once
per pulse at the pulse centre (delays are integer sample counts; fractional
delays are a non-goal, so the matched filter searches an integer delay grid).
The matched filter correlates against delayed, Doppler-shifted copies of the
known probe stream and takes the grid argmax of the Frobenius energy; the
interference-plus-noise energy in the denominator of the test statistic does
not depend on the hypothesis under this model and is omitted.

Localization inverts two receivers' Doppler shifts for the departure bearing
theta and each delay for the target distance.  The Doppler ratio constrains
only cos(theta), so theta's sign is unidentifiable from one receiver pair in
isolation; ``invert_doa`` returns the root in [0, pi] and ``localize``
resolves the sign by cross-receiver position consistency.  A closed-form
two-receiver arctangent variant exists but its intermediate quantities are
ill-defined (consistency requires them to depend on the unknown bearing
itself), so the bracketed numeric root of the ratio equation is the default
and tests report the discrepancy between the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import rng as rngmod
from . import metrics
from .channel import ChannelSet
from .metrics import pulse_waveform
from .scenario import SPEED_OF_LIGHT, Layout, ScenarioConfig, wrap_angle


class DegenerateInputError(ValueError):
    """The matched filter received an all-zero block."""


class DegenerateAnglesError(ValueError):
    """The two receivers' bearings coincide; the ratio equation is singular."""


class DegenerateTriangleError(ValueError):
    """The delay/bearing combination does not close a proper triangle."""


class NoRootError(RuntimeError):
    """The bracketed bearing search found no root in (-pi, pi)."""


@dataclass(frozen=True)
class SampledBlock:
    """One block of received samples at every receiver plus the known probe."""

    y: np.ndarray        # (K, N_r, M)
    s0: np.ndarray       # (L, M) probe symbols (known at the REs)
    tau_tilde: np.ndarray  # (K,) integer normalized delays used in synthesis
    f_tilde: np.ndarray    # (K,) normalized Doppler used in synthesis
    pulse_gain: float      # g(delta_t/2), the per-sample pulse amplitude


@dataclass(frozen=True)
class DelayDopplerEstimate:
    tau_hat: int
    f_hat: float
    score: float


@dataclass(frozen=True)
class DelayDopplerGrid:
    """Search grid: integer delays and a symmetric Doppler raster.

    Defaults: 129 Doppler points over |f_tilde| <= 0.05; the default delay
    window of a scenario is [0, M/4] (``for_config``).  Both are knobs.
    """

    tau_max: int
    f_max: float = 0.05
    n_f: int = 129
    tau_min: int = 0

    @classmethod
    def for_config(cls, cfg, **overrides) -> "DelayDopplerGrid":
        return cls(tau_max=overrides.pop("tau_max", cfg.M // 4), **overrides)

    def taus(self) -> np.ndarray:
        return np.arange(self.tau_min, self.tau_max + 1)

    def freqs(self) -> np.ndarray:
        return np.linspace(-self.f_max, self.f_max, self.n_f)


def synthesize_block(cfg: ScenarioConfig, channels: ChannelSet, W,
                     truths, seed: int, trial: int = 0,
                     noise: bool = True, clutter: bool = True) -> SampledBlock:
    """Generate one sampled receive block for every receiver.

    ``truths`` is a sequence of (tau_tilde, f_tilde) pairs per receiver;
    delays must be integers in [0, M/4] and |f_tilde| < 0.5.  All randomness
    (symbols, clutter, noise) comes from substreams of ``seed``.
    """
    arr = np.asarray(getattr(W, "W", W))
    K, M = cfg.K, cfg.M
    taus = np.array([t[0] for t in truths])
    freqs = np.array([t[1] for t in truths])
    if taus.shape != (K,) or freqs.shape != (K,):
        raise ValueError("need one (tau_tilde, f_tilde) pair per receiver")
    if np.any(taus != np.round(taus)) or np.any(taus < 0) or np.any(taus > M // 4):
        raise ValueError("tau_tilde must be an integer in [0, M/4]")
    if np.any(np.abs(freqs) >= 0.5):
        raise ValueError("|f_tilde| must be < 0.5")
    taus = taus.astype(int)

    g, _ = pulse_waveform(cfg.pulse, cfg.delta_t)
    gain = float(g(cfg.delta_t / 2.0))
    gen_sym = rngmod.substream(seed, rngmod.DOMAIN_SYMBOLS, trial)
    n_streams = arr.shape[0]
    symbols = (gen_sym.standard_normal((n_streams, cfg.L, M))
               + 1j * gen_sym.standard_normal((n_streams, cfg.L, M))) / np.sqrt(2.0)
    # x[:, m] = gain * sum_i W_i s_i[:, m]
    x = gain * np.einsum("inl,ilm->nm", arr, symbols)

    m_idx = np.arange(M)
    y = np.zeros((K, cfg.N_r, M), dtype=complex)
    for k in range(K):
        shifted = np.zeros_like(x)
        if taus[k] < M:
            shifted[:, taus[k]:] = x[:, :M - taus[k]]
        ramp = np.exp(2j * np.pi * freqs[k] * m_idx)
        y[k] = (channels.H_sens[k] @ shifted) * ramp[None, :]
        if clutter:
            gen_c = rngmod.substream(seed, rngmod.DOMAIN_CLUTTER, trial, k)
            y[k] += math.sqrt(cfg.sigma_c2 / 2.0) * (
                gen_c.standard_normal((cfg.N_r, M)) + 1j * gen_c.standard_normal((cfg.N_r, M)))
        if noise:
            gen_z = rngmod.substream(seed, rngmod.DOMAIN_NOISE, trial, k)
            y[k] += math.sqrt(cfg.sigma_z2 / 2.0) * (
                gen_z.standard_normal((cfg.N_r, M)) + 1j * gen_z.standard_normal((cfg.N_r, M)))
    return SampledBlock(y=y, s0=gain * symbols[0], tau_tilde=taus, f_tilde=freqs,
                        pulse_gain=gain)


def matched_filter(block: SampledBlock, grid: DelayDopplerGrid,
                   k: int = 0) -> DelayDopplerEstimate:
    """Grid argmax of || sum_m y[m] s0^H[m - tau] e^{-j 2 pi f m} ||_F^2.

    Ties break lexicographically (smallest tau, then smallest f).  Scaling
    the block by any nonzero complex constant leaves the argmax unchanged.
    """
    y = block.y[k]
    s0 = block.s0
    if not np.any(y):
        raise DegenerateInputError("matched filter received an all-zero block")
    taus = grid.taus()
    freqs = grid.freqs()
    if taus.size == 0 or freqs.size == 0:
        raise ValueError("empty search grid")
    M = y.shape[1]
    m_idx = np.arange(M)
    dop = np.exp(-2j * np.pi * np.outer(m_idx, freqs))  # (M, n_f)
    best = None
    chunk = 64
    for start in range(0, taus.size, chunk):
        tau_block = taus[start:start + chunk]
        # per-sample products y_r[m] * conj(s0_l[m - tau]), all (r, l) pairs
        prod = np.zeros((tau_block.size, y.shape[0] * s0.shape[0], M), dtype=complex)
        for i, tau in enumerate(tau_block):
            if tau >= M:
                continue
            shifted = np.zeros_like(s0)
            shifted[:, tau:] = s0[:, :M - tau]
            prod[i] = (y[:, None, :] * shifted.conj()[None, :, :]).reshape(-1, M)
        phi = prod.reshape(-1, M) @ dop                     # (n_tau*N_r*L, n_f)
        scores = np.sum(np.abs(phi.reshape(tau_block.size, -1, freqs.size)) ** 2, axis=1)
        flat = int(np.argmax(scores))
        i_tau, i_f = divmod(flat, freqs.size)
        cand = (float(scores[i_tau, i_f]), int(tau_block[i_tau]), float(freqs[i_f]))
        if best is None or cand[0] > best[0]:
            best = cand
    score, tau_hat, f_hat = best
    return DelayDopplerEstimate(tau_hat=tau_hat, f_hat=f_hat, score=score)


# ---------------------------------------------------------------------------
# localization inversion
# ---------------------------------------------------------------------------

def _ratio_residual(theta: float, f_k: float, f_kp: float,
                    phi_k: float, phi_kp: float) -> float:
    """Residual of the Doppler ratio equation, linear in cos(theta)."""
    return (f_k * (math.cos(theta) + math.cos(phi_kp))
            - f_kp * (math.cos(theta) + math.cos(phi_k)))


def invert_doa(f_k: float, f_kp: float, phi_k: float, phi_kp: float,
               method: str = "numeric_root") -> float:
    """Departure bearing theta from two receivers' Doppler shifts.

    ``numeric_root`` solves the Doppler ratio equation by bracketed root
    finding and returns the root in [0, pi]; the mirrored root -theta is
    equally consistent (only cos(theta) is observable), see ``localize``.
    When the two shifts coincide the ratio carries no bearing information
    and 0 is returned by convention (the symmetric-geometry case).

    ``closed_form`` evaluates the two-receiver arctangent shortcut; it is
    reported for comparison but is not trusted (see the module docstring).
    """
    if f_kp == 0.0:
        raise ValueError("the reference Doppler shift must be nonzero")
    if abs(math.sin(0.5 * (phi_k - phi_kp))) < 1e-10:
        raise DegenerateAnglesError("receiver bearings coincide (mod 2 pi)")
    if method == "closed_form":
        xi_k = f_k * math.cos(0.5 * phi_k)
        xi_kp = f_kp * math.cos(0.5 * phi_kp)
        half = 0.5 * (phi_k - phi_kp)
        varpi = math.atan2(xi_kp - xi_k * math.cos(half), xi_k * math.sin(half))
        return wrap_angle(2.0 * varpi - phi_k)
    if method != "numeric_root":
        raise ValueError(f"unknown method {method!r}")
    scale = max(abs(f_k), abs(f_kp))
    if abs(f_k - f_kp) <= 1e-12 * scale:
        return 0.0
    r0 = _ratio_residual(0.0, f_k, f_kp, phi_k, phi_kp)
    r_pi = _ratio_residual(math.pi, f_k, f_kp, phi_k, phi_kp)
    if r0 == 0.0:
        return 0.0
    if r_pi == 0.0:
        return math.pi
    if r0 * r_pi > 0:
        raise NoRootError("Doppler ratio equation has no bearing root in [0, pi]")
    theta = optimize.brentq(_ratio_residual, 0.0, math.pi,
                            args=(f_k, f_kp, phi_k, phi_kp),
                            xtol=1e-14, rtol=8.9e-16, maxiter=200)
    return float(theta)


def doa_candidates(f_k: float, f_kp: float, phi_k: float, phi_kp: float) -> tuple[float, ...]:
    """Both bearings consistent with the Doppler ratio (theta and -theta)."""
    theta = invert_doa(f_k, f_kp, phi_k, phi_kp, method="numeric_root")
    if theta in (0.0, math.pi):
        return (theta,)
    return (theta, -theta)


def invert_distance(theta: float, tau_k: float, layout: Layout, k: int) -> float:
    """Target->RE distance from the bearing and the path delay.

    Law-of-cosines inversion in the TR / target / RE triangle:

        d = (c^2 tau^2 + d_bk^2 - 2 c tau d_bk cos(theta - vartheta_k))
            / (2 c tau - 2 d_bk cos(theta - vartheta_k))

    with vartheta_k the TR->RE bearing.  A receiver co-located with the TR
    reduces to the mono-static d = c tau / 2.
    """
    if tau_k <= 0:
        raise ValueError("delay must be > 0")
    ct = SPEED_OF_LIGHT * tau_k
    rel = layout.p[k] - layout.p_b
    d_bk = float(np.linalg.norm(rel))
    vartheta = math.atan2(rel[1], rel[0]) if d_bk > 0 else 0.0
    cos_term = math.cos(theta - vartheta)
    denom = 2.0 * ct - 2.0 * d_bk * cos_term
    if abs(denom) <= 1e-9 * ct:
        raise DegenerateTriangleError("near-zero denominator in the distance inversion")
    d = (ct * ct + d_bk * d_bk - 2.0 * ct * d_bk * cos_term) / denom
    if d <= 0:
        raise DegenerateTriangleError(f"non-positive reconstructed distance {d}")
    return d


def estimate_position(k: int, d_hat: float, phi_k: float, layout: Layout) -> tuple[float, float]:
    """Target position from receiver k's distance and bearing estimates."""
    if d_hat <= 0:
        raise ValueError("distance estimate must be > 0")
    x = float(layout.p[k][0] + d_hat * math.cos(phi_k))
    y = float(layout.p[k][1] + d_hat * math.sin(phi_k))
    return (x, y)


@dataclass(frozen=True)
class PositionEstimate:
    theta_hat: float
    d_hat: float            # distance estimate at receiver k
    xy_hat: tuple[float, float]
    consistency: float      # distance between the two receivers' position fixes
    method: str


def localize(layout: Layout, k: int, kp: int, f_k: float, f_kp: float,
             tau_k: float, tau_kp: float, phi_k: float, phi_kp: float,
             method: str = "numeric_root") -> PositionEstimate:
    """Full two-receiver inversion with sign disambiguation.

    Evaluates both bearing candidates (+theta, -theta), reconstructs each
    receiver's distance and position fix, and keeps the candidate whose two
    fixes agree best.  Uses only quantities the receivers possess: their own
    bearings, the exchanged delays/Dopplers, and the known node positions.
    """
    if method == "closed_form":
        candidates = (invert_doa(f_k, f_kp, phi_k, phi_kp, method="closed_form"),)
    else:
        candidates = doa_candidates(f_k, f_kp, phi_k, phi_kp)
    best: PositionEstimate | None = None
    last_err: Exception | None = None
    for theta in candidates:
        try:
            d_k = invert_distance(theta, tau_k, layout, k)
            d_kp = invert_distance(theta, tau_kp, layout, kp)
            pos_k = estimate_position(k, d_k, phi_k, layout)
            pos_kp = estimate_position(kp, d_kp, phi_kp, layout)
        except (DegenerateTriangleError, ValueError) as exc:
            last_err = exc
            continue
        gap = math.hypot(pos_k[0] - pos_kp[0], pos_k[1] - pos_kp[1])
        mid = (0.5 * (pos_k[0] + pos_kp[0]), 0.5 * (pos_k[1] + pos_kp[1]))
        cand = PositionEstimate(theta_hat=theta, d_hat=d_k, xy_hat=mid,
                                  consistency=gap, method=method)
        if best is None or cand.consistency < best.consistency:
            best = cand
    if best is None:
        raise DegenerateTriangleError(
            f"no bearing candidate produced a consistent fix: {last_err}")
    return best


# ---------------------------------------------------------------------------
# Monte-Carlo MSE harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MseReport:
    mse: float          # sum over selected REs of delay^2 + Doppler^2 errors
    stderr: float
    crb: float
    per_trial: np.ndarray


def mse_harness(cfg: ScenarioConfig, layout: Layout, channels: ChannelSet, W, b,
                trials: int, grid: DelayDopplerGrid, seed: int,
                truths=None, min_trials: int = 100) -> MseReport:
    """Monte-Carlo matched-filter MSE against the closed-form CRB.

    Truths default to fresh draws per trial: integer delays uniform on the
    grid window and normalized Dopplers uniform inside the Doppler raster
    (generic off-grid values).  MSE and CRB share the normalized units
    (samples^2 + cycles-per-sample^2, summed over the selected receivers).
    """
    if trials < min_trials:
        raise ValueError(f"need at least {min_trials} trials")
    b = np.asarray(b)
    selected = np.flatnonzero(b)
    if selected.size == 0:
        raise ValueError("need at least one selected receiver")
    geom = channels.geom
    consts_report = metrics.crb(b, W, metrics.fim_constants(cfg, geom), channels, cfg)
    errors = np.zeros(trials)
    for t in range(trials):
        if truths is None:
            gen_t = rngmod.substream(seed, rngmod.DOMAIN_TRUTH, t)
            taus = gen_t.integers(grid.tau_min, grid.tau_max + 1, size=cfg.K)
            freqs = gen_t.uniform(-grid.f_max, grid.f_max, size=cfg.K)
            trial_truths = list(zip(taus.tolist(), freqs.tolist()))
        else:
            trial_truths = truths
        block = synthesize_block(cfg, channels, W, trial_truths, seed=seed, trial=t)
        err = 0.0
        for k in selected:
            est = matched_filter(block, grid, k=int(k))
            err += (est.tau_hat - block.tau_tilde[k]) ** 2
            err += (est.f_hat - block.f_tilde[k]) ** 2
        errors[t] = err
    mse = float(errors.mean())
    stderr = float(errors.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return MseReport(mse=mse, stderr=stderr, crb=consts_report.crb, per_trial=errors)

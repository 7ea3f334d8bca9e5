"""Experiment runner: config parsing, presets, sweeps, CSV output.

Every experiment is a deterministic function of (config, spec, seed): trials
draw their receiver placements, channels, symbols and noise from keyed
substreams, and rows are emitted in canonical (sweep value, trial) order, so
two runs with identical inputs produce byte-identical CSV files.  The
``wall_time_ms`` column is therefore written as 0 unless timing is requested
explicitly (real timings would break the byte-determinism contract).

Experiments mirror the reference evaluation:

    tradeoff          CRB/rate for group sizes {0 (mono proxy), 1, 2, 5}
    antennas_tx/_rx   CRB vs transmit / receive antenna count (2..10)
    selection_compare minimax-linkage vs Lloyd's clustering under cost caps
    pulses            cosine vs sinc pulse across group sizes
    mf_vs_crb         matched-filter MSE vs CRB across power budgets
    roundtrip         noiseless localization inversion error

The mono-static proxy is a virtual receiver co-located with the TR (ideal
self-interference cancellation assumed); the real receivers then carry only
communication traffic.  It is a qualitative comparison baseline.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from . import beamforming, estimation, metrics, rng as rngmod, selection
from .channel import ChannelSet, build_channels
from .scenario import (ConfigError, Layout, ScenarioConfig, annulus_layout,
                       cooperation_price, geometry_summary, true_delay,
                       true_doppler, wrap_angle)

COLUMNS = ("sweep_value", "trial", "crb", "rate_min", "rate_mean", "cost",
           "group_size", "objective", "mse", "wall_time_ms", "error")

EXPERIMENTS = ("tradeoff", "antennas_tx", "antennas_rx", "selection_compare",
               "pulses", "mf_vs_crb", "roundtrip")

_DEFAULTS = {
    "K": 10, "N_t": 2, "N_r": 2, "L": 2,
    "P_T_dbm": 30.0, "B": 1.0e8, "M": 1024,
    "epsilon": 2.7, "rho": 0.5, "rician_alpha": 0.5, "beta": 0.6,
    "sigma2_dbm": -60.0, "sigma_c2_dbm": -60.0, "sigma_z2_dbm": -60.0,
    "f0": 3.0e9, "v": 20.0, "R_th": 1.0, "Omega_th": 200.0,
    "pulse": "cosine", "seed": 1234,
    "p_b": (0.0, 0.0), "p_0": (20.0, 40.0),
}

_POWER_KEYS = {"P_T": "P_T_dbm", "sigma2": "sigma2_dbm",
               "sigma_c2": "sigma_c2_dbm", "sigma_z2": "sigma_z2_dbm"}

_SCALAR_PER_K = ("rician_alpha", "beta")

_KNOWN_KEYS = (set(_DEFAULTS) | set(_POWER_KEYS) | {"delta_t", "lambda", "p"})


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: experiment name, sweep values, trial count, seed, output."""

    name: str
    sweep: tuple
    trials: int
    seed: int
    out: str | None = None

    def __post_init__(self) -> None:
        if self.name not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.name!r}; choose from {EXPERIMENTS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if len(self.sweep) < 1:
            raise ValueError("sweep must contain at least one value")


def default_sweep(name: str, cfg: ScenarioConfig) -> tuple:
    if name == "tradeoff":
        return (0, 1, 2, 5)
    if name in ("antennas_tx", "antennas_rx"):
        return tuple(range(2, 11))
    if name == "selection_compare":
        return ("minimax:100", "minimax:200", "kmeans:100", "kmeans:200")
    if name == "pulses":
        sizes = sorted({1, 2, 3, 5, cfg.K})
        return tuple(f"{p}:{g}" for p in ("cosine", "sinc") for g in sizes)
    if name == "mf_vs_crb":
        return (10.0, 20.0, 30.0)
    if name == "roundtrip":
        return ("noiseless",)
    raise ValueError(name)


def default_trials(name: str) -> int:
    return {"tradeoff": 50, "antennas_tx": 20, "antennas_rx": 20,
            "selection_compare": 20, "pulses": 20, "mf_vs_crb": 100,
            "roundtrip": 200}[name]


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------

def _parse_raw(raw: dict):
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown configuration key")
    values = {key: raw.get(key, default) for key, default in _DEFAULTS.items()}
    # watt-valued keys may be given directly or in dBm (not both)
    for watt_key, dbm_key in _POWER_KEYS.items():
        if watt_key in raw and dbm_key in raw:
            raise ConfigError(watt_key, f"give either {watt_key} (watts) or {dbm_key}, not both")
        dbm_value = raw.get(dbm_key, values.pop(dbm_key, None))
        if watt_key in raw:
            values[watt_key] = raw[watt_key]
        else:
            values[watt_key] = dbm_to_watts(float(dbm_value))
        values.pop(dbm_key, None)
    try:
        K = int(values["K"])
    except (TypeError, ValueError) as exc:
        raise ConfigError("K", f"not an integer: {raw.get('K')!r}") from exc
    for key in _SCALAR_PER_K:
        val = values[key]
        if np.isscalar(val):
            values[key] = tuple(float(val) for _ in range(K))
        else:
            values[key] = tuple(float(x) for x in val)
    for key in ("N_t", "N_r", "L", "M", "seed"):
        try:
            values[key] = int(values[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"not an integer: {values[key]!r}") from exc
    for key in ("B", "f0", "epsilon", "rho", "sigma2", "sigma_c2", "sigma_z2",
                "v", "R_th", "Omega_th", "P_T"):
        try:
            values[key] = float(values[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"not a number: {values[key]!r}") from exc
    B = values["B"]
    try:
        delta_t = float(raw.get("delta_t", 1.0 / (2.0 * B)))
    except (TypeError, ValueError) as exc:
        raise ConfigError("delta_t", f"not a number: {raw.get('delta_t')!r}") from exc
    if "lambda" in raw:
        lam = float(raw["lambda"])
        expected = 299_792_458.0 / values["f0"]
        if abs(lam - expected) > 1e-6 * expected:
            raise ConfigError("lambda", f"must equal c/f0 = {expected!r}; got {lam!r}")
    p_b = np.asarray(values.pop("p_b"), dtype=float)
    p_0 = np.asarray(values.pop("p_0"), dtype=float)
    cfg = ScenarioConfig(K=K, N_t=values["N_t"], N_r=values["N_r"], L=values["L"],
                         P_T=values["P_T"], B=B, f0=values["f0"], delta_t=delta_t,
                         M=values["M"], epsilon=values["epsilon"], rho=values["rho"],
                         rician_alpha=values["rician_alpha"], beta=values["beta"],
                         sigma2=values["sigma2"], sigma_c2=values["sigma_c2"],
                         sigma_z2=values["sigma_z2"], v=values["v"],
                         R_th=values["R_th"], Omega_th=values["Omega_th"],
                         pulse=values["pulse"], seed=values["seed"])
    layout = None
    if "p" in raw:
        p = np.asarray(raw["p"], dtype=float)
        if p.shape != (K, 2):
            raise ConfigError("p", f"need shape (K, 2) = ({K}, 2); got {p.shape}")
        layout = Layout(p_b=p_b, p_0=p_0, p=p)
    return cfg, layout, (p_b, p_0)


def parse_config(path) -> tuple[ScenarioConfig, Layout]:
    """Load and validate a flat JSON configuration.

    Optional keys fall back to the reference defaults; watt-valued fields
    accept ``*_dbm`` alternates.  When receiver positions ``p`` are omitted
    the returned Layout holds the seed's trial-0 random placement (uniform
    annulus, radius 1..100 m around the TR); experiments redraw placements
    per trial in that case.
    """
    cfg, layout, base = _parse_raw(_load_json(path))
    if layout is None:
        layout = _draw_layout(cfg, base, cfg.seed, 0)
    return cfg, layout


def load_config(path):
    """parse_config plus the fixed-vs-random placement distinction."""
    return _parse_raw(_load_json(path))


def _load_json(path) -> dict:
    text = resolve_preset(path) if isinstance(path, str) else None
    if text is not None:
        raw = json.loads(text)
    else:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("<file>", f"not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("<file>", "top level must be a flat JSON object")
    return raw


def _draw_layout(cfg: ScenarioConfig, base, seed: int, trial: int) -> Layout:
    p_b, p_0 = base
    gen = rngmod.substream(seed, rngmod.DOMAIN_LAYOUT, trial)
    return annulus_layout(cfg, p_b, p_0, gen, r_min=1.0, r_max=100.0)


def preset_names() -> list[str]:
    files = resources.files("isacsim").joinpath("presets")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def resolve_preset(name: str) -> str | None:
    """Return the preset's JSON text when ``name`` names a shipped preset."""
    if "/" in name or "\\" in name or name.endswith(".json"):
        return None
    files = resources.files("isacsim").joinpath("presets")
    candidate = files.joinpath(f"{name}.json")
    if candidate.is_file():
        return candidate.read_text(encoding="utf-8")
    return None


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".12g")


def rows_to_csv(rows: list[dict], path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(col, "")) for col in COLUMNS) + "\n")


def top_eta_group(channels: ChannelSet, size: int) -> np.ndarray:
    """The ``size`` receivers with the strongest sensing paths, as a 0/1 vector."""
    order = np.argsort(channels.geom.eta)[::-1]
    b = np.zeros(channels.K, dtype=int)
    b[order[:size]] = 1
    return b


def uniform_beamformers(cfg: ScenarioConfig) -> beamforming.BeamformerSet:
    return beamforming.recover_beamformers(beamforming.uniform_gram(cfg), cfg.L)


def _mono_scene(cfg: ScenarioConfig, layout: Layout, seed: int, trial: int):
    """Virtual sensing receiver on top of the TR (ideal SI cancellation)."""
    cfg_mono = replace(cfg, K=1, rician_alpha=(cfg.rician_alpha[0],),
                       beta=(cfg.beta[0],))
    layout_mono = Layout(p_b=layout.p_b, p_0=layout.p_0,
                         p=np.asarray([layout.p_b]))
    ch = build_channels(cfg_mono, layout_mono, seed, trial, comm=False)
    consts = metrics.fim_constants(cfg_mono, ch.geom)
    return cfg_mono, ch, consts


def _rates_all(b, W, channels: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    return np.array([metrics.rate(k, b, W, channels, cfg.sigma2)
                     for k in range(cfg.K)])


def _sca(b, cfg, channels, consts, **kw):
    """Experiment-throughput SCA: slightly loose tolerances, same guarantees.

    The per-op defaults (relative gain 1e-6, duality gap 1e-6*P_T) stand for
    direct API use; sweeps trade the last two significant digits of the CRB
    for a ~2x speedup, which trial averaging cannot see.
    """
    return beamforming.sca_optimize(b, cfg, channels, consts, tol=1e-4,
                                    inner_gap=1e-4 * cfg.P_T, **kw)


def _group_cost(layout: Layout, b, rho: float) -> float:
    group = frozenset(np.flatnonzero(b).tolist())
    if not group:
        return 0.0
    prices = cooperation_price(layout, group, rho)
    return metrics.cooperation_cost(b, prices)


def _scene_for_trial(cfg, layout_fixed, base, seed, trial):
    layout = layout_fixed if layout_fixed is not None else _draw_layout(cfg, base, seed, trial)
    channels = build_channels(cfg, layout, seed, trial)
    consts = metrics.fim_constants(cfg, channels.geom)
    return layout, channels, consts


# ---------------------------------------------------------------------------
# experiments (each yields (sweep_value, trial, thunk) triples)
# ---------------------------------------------------------------------------

def _group_size_summary(cfg, layout, channels, consts, size, seed, trial) -> dict:
    """Optimize beamformers for one group-size scenario and summarize it."""
    if size == 0:
        cfg_mono, ch_mono, consts_mono = _mono_scene(cfg, layout, seed, trial)
        weight = beamforming.build_objective_weight(np.array([1]), consts_mono,
                                                    ch_mono, cfg_mono)
        b = np.zeros(cfg.K, dtype=int)
        W, trace = _sca(b, cfg, channels, consts, objective_weight=weight)
        report = metrics.crb(np.array([1]), W, consts_mono, ch_mono, cfg_mono)
        cost = 0.0
    else:
        b = top_eta_group(channels, size)
        W, trace = _sca(b, cfg, channels, consts)
        report = metrics.crb(b, W, consts, channels, cfg)
        cost = _group_cost(layout, b, cfg.rho)
    rates = _rates_all(b, W, channels, cfg)
    return {"crb": report.crb, "rate_min": rates.min(), "rate_mean": rates.mean(),
            "cost": cost, "group_size": size,
            "objective": trace.iterations[-1][0]}


def _exp_tradeoff(spec, cfg, layout_fixed, base):
    for size in spec.sweep:
        for trial in range(spec.trials):
            def thunk(size=int(size), trial=trial):
                layout, channels, consts = _scene_for_trial(
                    cfg, layout_fixed, base, spec.seed, trial)
                return _group_size_summary(cfg, layout, channels, consts,
                                           size, spec.seed, trial)
            yield int(size), trial, thunk


def _exp_antennas(spec, cfg, layout_fixed, base, axis):
    # Sensing-limited sweep: the rate threshold is lifted so the closed-form
    # CRB-optimal beamformer applies at every antenna count.
    for value in spec.sweep:
        value = int(value)
        if axis == "tx":
            cfg_s = replace(cfg, N_t=value, L=min(cfg.L, value, cfg.N_r), R_th=0.0)
        else:
            cfg_s = replace(cfg, N_r=value, L=min(cfg.L, cfg.N_t, value), R_th=0.0)
        for trial in range(spec.trials):
            def thunk(cfg_s=cfg_s, trial=trial):
                layout, channels, consts = _scene_for_trial(
                    cfg_s, layout_fixed, base, spec.seed, trial)
                return _group_size_summary(cfg_s, layout, channels, consts,
                                           2, spec.seed, trial)
            yield value, trial, thunk


def _exp_selection_compare(spec, cfg, layout_fixed, base):
    for sval in spec.sweep:
        method, _, omega = str(sval).partition(":")
        cfg_s = replace(cfg, Omega_th=float(omega))
        for trial in range(spec.trials):
            def thunk(method=method, cfg_s=cfg_s, trial=trial):
                layout, channels, consts = _scene_for_trial(
                    cfg_s, layout_fixed, base, spec.seed, trial)
                W_bar = uniform_beamformers(cfg_s)
                if method == "minimax":
                    tree = selection.build_linkage_tree(layout.p, layout.p_0, cfg_s.rho)
                    sel = selection.select_group(tree, W_bar, cfg_s, layout,
                                                 channels, consts)
                elif method == "kmeans":
                    sel = selection.select_group_kmeans(layout.p, W_bar, cfg_s,
                                                        layout, channels, consts,
                                                        seed=spec.seed)
                else:
                    raise ValueError(f"unknown selection method {method!r}")
                W, trace = _sca(sel.b, cfg_s, channels, consts)
                report = metrics.crb(sel.b, W, consts, channels, cfg_s)
                rates = _rates_all(sel.b, W, channels, cfg_s)
                return {"crb": report.crb, "rate_min": rates.min(),
                        "rate_mean": rates.mean(), "cost": sel.cost,
                        "group_size": int(sel.b.sum()),
                        "objective": trace.iterations[-1][0]}
            yield sval, trial, thunk


def _exp_pulses(spec, cfg, layout_fixed, base):
    for sval in spec.sweep:
        pulse, _, size = str(sval).partition(":")
        cfg_s = replace(cfg, pulse=pulse)
        for trial in range(spec.trials):
            def thunk(cfg_s=cfg_s, size=int(size), trial=trial):
                layout, channels, consts = _scene_for_trial(
                    cfg_s, layout_fixed, base, spec.seed, trial)
                return _group_size_summary(cfg_s, layout, channels, consts,
                                           size, spec.seed, trial)
            yield sval, trial, thunk


def _exp_mf_vs_crb(spec, cfg, layout_fixed, base, group_size: int = 2):
    # Sensing-only operating point: the filter correlates against the probe
    # stream alone, so the probe must carry the transmit power (with rate
    # constraints binding, the optimizer parks nearly all power on the
    # communication streams and the probe becomes undetectable).  The
    # Doppler raster is sized so its quantization cell, not the noise,
    # limits the search, matching how the grid would be chosen in practice.
    for p_dbm in spec.sweep:
        cfg_s = replace(cfg, P_T=dbm_to_watts(float(p_dbm)), R_th=0.0)
        grid = estimation.DelayDopplerGrid(tau_max=cfg_s.M // 8, n_f=65)
        for trial in range(spec.trials):
            def thunk(cfg_s=cfg_s, grid=grid, trial=trial):
                layout, channels, consts = _scene_for_trial(
                    cfg_s, layout_fixed, base, spec.seed, trial)
                b = top_eta_group(channels, group_size)
                W, trace = _sca(b, cfg_s, channels, consts)
                report = metrics.crb(b, W, consts, channels, cfg_s)
                gen_t = rngmod.substream(spec.seed, rngmod.DOMAIN_TRUTH, trial)
                taus = gen_t.integers(grid.tau_min, grid.tau_max + 1, size=cfg_s.K)
                freqs = gen_t.uniform(-grid.f_max, grid.f_max, size=cfg_s.K)
                block = estimation.synthesize_block(
                    cfg_s, channels, W, list(zip(taus.tolist(), freqs.tolist())),
                    seed=spec.seed, trial=trial)
                err = 0.0
                for k in np.flatnonzero(b):
                    est = estimation.matched_filter(block, grid, k=int(k))
                    err += float((est.tau_hat - block.tau_tilde[k]) ** 2)
                    err += float((est.f_hat - block.f_tilde[k]) ** 2)
                rates = _rates_all(b, W, channels, cfg_s)
                return {"crb": report.crb, "rate_min": rates.min(),
                        "rate_mean": rates.mean(),
                        "cost": _group_cost(layout, b, cfg_s.rho),
                        "group_size": group_size,
                        "objective": trace.iterations[-1][0], "mse": err}
            yield float(p_dbm), trial, thunk


def _exp_roundtrip(spec, cfg, layout_fixed, base):
    for trial in range(spec.trials):
        def thunk(trial=trial):
            layout = layout_fixed if layout_fixed is not None else _draw_layout(
                cfg, base, spec.seed, trial)
            geom = geometry_summary(layout, cfg)
            pair = None
            for k in range(cfg.K):
                for kp in range(k + 1, cfg.K):
                    if abs(np.cos(geom.phi[k]) - np.cos(geom.phi[kp])) > 1e-4:
                        pair = (k, kp)
                        break
                if pair:
                    break
            if pair is None:
                raise estimation.DegenerateAnglesError(
                    "no receiver pair with usable bearing separation")
            k, kp = pair
            f_k = true_doppler(geom.theta, geom.phi[k], cfg.v, cfg.f0, mode="approx")
            f_kp = true_doppler(geom.theta, geom.phi[kp], cfg.v, cfg.f0, mode="approx")
            tau_k = true_delay(geom.d_b0, geom.d_0k[k])
            tau_kp = true_delay(geom.d_b0, geom.d_0k[kp])
            res = estimation.localize(layout, k, kp, f_k, f_kp, tau_k, tau_kp,
                                      geom.phi[k], geom.phi[kp])
            pos_err = float(np.hypot(res.xy_hat[0] - layout.p_0[0],
                                     res.xy_hat[1] - layout.p_0[1]))
            ang_err = abs(wrap_angle(res.theta_hat - geom.theta))
            return {"mse": pos_err ** 2, "objective": ang_err, "group_size": 2}
        yield "noiseless", trial, thunk


def _execute_item(item, timing: bool) -> dict:
    sval, trial, thunk = item
    start = time.perf_counter()
    try:
        payload = thunk()
    except Exception as exc:  # noqa: BLE001 - row-level fault isolation
        payload = {"error": f"{type(exc).__name__}: {exc}"}
    elapsed = (time.perf_counter() - start) * 1000.0
    row = {"sweep_value": sval, "trial": trial,
           "wall_time_ms": elapsed if timing else 0.0}
    row.update(payload)
    return row


def run_experiment(spec: ExperimentSpec, cfg: ScenarioConfig,
                   layout: Layout | None = None,
                   base=None, timing: bool = False, jobs: int = 1) -> list[dict]:
    """Run one experiment; returns the CSV rows in canonical order.

    ``layout=None`` redraws receiver placements per trial from the seed's
    layout substream (the reference setup); a concrete Layout pins them.
    Row-level failures land in the ``error`` column instead of aborting
    the sweep.  ``jobs > 1`` forks workers over rows; substream-keyed
    randomness makes the result identical to the sequential run.
    """
    if base is None:
        if layout is not None:
            base = (layout.p_b, layout.p_0)
        else:
            base = (np.asarray(_DEFAULTS["p_b"], float),
                    np.asarray(_DEFAULTS["p_0"], float))
    gens = {
        "tradeoff": lambda: _exp_tradeoff(spec, cfg, layout, base),
        "antennas_tx": lambda: _exp_antennas(spec, cfg, layout, base, "tx"),
        "antennas_rx": lambda: _exp_antennas(spec, cfg, layout, base, "rx"),
        "selection_compare": lambda: _exp_selection_compare(spec, cfg, layout, base),
        "pulses": lambda: _exp_pulses(spec, cfg, layout, base),
        "mf_vs_crb": lambda: _exp_mf_vs_crb(spec, cfg, layout, base),
        "roundtrip": lambda: _exp_roundtrip(spec, cfg, layout, base),
    }
    items = list(gens[spec.name]())
    if jobs <= 1 or len(items) < 2:
        return [_execute_item(item, timing) for item in items]
    return _run_parallel(items, timing, jobs)


def _run_parallel(items, timing: bool, jobs: int) -> list[dict]:
    """Fork workers over row indices; rows reassembled in canonical order."""
    import multiprocessing as mp

    ctx = mp.get_context("fork")
    queue = ctx.SimpleQueue()

    def worker(indices):
        try:
            for idx in indices:
                queue.put((idx, _execute_item(items[idx], timing)))
        finally:
            queue.put(("done", None))

    procs = []
    for w in range(jobs):
        proc = ctx.Process(target=worker, args=(range(w, len(items), jobs),))
        proc.start()
        procs.append(proc)
    rows: dict[int, dict] = {}
    done = 0
    while done < jobs:
        idx, row = queue.get()
        if idx == "done":
            done += 1
        else:
            rows[idx] = row
    for proc in procs:
        proc.join()
    out = []
    for idx, item in enumerate(items):
        if idx in rows:
            out.append(rows[idx])
        else:
            sval, trial, _ = item
            out.append({"sweep_value": sval, "trial": trial, "wall_time_ms": 0.0,
                        "error": "worker died before finishing this row"})
    return out

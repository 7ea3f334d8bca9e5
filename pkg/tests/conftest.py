"""Shared fixtures: reference configuration and small deterministic scenes."""

from __future__ import annotations

import numpy as np
import pytest

from isacsim import harness
from isacsim.channel import build_channels
from isacsim.metrics import fim_constants
from isacsim.scenario import Layout, ScenarioConfig


def make_cfg(**overrides) -> ScenarioConfig:
    """Reference scenario with consistent per-receiver arrays after overrides."""
    base = dict(K=10, N_t=2, N_r=2, L=2, P_T=1.0, B=1e8, f0=3e9,
                delta_t=5e-9, M=1024, epsilon=2.7, rho=0.5,
                sigma2=1e-9, sigma_c2=1e-9, sigma_z2=1e-9,
                v=20.0, R_th=0.25, Omega_th=200.0, pulse="cosine", seed=1234)
    base.update(overrides)
    K = base["K"]
    base.setdefault("rician_alpha", tuple([0.5] * K))
    base.setdefault("beta", tuple([0.6] * K))
    if np.isscalar(base["rician_alpha"]):
        base["rician_alpha"] = tuple([float(base["rician_alpha"])] * K)
    if np.isscalar(base["beta"]):
        base["beta"] = tuple([float(base["beta"])] * K)
    return ScenarioConfig(**base)


def make_layout(K: int, seed: int = 0, p_b=(0.0, 0.0), p_0=(20.0, 40.0)) -> Layout:
    rng = np.random.default_rng(seed)
    radii = rng.uniform(1.0, 100.0, size=K)
    angles = rng.uniform(-np.pi, np.pi, size=K)
    p = np.asarray(p_b)[None, :] + np.stack(
        [radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    return Layout(p_b=np.asarray(p_b, float), p_0=np.asarray(p_0, float), p=p)


def make_scene(K: int = 4, seed: int = 0, **overrides):
    """(cfg, layout, channels, consts) for a small deterministic scene."""
    cfg = make_cfg(K=K, **overrides)
    layout = make_layout(K, seed=seed)
    channels = build_channels(cfg, layout, seed=seed)
    consts = fim_constants(cfg, channels.geom)
    return cfg, layout, channels, consts


@pytest.fixture(scope="session")
def sec6a():
    cfg, layout, base = harness.load_config("sec6a")
    return cfg, layout, base


@pytest.fixture()
def small_scene():
    return make_scene(K=4, seed=3)

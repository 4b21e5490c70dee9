"""Shared fixtures: tiny model specs and hand-buildable posterior draws."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from surrogate_forge import ModelSpec, ParamDraw, PosteriorDraws

# single-core box; wall-time deadlines only add flakiness
settings.register_profile(
    "ci", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


def make_draws(spec: ModelSpec, M: int, seed: int = 0) -> PosteriorDraws:
    """M independent parameter vectors drawn from the truth ranges."""
    rng = np.random.default_rng(seed)
    return PosteriorDraws(
        spec,
        rng.uniform(0.3, 3.0, size=(M, spec.J)),
        rng.uniform(0.1, 1.0, size=(M, spec.J)),
        rng.uniform(-0.5, 0.5, size=M),
        rng.uniform(0.005, 0.05, size=M),
    )


def tile_draws(spec: ModelSpec, draw: ParamDraw, M: int) -> PosteriorDraws:
    """Degenerate posterior: every one of the M draws equals `draw`."""
    return PosteriorDraws(
        spec,
        np.tile(draw.alpha, (M, 1)),
        np.tile(draw.beta, (M, 1)),
        np.full(M, draw.gamma),
        np.full(M, draw.sigma2),
    )


@pytest.fixture
def spec3() -> ModelSpec:
    return ModelSpec(J=3)


@pytest.fixture
def spec2_identity() -> ModelSpec:
    return ModelSpec(J=2, link="identity")


@pytest.fixture
def draws3(spec3) -> PosteriorDraws:
    return make_draws(spec3, M=8, seed=42)

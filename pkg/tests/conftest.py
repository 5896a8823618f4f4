"""
Shared fixtures: small subspaces, seeded generators and config builders.
"""

from __future__ import annotations

import numpy as np
import pytest

from src.state import LagWindow, OptimizerConfig, SubspaceDims, SynthesisConfig
from src.subspace import build_subspace


def random_preimage(rng: np.random.Generator, m: int) -> np.ndarray:
    return (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2.0)


def make_config(dims=(64, 32, 8), window=(2, 16), n_pilots=3, **optimizer) -> SynthesisConfig:
    n_fft, n_sc, t_zero = dims
    t_min, t_max = window
    return SynthesisConfig(
        dims=SubspaceDims(n_fft=n_fft, n_sc=n_sc, t_zero=t_zero),
        window=LagWindow(t_min=t_min, t_max=t_max),
        n_pilots=n_pilots,
        optimizer=OptimizerConfig(**optimizer),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def sub_small():
    """(64, 32, 8): dense A and pinv(A)."""
    return build_subspace(SubspaceDims(n_fft=64, n_sc=32, t_zero=8))


@pytest.fixture(scope="session")
def sub_small_factored():
    """(64, 32, 8) with the operators applied through V0 and the FFT."""
    return build_subspace(SubspaceDims(n_fft=64, n_sc=32, t_zero=8), dense_budget=0)


@pytest.fixture(scope="session")
def sub_tiny():
    """(32, 16, 4), used by the finite-difference gradient checks."""
    return build_subspace(SubspaceDims(n_fft=32, n_sc=16, t_zero=4))


@pytest.fixture(scope="session")
def sub_full_band():
    """(8, 8, 0): no tail, every bin occupied."""
    return build_subspace(SubspaceDims(n_fft=8, n_sc=8, t_zero=0))


@pytest.fixture(scope="session")
def sub_desk():
    """(256, 200, 80): the reduced-scale acceptance dims, factored."""
    return build_subspace(SubspaceDims(n_fft=256, n_sc=200, t_zero=80))


@pytest.fixture
def window_small():
    return LagWindow(t_min=2, t_max=16)

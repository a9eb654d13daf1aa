"""Pytest configuration and shared fixtures."""
import numpy as np
import pytest

from app.schemas.scenario import ScenarioConfig
from app.services.channel_service import ChannelSet, build_geometry
from app.services.fault_service import FaultRealization, partition
from app.services.optimizer_service import SdpBackend
from app.services.trial_service import draw_trial, make_backend
from worker.config import FaultPattern


@pytest.fixture
def small_cfg():
    """3x2 RIS, 2-antenna AP, 3 test points."""
    return ScenarioConfig(Nx=3, Ny=2, M=2, T=3, L=64, trials=1, seed=11, fault_counts=(0, 2))


@pytest.fixture
def default_cfg():
    """Reference scenario."""
    return ScenarioConfig()


@pytest.fixture
def geometry(small_cfg):
    return build_geometry(small_cfg)


@pytest.fixture
def draws(small_cfg):
    """One trial of the small scenario with two uniformly placed faults."""
    return draw_trial(small_cfg, 0, 2, FaultPattern.UNIFORM)


@pytest.fixture
def healthy_draws(small_cfg):
    return draw_trial(small_cfg, 0, 0, FaultPattern.UNIFORM)


@pytest.fixture
def backend(small_cfg) -> SdpBackend:
    return make_backend(small_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_channel_set(H_bar: np.ndarray) -> ChannelSet:
    """ChannelSet around explicit cascaded matrices (T, N, M); G is set to H_bar[0]."""
    H_bar = np.asarray(H_bar, dtype=np.complex128)
    T, N, M = H_bar.shape
    return ChannelSet(
        G=H_bar[0],
        h=np.ones((T, N), dtype=np.complex128),
        H_bar=H_bar,
        gamma_i=1.0,
        gamma_g=np.ones(T),
    )


def rank_one_channels(c: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Stack H_t = c_t a^H for rows c_t of c (T, N)."""
    return np.einsum("tn,m->tnm", np.asarray(c, dtype=np.complex128), np.conj(a))


def make_partition(H_bar, indices=(), states=None, ue_index=0):
    fault = FaultRealization(
        indices=np.array(indices, dtype=int),
        states=None if states is None else np.asarray(states, dtype=np.complex128),
    )
    return partition(make_channel_set(H_bar), fault, ue_index)

"""
测试公共夹具：网格、固定种子的随机数发生器、随机带限场
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.logger import log_manager
from src.torus_field import Grid, ScalarField, VectorField, random_band_limited


@pytest.fixture
def grid8() -> Grid:
    return Grid(8)


@pytest.fixture
def grid16() -> Grid:
    return Grid(16)


@pytest.fixture
def grid32() -> Grid:
    return Grid(32)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def random_scalar(grid16, rng):
    def make(k_max: int = 5, mean_zero: bool = True) -> ScalarField:
        return random_band_limited(grid16, ScalarField, rng, k_max, mean_zero=mean_zero)
    return make


@pytest.fixture
def random_vector(grid16, rng):
    def make(k_max: int = 5, mean_zero: bool = True) -> VectorField:
        return random_band_limited(grid16, VectorField, rng, k_max, mean_zero=mean_zero)
    return make


@pytest.fixture(autouse=True)
def _isolated_log_manager():
    """每个测试使用干净的内存事件队列，不写数据库"""
    log_manager.detach()
    log_manager.clear()
    yield
    log_manager.detach()
    log_manager.clear()

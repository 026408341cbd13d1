"""
Pytest 共用 fixtures 和設定
"""
import logging

import pytest
import numpy as np
from pathlib import Path
import sys

# 設定路徑
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.cone_geometry import ConicSurfaceSpec
from core.logging_config import ROOT_LOGGER_NAME
from core.conic_mesh import build_preset_mesh, flat_torus_mesh, icosphere_mesh
from core.conformal_flow import MeshFlowState
from core.rotational_flow import suspension_metric, initial_profile


@pytest.fixture(scope='session')
def troyanov_spec():
    """三錐點球面 β = (0.5, 0.5, 0.5)"""
    return ConicSurfaceSpec(genus=0, betas=(0.5, 0.5, 0.5), labels=('a', 'b', 'c'))


@pytest.fixture(scope='session')
def nontroyanov_spec():
    """違反 Troyanov 條件的 β = (0.2, 0.9, 0.9)"""
    return ConicSurfaceSpec(genus=0, betas=(0.2, 0.9, 0.9))


@pytest.fixture(scope='session')
def round_sphere_state():
    """ρ = 2 的光滑圓球 (β = 1 的懸垂度量)"""
    return suspension_metric(1.0, 2.0, dx=0.02)


@pytest.fixture(scope='session')
def football_state():
    """ρ = 2 的等角足球 β = 0.6"""
    return suspension_metric(0.6, 2.0, dx=0.02)


@pytest.fixture(scope='session')
def uneven_football_state():
    """不等角足球的初始剖面 β = (0.3, 0.9)"""
    return initial_profile(0.3, 0.9, dx=0.05)


@pytest.fixture(scope='session')
def icosphere():
    """細分一次的正二十面體 (42 個頂點)"""
    return icosphere_mesh(1)


@pytest.fixture(scope='session')
def torus():
    """6×6 方格環面"""
    return flat_torus_mesh(6)


@pytest.fixture(scope='session')
def troyanov_mesh(troyanov_spec):
    """實現 β = (0.5, 0.5, 0.5) 的細分二十面體"""
    return build_preset_mesh(troyanov_spec, resolution=1)


@pytest.fixture
def perturbed_mesh_state(troyanov_mesh):
    """帶固定隨機擾動的網格狀態"""
    rng = np.random.default_rng(7)
    return MeshFlowState.initial(troyanov_mesh, 0.05 * rng.standard_normal(troyanov_mesh.n_vertices))


@pytest.fixture
def run_dir(tmp_path):
    """單次執行的輸出資料夾"""
    path = tmp_path / 'run'
    path.mkdir()
    return path


@pytest.fixture
def fresh_logging():
    """命令列測試前後清除 'conicricci' logger 的 handler"""
    logger = logging.getLogger(ROOT_LOGGER_NAME)
    logger.handlers.clear()
    yield logger
    logger.handlers.clear()

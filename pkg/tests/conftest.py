import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure project root is on sys.path for imports like `from app...`
ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))


@pytest.fixture(autouse=True)
def no_metrics(monkeypatch):
    # keep test runs from appending to data/metrics.jsonl
    from app.settings import reset_settings

    monkeypatch.setenv("OCCLUFUSE_METRICS_ENABLED", "false")
    monkeypatch.delenv("OCCLUFUSE_SEED", raising=False)
    reset_settings()
    yield
    reset_settings()


@pytest.fixture(scope="session")
def forearm_model():
    from app.sensor import SensorModel

    return SensorModel(a1=1.2, a2=13500.0, a3=0.35, noise_variance=6.2e-6)


@pytest.fixture(scope="session")
def small_camera():
    from app.geometry import CameraModel

    # 1 m in front of the origin, looking along +y
    return CameraModel.look_at((0.0, -1.0, 0.0), (0.0, 0.0, 0.0), fx=160.0, fy=160.0, width=96, height=72)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

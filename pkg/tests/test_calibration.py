import json

import pytest

from app.errors import ConfigError
from app.sensor import detection_range
from app.tools.calibration import get_calibration, load_calibrations, object_classes, sensor_model_for


def test_bundled_classes():
    assert object_classes() == ["forearm", "hand", "metal_box", "test_sphere"]
    forearm = get_calibration("Forearm")
    assert forearm.a1_volts == 1.2
    assert forearm.synthetic


def test_forearm_model_detects_out_to_about_15cm():
    model = sensor_model_for("forearm")
    assert 0.10 <= detection_range(model) <= 0.20
    assert model.range_m == 0.15


def test_unknown_class():
    with pytest.raises(ConfigError):
        get_calibration("tentacle")


def test_bad_files_raise_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_calibrations(path=tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_calibrations(path=broken)
    invalid = tmp_path / "invalid.json"
    invalid.write_text(json.dumps({"x": {"a1_volts": -1, "a2_per_m2": 1, "a3_volts": 0, "noise_variance_volts2": 0}}))
    with pytest.raises(ConfigError):
        load_calibrations(path=invalid)


def test_settings_path_override(tmp_path, monkeypatch):
    from app.settings import reset_settings

    custom = tmp_path / "sensors.json"
    custom.write_text(
        json.dumps({"custom_target": {"a1_volts": 1.0, "a2_per_m2": 100.0, "a3_volts": 0.1, "noise_variance_volts2": 1e-4}})
    )
    monkeypatch.setenv("OCCLUFUSE_CALIBRATION_PATH", str(custom))
    reset_settings()
    assert object_classes() == ["custom_target"]
    assert sensor_model_for("custom_target").range_m == 0.15
    monkeypatch.delenv("OCCLUFUSE_CALIBRATION_PATH")
    reset_settings()
    assert "forearm" in object_classes()

import numpy as np
import pytest
from scipy import signal

from app.errors import (
    DegenerateError,
    FilterInstabilityError,
    NoMeasurementError,
    SingularCovarianceError,
    StepInstabilityError,
)
from app.geometry import COVARIANCE_SENTINEL, Pose6
from app.observer import (
    C_STACKED,
    LuenbergerObserver,
    MeasurementPair,
    ModalityMeasurement,
    NoiseConfig,
    ObserverState,
    compute_R_c,
    compute_R_v,
    gain,
    innovation,
    lowpass,
    lowpass_coefficients,
    occlusion_scale,
    predict,
    riccati_step,
    update,
    vision_covariance,
)
from app.render import Mask


CONFIG = NoiseConfig()


def _mask(n_on, shape=(10, 10)):
    labels = np.zeros(shape[0] * shape[1], dtype=np.uint8)
    labels[:n_on] = 1
    return Mask(labels.reshape(shape))


def _pair(vision_pose, haptic_pose, rv=0.08, rc=0.005):
    vision = (
        ModalityMeasurement(vision_pose, rv * np.eye(6))
        if vision_pose is not None
        else ModalityMeasurement.invalid(CONFIG)
    )
    haptic = (
        ModalityMeasurement(haptic_pose, rc * np.eye(6))
        if haptic_pose is not None
        else ModalityMeasurement.invalid(CONFIG)
    )
    return MeasurementPair(vision, haptic)


def test_scalar_riccati_reaches_sqrt_qr():
    P = np.array([[0.1]])
    one, q, r = np.eye(1), np.array([[4.0]]), np.array([[1.0]])
    for _ in range(5000):
        P = riccati_step(P, np.zeros((1, 1)), one, q, r, 1e-2)
    assert P[0, 0] == pytest.approx(2.0, rel=1e-6)


def test_stacked_riccati_steady_state():
    rv, rc = 0.08, 0.005
    R = np.diag([rv] * 6 + [rc] * 6)
    P = 1e-2 * np.eye(6)
    for _ in range(3000):
        P = riccati_step(P, np.zeros((6, 6)), C_STACKED, CONFIG.process, R, 1e-3)
    expected = np.sqrt(1e3 / (1 / rv + 1 / rc))
    np.testing.assert_allclose(np.diag(P), expected, rtol=1e-6)
    np.testing.assert_allclose(P, P.T)


def test_riccati_without_noise_or_information_holds_P(rng):
    L = rng.normal(scale=0.03, size=(6, 6))
    P0 = L @ L.T + 1e-4 * np.eye(6)
    R = COVARIANCE_SENTINEL * np.eye(12)
    P = P0
    for _ in range(1000):
        P = riccati_step(P, np.zeros((6, 6)), C_STACKED, np.zeros((6, 6)), R, 1e-3)
    np.testing.assert_allclose(P, P0, rtol=1e-9, atol=1e-15)


def test_riccati_rejects_unstable_step():
    with pytest.raises(StepInstabilityError):
        riccati_step(np.eye(1), np.zeros((1, 1)), np.eye(1), np.array([[1e12]]), np.eye(1), 1.0)


def test_singular_noise_is_rejected():
    with pytest.raises(SingularCovarianceError):
        gain(np.eye(6), C_STACKED, np.zeros((12, 12)))
    with pytest.raises(SingularCovarianceError):
        riccati_step(np.eye(6), np.zeros((6, 6)), C_STACKED, np.eye(6), np.zeros((12, 12)), 1e-3)


def test_gain_blocks():
    P = 2.0 * np.eye(6)
    R = np.diag([0.5] * 6 + [4.0] * 6)
    K = gain(P, C_STACKED, R)
    assert K.shape == (6, 12)
    np.testing.assert_allclose(K[:, :6], 4.0 * np.eye(6))
    np.testing.assert_allclose(K[:, 6:], 0.5 * np.eye(6))


def test_predict_integrates_velocity_and_noise():
    state = ObserverState.initial(Pose6(), CONFIG)
    out = predict(state, [1.0, 0.0, 0.0, 0.0, 0.0, 0.5], 0.1, CONFIG.process)
    np.testing.assert_allclose(out.estimate.as_vector(), [0.1, 0, 0, 0, 0, 0.05])
    np.testing.assert_allclose(out.covariance, CONFIG.initial_covariance + 100.0 * np.eye(6))
    assert out.time == pytest.approx(0.1)
    with pytest.raises(ValueError):
        predict(state, np.zeros(6), 0.0, CONFIG.process)


def test_innovation_wraps_and_zeroes_invalid():
    state = ObserverState.initial(Pose6([0, 0, 0], [0, 0, 3.1]), CONFIG)
    z = innovation(state, _pair(Pose6([0.1, 0, 0], [0, 0, -3.1]), None))
    assert z[0] == pytest.approx(0.1)
    assert z[5] == pytest.approx(2 * np.pi - 6.2)
    np.testing.assert_array_equal(z[6:], 0.0)


def test_update_requires_a_valid_modality():
    state = ObserverState.initial(Pose6(), CONFIG)
    with pytest.raises(NoMeasurementError):
        update(state, _pair(None, None), 1e-3, CONFIG)


def test_invalid_haptic_matches_vision_only_correction():
    state = ObserverState.initial(Pose6(), CONFIG)
    target = Pose6([0.01, -0.02, 0.03], [0.01, 0.0, -0.01])
    out = update(state, _pair(target, None), 1e-3, CONFIG)
    expected = 1e-3 * state.covariance @ np.linalg.inv(0.08 * np.eye(6)) @ target.as_vector()
    np.testing.assert_allclose(out.estimate.as_vector(), expected, rtol=1e-9)


def test_haptic_pulls_harder_than_vision():
    state = ObserverState.initial(Pose6(), CONFIG)
    out = update(state, _pair(Pose6([0.01, 0, 0]), Pose6([-0.01, 0, 0])), 1e-3, CONFIG)
    assert out.estimate.position[0] < 0.0


def test_occlusion_scale_examples():
    assert occlusion_scale(_mask(100), _mask(60)) == pytest.approx(0.4)
    assert occlusion_scale(_mask(50), _mask(80)) == 0.0
    with pytest.raises(DegenerateError):
        occlusion_scale(_mask(0), _mask(10))


def test_compute_R_v_scales_the_weight():
    R = compute_R_v(_mask(100), _mask(60), CONFIG.vision_weight)
    np.testing.assert_allclose(R, 0.4 * CONFIG.vision_weight)
    np.testing.assert_array_equal(compute_R_v(_mask(100), _mask(100), CONFIG.vision_weight), 0.0)
    np.testing.assert_allclose(vision_covariance(0.0, CONFIG), 0.01 * CONFIG.vision_weight)
    np.testing.assert_allclose(vision_covariance(0.4, CONFIG), 0.4 * CONFIG.vision_weight)


def test_compute_R_c_growth_and_cutoff():
    sensors = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    near = compute_R_c(Pose6([0.0, 0.0, 0.0]), sensors, CONFIG)
    np.testing.assert_allclose(np.diag(near), CONFIG.haptic_sigma2_near)
    edge = compute_R_c(Pose6([0.0, 0.0, 0.15]), sensors, CONFIG)
    np.testing.assert_allclose(np.diag(edge), 2.0 * CONFIG.haptic_sigma2_near)
    far = compute_R_c(Pose6([0.0, 0.0, 0.5]), sensors, CONFIG)
    np.testing.assert_array_equal(far, CONFIG.sentinel_block())
    capsule = compute_R_c(Pose6(), sensors, CONFIG, unobservable_axes=(3,))
    assert capsule[3, 3] == CONFIG.sentinel
    assert capsule[4, 4] == pytest.approx(0.05)


def test_lowpass_unit_dc_gain_and_cutoff():
    dt = 1e-3
    b, a = lowpass_coefficients(CONFIG.omega_n_rad_s, CONFIG.zeta, dt)
    assert np.sum(b) / np.sum(a) == pytest.approx(1.0)
    _, h = signal.freqz(b, a, worN=[60.0], fs=1.0 / dt)
    assert 20 * np.log10(abs(h[0])) == pytest.approx(-3.0, abs=0.2)
    with pytest.raises(FilterInstabilityError):
        lowpass_coefficients(CONFIG.omega_n_rad_s, CONFIG.zeta, 1e-2)


def test_lowpass_passes_constants_through():
    state = ObserverState.initial(Pose6(), CONFIG)
    pose = Pose6([0.1, 0.2, 0.3], [0.4, 0.5, 0.6])
    for _ in range(20):
        out, state = lowpass(state, pose, 1e-3, CONFIG)
        np.testing.assert_allclose(out.as_vector(), pose.as_vector(), atol=1e-12)


def test_lowpass_smooths_a_step():
    state = ObserverState.initial(Pose6(), CONFIG)
    _, state = lowpass(state, Pose6(), 1e-3, CONFIG)
    out, state = lowpass(state, Pose6([1.0, 0.0, 0.0]), 1e-3, CONFIG)
    assert 0.0 < out.position[0] < 0.5
    for _ in range(100):
        out, state = lowpass(state, Pose6([1.0, 0.0, 0.0]), 1e-3, CONFIG)
    assert out.position[0] == pytest.approx(1.0, abs=1e-2)


def test_lowpass_follows_yaw_across_the_wrap():
    state = ObserverState.initial(Pose6(), CONFIG)
    _, state = lowpass(state, Pose6([0, 0, 0], [0, 0, 3.1]), 1e-3, CONFIG)
    for _ in range(50):
        out, state = lowpass(state, Pose6([0, 0, 0], [0, 0, -3.1]), 1e-3, CONFIG)
        assert abs(out.attitude[2]) > 3.0


def test_observer_converges_on_consistent_measurements():
    truth = Pose6([0.1, 0.0, 0.2], [0.0, 0.1, 0.0])
    obs = LuenbergerObserver(CONFIG, truth.perturbed([0.01, -0.01, 0.0, 0.02, 0.0, 0.0]))
    out = obs.run(_pair(truth, truth), 1e-3, 500)
    np.testing.assert_allclose(out.as_vector(), truth.as_vector(), atol=1e-4)


def test_observer_predicts_through_missing_measurements():
    obs = LuenbergerObserver(CONFIG, Pose6([0.1, 0.0, 0.0]))
    out = obs.run(None, 1e-3, 10)
    np.testing.assert_allclose(out.position, [0.1, 0.0, 0.0])
    np.testing.assert_allclose(obs.state.covariance, CONFIG.initial_covariance + 10.0 * np.eye(6))
    assert obs.state.time == pytest.approx(0.01)


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(process=-np.eye(6))
    with pytest.raises(ValueError):
        NoiseConfig(zeta=0.0)

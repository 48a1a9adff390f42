from __future__ import annotations

import argparse
import json
import time
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from app.geometry import Pose6, RigidTransform
from app.harness import (
    SECTIONS,
    ScenarioResult,
    SweepGrid,
    camera_facing,
    forearm_scenario,
    forearm_shape,
    haptic_error_profile,
    occlusion_band,
    run_scenario,
    sweep,
    vision_error_profile,
)
from app.haptic import estimate_pose_haptic
from app.observer import C_STACKED, LuenbergerObserver, MeasurementPair, ModalityMeasurement, NoiseConfig, riccati_step
from app.render import Mask, render_mask
from app.sensor import SensorModel, fit_params, invert_response, measure, response, snr_at_distance
from app.shapes import ShapePrimitive
from app.tools.calibration import sensor_model_for
from app.tools.export import records_csv
from app.vision import brute_force_pose_search, estimate_pose_vision, mask_overlap, pose_lattice


REPO_ROOT = Path(__file__).resolve().parents[1]
RESULTS_PATH = REPO_ROOT / "data" / "eval_results.jsonl"


def check_sensor_model(args: argparse.Namespace) -> Dict[str, object]:
    model = sensor_model_for("forearm")
    d = np.linspace(0.0, 1.0, 1001)
    round_trip = max(abs(invert_response(model, float(v)) - float(x)) for x, v in zip(d, response(model, d)))
    samples = np.linspace(0.002, 0.25, 60)
    clean = fit_params(list(zip(samples, response(model, samples))))
    worst = 0.0
    for seed in range(args.fit_seeds):
        rng = np.random.default_rng(seed)
        noisy = response(model, samples) + rng.normal(0.0, 5e-3, samples.size)
        fit = fit_params(list(zip(samples, noisy)))
        rel = max(abs(fit.a1 - model.a1) / model.a1, abs(fit.a2 - model.a2) / model.a2, abs(fit.a3 - model.a3) / model.a3)
        worst = max(worst, rel)
    exact = np.allclose([clean.a1, clean.a2, clean.a3], model.params, rtol=1e-6)
    return {
        "passed": bool(round_trip < 1e-9 and exact and worst < 0.05),
        "round_trip_max_m": round_trip,
        "noisy_fit_worst_rel": worst,
    }


def check_snr_shape(args: argparse.Namespace) -> Dict[str, object]:
    model = sensor_model_for("forearm")
    d = np.linspace(0.01, 0.3, 300)
    curve = np.array([snr_at_distance(model, float(x)) for x in d])
    crossing = float(d[np.argmax(curve < 1.0)])
    return {
        "passed": bool(np.all(np.diff(curve) < 0) and 0.10 <= crossing <= 0.20),
        "crossing_m": crossing,
    }


def check_haptic_accuracy(args: argparse.Namespace) -> Dict[str, object]:
    sphere = ShapePrimitive.sphere(0.05)
    exact_model = SensorModel(1.0, 1e4, 0.3, 1e-6, sigma0_m=0.0, range_m=0.5)
    truth = Pose6([0.01, -0.01, 0.15])
    sensors = [RigidTransform.from_rpy(p) for p in ((0.1, 0, 0), (-0.1, 0, 0), (0, 0.1, 0), (0, 0, 0))]
    readings = [(T, measure(exact_model, T, sphere, truth, i)) for i, T in enumerate(sensors)]
    est = estimate_pose_haptic(readings, sphere, Pose6([0.0, 0.0, 0.14]))
    noise_free_err = float(np.linalg.norm(est.pose.position - truth.position))
    profile = haptic_error_profile([0.01, 0.03, 0.05], seeds=range(args.profile_seeds))
    worst = max(p.rmse_m for p in profile)
    return {
        "passed": bool(noise_free_err < 1e-6 and worst < 1e-3),
        "noise_free_error_m": noise_free_err,
        "profile": [{"d_m": p.distance_m, "rmse_m": p.rmse_m, "n_ok": p.n_ok} for p in profile],
    }


def check_overlap_exactness(args: argparse.Namespace) -> Dict[str, object]:
    rng = np.random.default_rng(0)
    bad = 0
    for _ in range(1000):
        h, w = rng.integers(1, 40, size=2)
        a = Mask((rng.random((h, w)) < rng.random()).astype(np.uint8))
        b = Mask((rng.random((h, w)) < rng.random()).astype(np.uint8))
        hamming = int(np.count_nonzero(a.binary() != b.binary()))
        ok = (
            mask_overlap(a, a) == 1.0
            and mask_overlap(a, a.complement()) == -1.0
            and mask_overlap(a, b) == (h * w - 2 * hamming) / (h * w)
        )
        bad += not ok
    return {"passed": bad == 0, "mismatches": bad}


def check_vision_oracle(args: argparse.Namespace) -> Dict[str, object]:
    shape = forearm_shape(256)
    camera = camera_facing((0.0, 0.0, 0.0), 1.5, width_px=args.width, height_px=args.height, fx_px=args.fx)
    hits = 0
    for seed in range(args.oracle_trials):
        rng = np.random.default_rng(seed)
        truth = Pose6(rng.normal(0.0, 0.01, 3), [0.0, *rng.normal(0.0, np.deg2rad(5.0), 2)])
        observed = render_mask(shape, truth, camera)
        prior = truth.perturbed(np.concatenate([rng.normal(0.0, 0.005, 3), [0.0], rng.normal(0.0, 0.02, 2)]))
        grid = pose_lattice(prior, 0.02, np.deg2rad(10.0), points_per_axis=args.lattice_points)
        _, oracle = brute_force_pose_search(observed, grid, shape, camera)
        ascent = estimate_pose_vision(observed, prior, shape, camera).score
        hits += ascent >= oracle - 1e-6
    rate = hits / args.oracle_trials
    return {"passed": rate >= 0.95, "hit_rate": rate, "trials": args.oracle_trials}


def check_vision_profile(args: argparse.Namespace) -> Dict[str, object]:
    profile = vision_error_profile(
        [1.0, 3.0, 6.0, 9.0], seeds=range(args.profile_seeds), width_px=args.width, height_px=args.height, fx_px=args.fx
    )
    depth = [p.per_axis_rmse_m[2] for p in profile]
    return {
        "passed": bool(profile[-1].rmse_m > profile[0].rmse_m and depth[-1] >= max(profile[-1].per_axis_rmse_m[:2])),
        "profile": [{"d_m": p.distance_m, "rmse_m": p.rmse_m, "per_axis_m": p.per_axis_rmse_m} for p in profile],
    }


def check_riccati(args: argparse.Namespace) -> Dict[str, object]:
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        q, r = rng.uniform(0.1, 10.0, size=2)
        P = np.array([[rng.uniform(0.0, 1.0)]])
        dt = 0.2 / np.sqrt(q / r)
        for _ in range(5000):
            P = riccati_step(P, np.zeros((1, 1)), np.eye(1), np.array([[q]]), np.array([[r]]), dt)
        worst = max(worst, abs(P[0, 0] - np.sqrt(q * r)))
    P = 1e-2 * np.eye(6)
    psd = True
    for _ in range(args.riccati_steps):
        A = rng.normal(0.0, 0.1, (6, 6))
        Q = np.diag(rng.uniform(0.0, 1e3, 6))
        R = np.diag(rng.uniform(1e-3, 1.0, 12))
        P = riccati_step(P, A, C_STACKED, Q, R, 1e-3)
        psd &= bool(np.allclose(P, P.T) and np.linalg.eigvalsh(P).min() >= -1e-9)
    return {"passed": bool(worst < 1e-6 and psd), "scalar_worst_abs": worst, "psd": psd}


def check_sentinel_fusion(args: argparse.Namespace) -> Dict[str, object]:
    config = NoiseConfig()
    start = Pose6([0.02, 0.0, 0.0])
    fused = LuenbergerObserver(config, start)
    vision_only = LuenbergerObserver(config, start)
    rng = np.random.default_rng(0)
    sup = 0.0
    for _ in range(500):
        y = Pose6(rng.normal(0.0, 0.01, 3), rng.normal(0.0, 0.01, 3))
        vision = ModalityMeasurement(y, 0.3 * config.vision_weight)
        haptic = ModalityMeasurement(Pose6(rng.normal(0.0, 0.05, 3)), config.sentinel_block())
        a = fused.step(MeasurementPair(vision, haptic), 1e-3)
        b = vision_only.step(MeasurementPair(vision, ModalityMeasurement.invalid(config)), 1e-3)
        sup = max(sup, float(np.max(np.abs(a.as_vector() - b.as_vector()))))
    return {"passed": sup < 1e-4, "sup_norm": sup}


def check_sweep(args: argparse.Namespace) -> Dict[str, object]:
    grid = SweepGrid(
        distances_m=(1.5,),
        occlusion_levels=(0.15, 0.5, 0.8),
        sections=(SECTIONS[0],),
        seeds=tuple(range(args.sweep_seeds)),
        duration_s=args.duration,
        width_px=args.width,
        height_px=args.height,
        fx_px=args.fx,
        min_frames=1,
    )
    result = sweep(grid, jobs=args.jobs)
    heavy = [r for r in result.results if occlusion_band(np.mean([f.occlusion_fraction for f in r.records])) == 2]
    wins = [r.rmse("fused") < r.rmse("vision") for r in heavy]
    reductions = [1.0 - r.rmse("fused") / r.rmse("vision") for r in heavy]
    light = [r for r in result.results if occlusion_band(np.mean([f.occlusion_fraction for f in r.records])) == 0]
    light_ratio = float(np.mean([r.rmse("fused") / r.rmse("vision") for r in light])) if light else float("nan")
    vision_by_band = [result.table.rmse(SECTIONS[0], 0, oi, "vision") for oi in range(3)]
    monotone = all(v is not None for v in vision_by_band) and all(
        a <= b for a, b in zip(vision_by_band, vision_by_band[1:])
    )
    win_rate = float(np.mean(wins)) if wins else 0.0
    mean_reduction = float(np.mean(reductions)) if reductions else 0.0
    return {
        "passed": bool(win_rate >= 0.9 and mean_reduction >= 0.25 and light_ratio <= 1.15 and monotone),
        "heavy_win_rate": win_rate,
        "heavy_mean_reduction": mean_reduction,
        "light_fused_over_vision": light_ratio,
        "vision_rmse_by_band": vision_by_band,
        "failed_scenarios": result.failed,
    }


def check_determinism(args: argparse.Namespace) -> Dict[str, object]:
    scenario = forearm_scenario(1.5, 0.5, seed=7, duration_s=0.5, width_px=args.width, height_px=args.height, fx_px=args.fx)
    a = records_csv([ScenarioResult(scenario.name, scenario.seed, run_scenario(scenario))])
    b = records_csv([ScenarioResult(scenario.name, scenario.seed, run_scenario(scenario))])
    grid = SweepGrid(
        distances_m=(1.5,),
        occlusion_levels=(0.5,),
        sections=(SECTIONS[0],),
        seeds=(0, 1),
        duration_s=0.5,
        width_px=args.width,
        height_px=args.height,
        fx_px=args.fx,
        min_frames=1,
    )
    serial = records_csv(sweep(grid, jobs=1).results)
    parallel = records_csv(sweep(grid, jobs=max(2, args.jobs)).results)
    return {"passed": a == b and serial == parallel, "rerun_equal": a == b, "jobs_equal": serial == parallel}


CHECKS: Dict[str, Callable[[argparse.Namespace], Dict[str, object]]] = {
    "sensor_model": check_sensor_model,
    "snr_shape": check_snr_shape,
    "haptic_accuracy": check_haptic_accuracy,
    "overlap_exactness": check_overlap_exactness,
    "vision_oracle": check_vision_oracle,
    "vision_profile": check_vision_profile,
    "riccati": check_riccati,
    "sentinel_fusion": check_sentinel_fusion,
    "occlusion_sweep": check_sweep,
    "determinism": check_determinism,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Monte-Carlo acceptance checks")
    parser.add_argument("--only", nargs="*", choices=sorted(CHECKS))
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--width", type=int, default=320)
    parser.add_argument("--height", type=int, default=240)
    parser.add_argument("--fx", type=float, default=400.0)
    parser.add_argument("--duration", type=float, default=4.0)
    parser.add_argument("--sweep-seeds", type=int, default=20)
    parser.add_argument("--fit-seeds", type=int, default=100)
    parser.add_argument("--profile-seeds", type=int, default=20)
    # a full 5^6 lattice renders 15625 masks per trial
    parser.add_argument("--oracle-trials", type=int, default=50)
    parser.add_argument("--lattice-points", type=int, default=5)
    parser.add_argument("--riccati-steps", type=int, default=100_000)
    return parser


def main(argv: List[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    names = args.only or list(CHECKS)
    RESULTS_PATH.parent.mkdir(parents=True, exist_ok=True)
    failed = 0
    with RESULTS_PATH.open("a", encoding="utf-8") as out:
        for name in names:
            t0 = time.perf_counter()
            outcome = CHECKS[name](args)
            outcome = {"check": name, "ts": time.time(), "latency_ms": (time.perf_counter() - t0) * 1000.0, **outcome}
            out.write(json.dumps(outcome, default=float) + "\n")
            failed += not outcome["passed"]
            print(f"{'PASS' if outcome['passed'] else 'FAIL'} {name} ({outcome['latency_ms'] / 1000.0:.1f} s)")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from fastapi import FastAPI, HTTPException
from pydantic import ValidationError

from .errors import ConfigError, OccluFuseError
from .geometry import COVARIANCE_SENTINEL
from .harness import ScenarioResult, observe_frame, run_scenario, sweep
from .models import (
    FitRequest,
    FitResponse,
    NoiseSettings,
    RunSummary,
    SceneConfig,
    SimulateRequest,
    SweepConfig,
    VisionSettings,
)
from .observability import configure_logging, record_metric, timed
from .sensor import DEFAULT_NOISE_GROWTH_M2, DEFAULT_RANGE_M, DEFAULT_SIGMA0_M, fit_params
from .settings import get_settings
from .tools import export
from .tools.calibration import load_calibrations


logger = logging.getLogger("app.main")

app = FastAPI(title="OccluFuse pose fusion")


@dataclass(frozen=True)
class RunConfig:
    scene_path: Path
    output_dir: Path
    seed: Optional[int]
    verbosity: int = 0


def config_payload() -> dict:
    """Every default that shapes published numbers."""
    settings = get_settings()
    return {
        "noise": NoiseSettings().model_dump(),
        "vision": VisionSettings().model_dump(),
        "sensor": {
            "sigma0_m": DEFAULT_SIGMA0_M,
            "range_m": DEFAULT_RANGE_M,
            "noise_growth_per_m2": DEFAULT_NOISE_GROWTH_M2,
            "sentinel": COVARIANCE_SENTINEL,
        },
        "calibration": {name: c.model_dump() for name, c in sorted(load_calibrations().items())},
        "settings": settings.model_dump(mode="json"),
    }


def _fit_response(samples: Sequence[Tuple[float, float]]) -> FitResponse:
    result = fit_params(samples)
    return FitResponse(
        a1_volts=result.a1,
        a2_per_m2=result.a2,
        a3_volts=result.a3,
        residual_rms_volts=result.residual_rms,
        n_samples=result.n_samples,
    )


def _summary(result: ScenarioResult, latency_ms: Optional[float] = None) -> RunSummary:
    return RunSummary(**export.run_summary(result, latency_ms))


@app.get("/healthz")
def healthz():
    return {"status": "ok"}


@app.get("/config")
def config_endpoint():
    return config_payload()


@app.post("/fit", response_model=FitResponse)
def fit_endpoint(req: FitRequest) -> FitResponse:
    try:
        return _fit_response(req.samples)
    except OccluFuseError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.post("/simulate", response_model=RunSummary)
def simulate_endpoint(req: SimulateRequest) -> RunSummary:
    t0 = time.perf_counter()
    try:
        scenario = req.scene.to_domain(req.seed)
        records = run_scenario(scenario)
    except (OccluFuseError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    dur_ms = (time.perf_counter() - t0) * 1000.0
    return _summary(ScenarioResult(scenario.name, scenario.seed, records), dur_ms)


# CLI


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_samples_csv(path: Path) -> List[Tuple[float, float]]:
    """(d_m, v_volts) rows; line 1 is a header only when none of its cells is a number."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    samples: List[Tuple[float, float]] = []
    for lineno, row in enumerate(csv.reader(text.splitlines()), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if lineno == 1 and not any(_is_number(cell) for cell in row):
            continue
        try:
            if len(row) != 2:
                raise ValueError(f"expected 2 columns, got {len(row)}")
            samples.append((float(row[0]), float(row[1])))
        except ValueError as exc:
            raise ConfigError(f"{path}: line {lineno}: {exc}") from exc
    if not samples:
        raise ConfigError(f"{path}: no samples")
    return samples


def load_scene(path: Path) -> SceneConfig:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scene {path}: {exc}") from exc
    try:
        return SceneConfig.model_validate_json(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_sweep_config(path: Optional[Path]) -> SweepConfig:
    if path is None:
        return SweepConfig()
    try:
        return SweepConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read grid {path}: {exc}") from exc
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _resolve_seed(cli_seed: Optional[int]) -> Optional[int]:
    if cli_seed is not None:
        if cli_seed < 0:
            raise ConfigError("--seed must be non-negative")
        return cli_seed
    return get_settings().seed


def _to_scenario(scene: SceneConfig, seed: Optional[int]):
    try:
        return scene.to_domain(seed)
    except ValueError as exc:
        raise ConfigError(f"scene {scene.name!r}: {exc}") from exc


def cmd_fit(args: argparse.Namespace) -> int:
    samples = read_samples_csv(args.samples_csv)
    response = _fit_response(samples)
    payload = response.model_dump()
    if args.object_class:
        payload["object_class"] = args.object_class
    if args.out:
        export.write_json(args.out, payload)
    print(json.dumps(payload, indent=2))
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    scene = load_scene(args.scene)
    run = RunConfig(
        scene_path=args.scene,
        output_dir=args.out or get_settings().output_dir / scene.name,
        seed=_resolve_seed(args.seed),
        verbosity=args.verbose,
    )
    scenario = _to_scenario(scene, run.seed)
    with timed("cli_simulate", {"scene": scene.name, "seed": scenario.seed}) as payload:
        records = run_scenario(scenario, jobs=args.jobs or get_settings().jobs)
        payload["frames"] = len(records)
    result = ScenarioResult(scenario.name, scenario.seed, records)
    summary = _summary(result)
    export.write_records_csv(run.output_dir / "records.csv", [result])
    export.write_json(run.output_dir / "summary.json", summary.model_dump())
    print(json.dumps(summary.model_dump(), indent=2))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_sweep_config(args.grid)
    updates = {}
    if args.seeds is not None:
        updates["seeds"] = args.seeds
    seed = _resolve_seed(args.seed)
    if seed is not None:
        updates["first_seed"] = seed
    if updates:
        config = config.model_copy(update=updates)
    try:
        grid = config.to_domain()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    jobs = args.jobs or get_settings().jobs
    out_dir = args.out or get_settings().output_dir / "sweep"
    result = sweep(grid, jobs=jobs)
    export.write_json(out_dir / "table.json", result.table.to_json())
    export.atomic_write_text(out_dir / "cells.csv", export.cell_csv(result.table))
    export.write_records_csv(out_dir / "records.csv", result.results)
    export.atomic_write_text(out_dir / "plot.dat", export.plot_data(result.table))
    print(json.dumps(result.table.to_json(), indent=2))
    if result.failed:
        for message in result.messages:
            print(f"failed: {message}", file=sys.stderr)
        return 1
    return 0


def cmd_config(args: argparse.Namespace) -> int:
    print(json.dumps(config_payload(), indent=2, default=str))
    return 0


def cmd_render_mask(args: argparse.Namespace) -> int:
    scenario = _to_scenario(load_scene(args.scene), _resolve_seed(args.seed))
    mask, occluded = observe_frame(scenario, args.time)
    out = args.out or get_settings().output_dir / f"{scenario.name}_t{args.time:g}.pgm"
    export.write_pgm(out, mask)
    print(json.dumps({"path": str(out), "pixels": mask.count(), "occlusion_fraction": occluded}))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="occlufuse", description="Occlusion-robust vision/haptic pose fusion")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit sensor response parameters to (d_m, v_volts) samples")
    p.add_argument("samples_csv", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--object-class")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run one scene")
    p.add_argument("scene", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="processes rendering the observed masks")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run the distance x occlusion grid")
    p.add_argument("grid", type=Path, nargs="?")
    p.add_argument("--seeds", type=int)
    p.add_argument("--seed", type=int, help="first seed")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("config", help="configuration utilities")
    config_sub = p.add_subparsers(dest="config_command", required=True)
    dump = config_sub.add_parser("dump", help="print every default")
    dump.set_defaults(func=cmd_config)

    p = sub.add_parser("render-mask", help="write the observed mask of a scene frame as PGM")
    p.add_argument("scene", type=Path)
    p.add_argument("--time", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_render_mask)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def _cli(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 for --help
        return int(exc.code or 0)
    configure_logging(args.verbose)
    try:
        code = args.func(args)
    except OccluFuseError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        code = exc.exit_code
    record_metric("cli", {"command": args.command, "exit_code": code})
    return code


if __name__ == "__main__":
    raise SystemExit(_cli())

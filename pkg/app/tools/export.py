from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence

from ..harness import METHODS, FrameRecord, ResultTable, ScenarioResult
from ..render import Mask


AXES = ("x", "y", "z", "roll", "pitch", "yaw")

RECORD_COLUMNS: List[str] = (
    [
        "scenario",
        "seed",
        "section",
        "frame",
        "t_s",
        "camera_distance_m",
        "occlusion_fraction",
        "vision_score",
        "vision_scale",
        "lost_track",
        "haptic_valid",
        "n_haptic",
        "haptic_rms_m",
    ]
    + [f"truth_{a}" for a in AXES]
    + [f"{m}_err_{a}" for m in METHODS for a in AXES]
    + [f"{m}_{kind}" for m in METHODS for kind in ("pos_err_m", "att_err_rad")]
)


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) or hasattr(value, "dtype"):
        return format(float(value), ".9g")
    return str(value)


# temp file in the target directory, then rename over the target
def atomic_write_bytes(path: Path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path: Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: Path, payload: Any) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def write_pgm(path: Path, mask: Mask) -> Path:
    return atomic_write_bytes(path, mask.pgm_bytes())


def _record_row(result: ScenarioResult, rec: FrameRecord) -> List[str]:
    row: List[Any] = [
        result.name,
        result.seed,
        result.section,
        rec.frame,
        rec.t,
        rec.camera_distance_m,
        rec.occlusion_fraction,
        rec.vision_score,
        rec.vision_scale,
        rec.lost_track,
        rec.haptic_valid,
        rec.n_haptic,
        rec.haptic_rms_m,
    ]
    row.extend(rec.truth.as_vector())
    for method in METHODS:
        err = rec.errors.get(method)
        row.extend([None] * 6 if err is None else list(err))
    for method in METHODS:
        row.extend([rec.position_error(method), rec.attitude_error(method)])
    return [_fmt(v) for v in row]


def records_csv(results: Iterable[ScenarioResult]) -> str:
    """One row per frame, fixed column order, floats at 9 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_COLUMNS)
    for result in results:
        for rec in result.records:
            writer.writerow(_record_row(result, rec))
    return buf.getvalue()


def write_records_csv(path: Path, results: Sequence[ScenarioResult]) -> Path:
    return atomic_write_text(path, records_csv(results))


def cell_csv(table: ResultTable) -> str:
    """Per-cell summary: frames, failures and RMSE per method."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["section", "distance_band", "occlusion_band", "frames", "failures"] + [f"{m}_rmse_m" for m in METHODS])
    for (section, di, oi), stats in sorted(table.cells.items()):
        writer.writerow(
            [section, di, oi, stats.n_frames, stats.failures] + [_fmt(stats.rmse_m[m]) for m in METHODS]
        )
    return buf.getvalue()


def plot_data(table: ResultTable) -> str:
    """Whitespace-separated long format for gnuplot; absent cells are NaN."""
    lines = ["# section distance_m occlusion method rmse_m"]
    for section, d_mid, o_mid, method, rmse in table.plot_rows():
        value = "NaN" if rmse is None else format(rmse, ".9g")
        lines.append(f"{section} {d_mid:.9g} {o_mid:.9g} {method} {value}")
    return "\n".join(lines) + "\n"


def run_summary(result: ScenarioResult, latency_ms: Optional[float] = None) -> dict:
    records = result.records
    occ = [r.occlusion_fraction for r in records]
    return {
        "name": result.name,
        "seed": result.seed,
        "section": result.section,
        "frames": len(records),
        "lost_track": sum(r.lost_track for r in records),
        "haptic_valid_frames": sum(r.haptic_valid for r in records),
        "mean_occlusion": float(sum(occ) / len(occ)) if occ else 0.0,
        "rmse_m": {m: result.rmse(m) for m in METHODS},
        "latency_ms": latency_ms,
    }

"""
Run plumbing for the workbench
Curve export, parameter sweeps over the (a, b) plane, run manifests and the flat config format
"""

import datetime
import json
import logging
import os
import tempfile
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import pandas as pd
from pydantic import ValidationError

from analysis import area_estimate, capture_experiment, lyapunov_curve, regime_classify
from cohomology import CriticalB, critical_b
from curves import CURVE_NAMES, CurveEvaluator, lipschitz_estimate, sample_curve
from errors import ExportError, InvalidParameterError, NumericalFailureError, WorkbenchError
from forcing import TrigPoly, parse_forcing, uniform_grid
from maps import MapParams, SystemKind
from schemas import RunManifest, SweepConfig, SweepRow
from solver_config import solver_config

logger = logging.getLogger(__name__)

TOOL_VERSION = "0.1.0"
FLOAT_FORMAT = "%.17g"
MANIFEST_NAME = "manifest.json"
SWEEP_CSV = "sweep.csv"
CHUNK_SIZE = 1 << 16

PathLike = Union[str, Path]


def crc32_file(path: PathLike) -> str:
    crc = 0
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(CHUNK_SIZE), b''):
            crc = zlib.crc32(chunk, crc)
    return f"{crc & 0xFFFFFFFF:08x}"


def _ensure_dir(out_dir: PathLike) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ExportError(f"cannot create output directory {out}: {e}")
    return out


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write to a temporary file in the target directory, then rename over the target"""
    path = Path(path)
    tmp_name = None
    try:
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp_name, path)
    except OSError as e:
        if tmp_name is not None and os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise ExportError(f"cannot write {path}: {e}")
    return path


def frame_to_csv_text(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def write_frame(df: pd.DataFrame, path: PathLike) -> Path:
    return atomic_write_text(path, frame_to_csv_text(df))


def _timestamp() -> str:
    if solver_config.source_date_epoch:
        moment = datetime.datetime.fromtimestamp(int(solver_config.source_date_epoch), tz=datetime.timezone.utc)
    else:
        moment = datetime.datetime.now(tz=datetime.timezone.utc)
    return moment.isoformat(timespec='seconds')


def write_manifest(out_dir: PathLike, command: str, parameters: Dict[str, str],
                   outputs: Iterable[PathLike], omega: float) -> Path:
    """Manifest with a CRC-32 per output file, named relative to the manifest directory"""
    out = Path(out_dir)
    checksums = {Path(p).name: crc32_file(p) for p in outputs}
    manifest = RunManifest(
        tool_version=TOOL_VERSION,
        created_at=_timestamp(),
        command=command,
        omega=f"{omega:.17g}",
        parameters=dict(sorted(parameters.items())),
        outputs=dict(sorted(checksums.items())),
    )
    path = atomic_write_text(out / MANIFEST_NAME, manifest.model_dump_json(indent=2) + "\n")
    logger.info(f"wrote manifest {path} ({len(checksums)} outputs)")
    return path


def read_manifest(path: PathLike) -> RunManifest:
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as e:
        raise ExportError(f"cannot read manifest {path}: {e}")
    try:
        return RunManifest.model_validate_json(text)
    except ValidationError as e:
        raise InvalidParameterError(f"malformed manifest {path}: {e}")


def verify_manifest(path: PathLike) -> List[str]:
    """Missing or mismatching outputs of a manifest; empty when everything checks out"""
    manifest = read_manifest(path)
    base = Path(path).parent
    problems = []
    for name, expected in manifest.outputs.items():
        target = base / name
        if not target.exists():
            problems.append(f"{name}: missing")
            continue
        actual = crc32_file(target)
        if actual != expected:
            problems.append(f"{name}: checksum {actual} != {expected}")
    return problems


def export_curves(params: MapParams, n: int, grid_size: Optional[int] = None,
                  which: Iterable[str] = ('phi_n', 'mu'), out_dir: PathLike = '.') -> Dict[str, Path]:
    """One theta,value CSV per requested curve plus a manifest

    Every curve is evaluated before the first file is written.
    """
    names = list(dict.fromkeys(which))
    if not names:
        raise InvalidParameterError("no curves requested")
    unknown = [w for w in names if w not in CURVE_NAMES]
    if unknown:
        raise InvalidParameterError(f"unknown curves {unknown} (choose from {', '.join(CURVE_NAMES)})")
    if 'phi_image' in names and params.kind is not SystemKind.PERIOD_DOUBLING:
        raise InvalidParameterError("phi_image is the second branch of the two-periodic curve (period doubling only)")
    grid_size = grid_size or solver_config.get_grid('export')

    ev = CurveEvaluator(params, n)
    theta = uniform_grid(grid_size)
    frames = {}
    for name in names:
        sample = sample_curve(ev, grid_size, label=name, workers=solver_config.workers)
        frames[name] = pd.DataFrame({'theta': theta, 'value': sample.values})

    out = _ensure_dir(out_dir)
    written = {name: write_frame(frame, out / f"{name}.csv") for name, frame in frames.items()}
    parameters = ev.describe()
    parameters.update({'grid': str(grid_size), 'which': ','.join(names)})
    written['manifest'] = write_manifest(out, 'curves', parameters, written.values(), params.omega)
    logger.info(f"exported {', '.join(names)} for {params.kind.label} to {out}")
    return written


# Sweeps

LIST_KEYS = ('a_values', 'b_values', 'diagnostics')


def load_sweep_config(path: Optional[PathLike] = None, overrides: Optional[Dict[str, object]] = None) -> SweepConfig:
    """Flat "key = value" lines ('#' starts a comment line); non-None overrides win"""
    data: Dict[str, object] = {}
    if path is not None:
        try:
            lines = Path(path).read_text(encoding='utf-8').splitlines()
        except OSError as e:
            raise ExportError(f"cannot read sweep config {path}: {e}")
        for number, line in enumerate(lines, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            key, sep, value = line.partition('=')
            if not sep:
                raise InvalidParameterError(f"{path}:{number}: expected 'key = value'")
            data[key.strip().replace('-', '_')] = value.strip()
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key.replace('-', '_')] = value

    unknown = sorted(set(data) - set(SweepConfig.model_fields))
    if unknown:
        raise InvalidParameterError(f"unknown sweep settings: {', '.join(unknown)}")
    try:
        return SweepConfig(**data)
    except ValidationError as e:
        raise InvalidParameterError(f"invalid sweep config: {e}")


@dataclass(frozen=True)
class SweepCell:
    index: int
    a_index: int
    b_index: int
    a: float
    b_value: float


@dataclass(frozen=True)
class SweepResult:
    frame: pd.DataFrame
    csv_path: Path
    manifest_path: Path
    run_id: Optional[int] = None


def _status(e: WorkbenchError) -> str:
    if isinstance(e, InvalidParameterError):
        return 'invalid-params'
    if isinstance(e, NumericalFailureError):
        return 'numerical-failure'
    return 'error'


def _critical_for_a(cfg: SweepConfig, kind: SystemKind, g: TrigPoly,
                    a: float) -> Tuple[Optional[CriticalB], Optional[WorkbenchError]]:
    try:
        params = MapParams(kind, a, 0.0, cfg.delta, cfg.omega, g)
        if not (kind.is_piecewise and abs(params.a) > 1):
            raise InvalidParameterError(f"b* needs a piecewise map with |a| > 1, got a = {a}")
        return critical_b(kind, a, params.omega, g, cfg.delta), None
    except WorkbenchError as e:
        return None, e


def _run_cell(cfg: SweepConfig, kind: SystemKind, g: TrigPoly, cell: SweepCell,
              crit: Optional[CriticalB], crit_error: Optional[WorkbenchError]) -> SweepRow:
    row = SweepRow(cell_index=cell.index, a_index=cell.a_index, b_index=cell.b_index, a=cell.a)
    diagnostics = set(cfg.diagnostics)
    try:
        MapParams(kind, cell.a, 0.0, cfg.delta, cfg.omega, g)
        needs_crit = cfg.b_mode == 'relative' or diagnostics & {'critical_b', 'regime'}
        if needs_crit and crit_error is not None:
            row.status, row.message = _status(crit_error), str(crit_error)
            return row
        if cfg.b_mode == 'relative':
            row.b_rel = cell.b_value
            row.b = cell.b_value * crit.b_star
        else:
            row.b = cell.b_value
            if crit is not None:
                row.b_rel = row.b / crit.b_star
        params = MapParams(kind, cell.a, row.b, cfg.delta, cfg.omega, g)

        if 'critical_b' in diagnostics:
            row.b_star = crit.b_star
            row.theta_star = crit.theta_star
            row.colliding = crit.colliding.value
        if 'regime' in diagnostics:
            row.regime = regime_classify(kind, cell.a, row.b, params.omega, g, cfg.delta).regime.value
        if 'lyapunov' in diagnostics:
            report = lyapunov_curve(params, steps=cfg.steps)
            row.lyapunov = report.value
            row.flat_fraction = report.flat_fraction
        if 'area' in diagnostics:
            row.area = area_estimate(params, cfg.n_max, cfg.grid)
        if 'lipschitz' in diagnostics:
            row.lipschitz = lipschitz_estimate(sample_curve(CurveEvaluator(params, cfg.n_max), cfg.grid))
        if 'capture' in diagnostics:
            row.capture_fraction = capture_experiment(params, cfg.trials, cfg.max_iters, cfg.seed).fraction
    except WorkbenchError as e:
        row.status, row.message = _status(e), str(e)
        logger.error(f"sweep cell {cell.index} (a={cell.a}, b={cell.b_value}) failed: {e}")
    return row


def _persist(cfg: SweepConfig, rows: List[SweepRow], out: Path, manifest_path: Path) -> int:
    import crud
    from database import SessionLocal, init_db

    init_db()
    db = SessionLocal()
    try:
        run = crud.create_sweep_run(db, cfg, str(out), str(manifest_path))
        crud.add_sweep_records(db, run.id, rows)
        return run.id
    finally:
        db.close()


def run_sweep(cfg: SweepConfig, out_dir: Optional[PathLike] = None) -> SweepResult:
    """Evaluate the requested diagnostics on every (a, b) cell

    Rows come out in (a index, b index) order whatever the worker count; a failing cell only
    marks its own status column.
    """
    kind = SystemKind(cfg.system)
    g = parse_forcing(cfg.g)
    out = _ensure_dir(out_dir or cfg.output_dir)

    needs_crit = cfg.b_mode == 'relative' or bool(set(cfg.diagnostics) & {'critical_b', 'regime'})
    per_a = [_critical_for_a(cfg, kind, g, a) if needs_crit else (None, None) for a in cfg.a_values]
    cells = [SweepCell(i * len(cfg.b_values) + j, i, j, a, b)
             for i, a in enumerate(cfg.a_values) for j, b in enumerate(cfg.b_values)]
    logger.info(f"sweep {kind.label}: {len(cells)} cells, diagnostics {','.join(cfg.diagnostics)}, "
                f"{cfg.workers} workers")

    def run(cell: SweepCell) -> SweepRow:
        crit, error = per_a[cell.a_index]
        return _run_cell(cfg, kind, g, cell, crit, error)

    if cfg.workers <= 1:
        rows = [run(cell) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(run, cells))
    rows.sort(key=lambda r: r.cell_index)

    frame = pd.DataFrame([r.model_dump() for r in rows], columns=list(SweepRow.model_fields))
    csv_path = write_frame(frame, out / SWEEP_CSV)

    parameters = {key: (','.join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in value)
                        if isinstance(value, list) else
                        (f"{value:.17g}" if isinstance(value, float) else str(value)))
                  for key, value in cfg.model_dump().items() if key not in ('output_dir', 'workers', 'persist')}
    for i, (crit, error) in enumerate(per_a):
        if crit is not None:
            parameters[f"b_star.{i}"] = f"{crit.b_star:.17g}"
            if cfg.b_mode == 'relative':
                parameters[f"b_absolute.{i}"] = ','.join(f"{b * crit.b_star:.17g}" for b in cfg.b_values)
        elif error is not None:
            parameters[f"b_star.{i}"] = f"unavailable: {error}"
    manifest_path = write_manifest(out, 'sweep', parameters, [csv_path], cfg.omega)

    run_id = _persist(cfg, rows, out, manifest_path) if cfg.persist else None
    failed = sum(1 for r in rows if r.status != 'ok')
    logger.info(f"sweep done: {len(rows)} rows, {failed} failed cells, written to {csv_path}")
    return SweepResult(frame=frame, csv_path=csv_path, manifest_path=manifest_path, run_id=run_id)


def sweep_summary(frame: pd.DataFrame) -> str:
    counts = frame['status'].value_counts().sort_index()
    return json.dumps({str(k): int(v) for k, v in counts.items()}, sort_keys=True)

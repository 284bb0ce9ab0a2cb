"""
Artifact files: CSV tables with a provenance header, parameter checkpoints, JSON reports
"""
import csv
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from errors import CheckpointError, StructuralError
from network import MLPState

logger = logging.getLogger(__name__)

VERSION = "1.0.0"
CHECKPOINT_FORMAT = 1


def format_value(value) -> str:
    """Floats with 17 significant digits, everything else via str"""
    if isinstance(value, (float, np.floating)):
        return format(float(value), '.17g')
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def header_line(config_hash: str, **extra) -> str:
    parts = [f"# vpinn {VERSION} config={config_hash}"]
    parts.extend(f"{key}={value}" for key, value in extra.items())
    return " ".join(parts)


def parse_header(line: str) -> Dict[str, str]:
    tokens = line.lstrip('#').split()
    if len(tokens) < 3 or tokens[0] != 'vpinn':
        raise CheckpointError(f"Not a vpinn artifact header: {line.strip()!r}")
    meta = {'version': tokens[1]}
    for token in tokens[2:]:
        key, _, value = token.partition('=')
        meta[key] = value
    return meta


def write_csv(path, config_hash: str, columns: Sequence[str], rows: Iterable[Sequence], **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as handle:
        handle.write(header_line(config_hash, **extra) + "\n")
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path) -> Tuple[Dict[str, str], List[str], List[List[str]]]:
    """(header metadata, column names, raw rows)"""
    path = Path(path)
    with open(path, newline='') as handle:
        first = handle.readline()
        meta = parse_header(first)
        reader = csv.reader(handle)
        columns = next(reader)
        rows = [row for row in reader if row]
    return meta, columns, rows


def write_loss_history(path, config_hash: str, records, **extra) -> Path:
    return write_csv(path, config_hash, ['iteration', 'lr', 'loss'],
                     ((r.iteration, r.lr, r.loss) for r in records), **extra)


def write_timing(path, config_hash: str, records) -> Path:
    return write_csv(path, config_hash, ['iteration', 'wall_time_s'],
                     ((r.iteration, r.wall_time) for r in records))


def write_residuals(path, config_hash: str, residuals, mode_indices: Optional[Sequence[int]] = None,
                    **extra) -> Path:
    """One row per step n (1-based) and test function k

    k is the basis mode index when mode_indices is given, the 1-based position otherwise.
    """
    modes = np.arange(1, residuals.n_test + 1) if mode_indices is None else np.asarray(mode_indices)
    if len(modes) != residuals.n_test:
        raise StructuralError(f"{len(modes)} mode indices for {residuals.n_test} test functions")
    rows = ((n + 1, int(modes[k]), residuals.r[n, k])
            for n in range(residuals.n_time) for k in range(residuals.n_test))
    return write_csv(path, config_hash, ['n', 'k', 'r'], rows,
                     k_index='mode' if mode_indices is not None else 'position', **extra)


def write_snapshots(path, config_hash: str, steps: Sequence[int], times: Sequence[float],
                    x: np.ndarray, u_nn: np.ndarray, u_ref: np.ndarray) -> Path:
    """u_nn and u_ref are (len(steps), len(x))"""
    rows = ((n, t, xi, u_nn[i, j], u_ref[i, j])
            for i, (n, t) in enumerate(zip(steps, times)) for j, xi in enumerate(x))
    return write_csv(path, config_hash, ['n', 't', 'x', 'u_nn', 'u_ref'], rows)


def write_midpoint(path, config_hash: str, columns: Dict[str, np.ndarray]) -> Path:
    names = list(columns)
    return write_csv(path, config_hash, names, zip(*[columns[name] for name in names]))


def write_error_report(path, config_hash: str, report) -> Path:
    rows = [(n + 1, report.per_step_L2[n], report.per_step_H10[n], report.dual_norm_per_step[n])
            for n in range(report.n_time)]
    return write_csv(path, config_hash, ['n', 'err_L2', 'err_H10', 'dual_norm'], rows,
                     rel_L2=format_value(report.rel_L2), rel_H10=format_value(report.rel_H10),
                     M=format_value(report.M), gamma=format_value(report.gamma), C_P=format_value(report.C_P))


def write_oracle(path, config_hash: str, solution) -> Path:
    grid = solution.grid
    times, nodes = grid.times, grid.nodes
    rows = ((times[n], x, solution.U[n, i]) for n in range(grid.n_steps + 1) for i, x in enumerate(nodes))
    return write_csv(path, config_hash, ['t', 'x', 'u'], rows)


def write_picard(path, config_hash: str, solution) -> Path:
    return write_csv(path, config_hash, ['n', 'iterations'],
                     ((n + 1, it) for n, it in enumerate(solution.picard_iterations)))


def to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    return value


def write_json(path, data: Dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='\n') as handle:
        json.dump(to_jsonable(data), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def save_checkpoint(path, state: MLPState, config_hash: str, iteration: int) -> Path:
    """One row per parameter block: name, rows, cols, then row-major values"""
    rows = []
    for j, (w, b) in enumerate(zip(state.weights, state.biases)):
        rows.append([f"W{j}", w.shape[0], w.shape[1], *w.ravel()])
        rows.append([f"b{j}", b.shape[0], 1, *b.ravel()])
    path = write_csv(path, config_hash, ['block', 'rows', 'cols', 'values'], rows,
                     checkpoint=CHECKPOINT_FORMAT, iteration=iteration)
    logger.debug(f"Checkpoint written to {path} (iteration {iteration})")
    return path


def load_checkpoint(path) -> Tuple[MLPState, Dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        meta, columns, rows = read_csv(path)
    except (OSError, StopIteration, csv.Error) as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    if meta.get('checkpoint') != str(CHECKPOINT_FORMAT):
        raise CheckpointError(f"{path}: unsupported checkpoint format {meta.get('checkpoint')!r}")
    if columns[:3] != ['block', 'rows', 'cols']:
        raise CheckpointError(f"{path}: unexpected columns {columns}")
    if not rows or len(rows) % 2:
        raise CheckpointError(f"{path}: expected weight/bias pairs, got {len(rows)} blocks")

    weights, biases = [], []
    try:
        for index, row in enumerate(rows):
            name, n_rows, n_cols = row[0], int(row[1]), int(row[2])
            values = np.array([float(v) for v in row[3:]])
            expected = f"{'W' if index % 2 == 0 else 'b'}{index // 2}"
            if name != expected or values.size != n_rows * n_cols:
                raise CheckpointError(f"{path}: block {index} is {name} with {values.size} values")
            if index % 2 == 0:
                weights.append(values.reshape(n_rows, n_cols))
            else:
                biases.append(values)
    except ValueError as e:
        if isinstance(e, CheckpointError):
            raise
        raise CheckpointError(f"{path}: {e}") from e

    for j in range(1, len(weights)):
        if weights[j].shape[1] != weights[j - 1].shape[0]:
            raise CheckpointError(f"{path}: layer {j} does not chain with layer {j - 1}")
    return MLPState(weights=weights, biases=biases), meta

"""CSV and JSON readers/writers for frontiers, positions, reports and run manifests."""

import hashlib
import json
import logging
import pathlib
from dataclasses import asdict, dataclass, field

import numpy as np

from src.solver import FrontierPath, binomial_stderr, default_jump_threshold, detect_jumps

logger = logging.getLogger(__name__)

FRONTIER_HEADER = "t,lambda,alive_fraction"
TOOL_VERSION = "0.1.0"


class ConfigException(Exception):
    pass


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_rows(path: str | pathlib.Path) -> list[list[str]]:
    path = pathlib.Path(path)
    if not path.is_file():
        raise ConfigException(f'file with path "{path}" not found')
    lines = [line.strip() for line in path.read_text().splitlines()]
    return [line.split(",") for line in lines if line]


def read_columns(path: str | pathlib.Path, n_cols: int) -> list[np.ndarray]:
    """Numeric columns of a CSV file; a non-numeric first row is taken as a header."""
    rows = read_rows(path)
    if rows and not all(_is_number(tok) for tok in rows[0]):
        rows = rows[1:]
    if not rows:
        raise ConfigException(f'"{path}" holds no data rows')

    data = []
    for i, row in enumerate(rows, start=1):
        if len(row) < n_cols:
            raise ConfigException(
                f'"{path}" row {i} has {len(row)} columns, expected {n_cols}'
            )
        try:
            data.append([float(tok) for tok in row[:n_cols]])
        except ValueError as e:
            raise ConfigException(f'"{path}" row {i} is not numeric: {e}') from e
    return list(np.asarray(data).T)


def read_positions(path: str | pathlib.Path) -> np.ndarray:
    (values,) = read_columns(path, 1)
    return values


def frontier_csv(frontier: FrontierPath) -> str:
    """Frontier CSV with shortest round-trip decimals."""
    lines = [FRONTIER_HEADER]
    lines.extend(
        f"{t!r},{lam!r},{alive!r}"
        for t, lam, alive in zip(
            frontier.t_grid.tolist(),
            frontier.lam.tolist(),
            frontier.alive_fraction.tolist(),
        )
    )
    return "\n".join(lines) + "\n"


def write_frontier(path: str | pathlib.Path, frontier: FrontierPath):
    pathlib.Path(path).write_text(frontier_csv(frontier))
    logger.info("wrote frontier to '%s'", path)


def write_table(path: str | pathlib.Path, header: list[str], rows: list[list[float]]):
    lines = [",".join(header)]
    lines.extend(",".join(repr(float(v)) for v in row) for row in rows)
    pathlib.Path(path).write_text("\n".join(lines) + "\n")
    logger.info("wrote table to '%s'", path)


def read_frontier(
    path: str | pathlib.Path,
    n_samples: int,
    jump_threshold: float | None = None,
    method: str = "particle",
) -> FrontierPath:
    """Frontier CSV with binomial standard errors; the default jump threshold follows its own grid."""
    rows = read_rows(path)
    if not rows or ",".join(tok.strip() for tok in rows[0]) != FRONTIER_HEADER:
        raise ConfigException(f'"{path}" must start with the header "{FRONTIER_HEADER}"')
    t_grid, lam, _ = read_columns(path, 3)
    if len(t_grid) < 2:
        raise ConfigException(f'"{path}" needs at least two time nodes')
    return FrontierPath(
        t_grid=t_grid,
        lam=lam,
        stderr=binomial_stderr(lam, n_samples),
        jumps=detect_jumps(
            t_grid,
            lam,
            default_jump_threshold(n_samples, t_grid) if jump_threshold is None else jump_threshold,
        ),
        n_samples=n_samples,
        method=method,
    )


def read_json(path: str | pathlib.Path) -> dict:
    path = pathlib.Path(path)
    if not path.is_file():
        raise ConfigException(f'file with path "{path}" not found')
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigException(f'malformed JSON in "{path}": {e}') from e


def to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def dump_json(data) -> str:
    return json.dumps(to_jsonable(data), indent=2, sort_keys=True)


def write_json(path: str | pathlib.Path, data):
    pathlib.Path(path).write_text(dump_json(data) + "\n")
    logger.info("wrote '%s'", path)


def config_hash(config: dict) -> str:
    canonical = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class RunManifest:
    config: dict
    seed: int
    config_hash: str = ""
    tool_version: str = TOOL_VERSION
    timings: dict[str, float] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    jumps: list[tuple[float, float]] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.config_hash:
            self.config_hash = config_hash(self.config)

    def write(self, path: str | pathlib.Path):
        write_json(path, asdict(self))


def manifest_path(out: str | pathlib.Path) -> pathlib.Path:
    return pathlib.Path(f"{out}.manifest.json")

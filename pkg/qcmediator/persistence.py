"""
qcmediator Artifact Persistence

Crash-safe output of run artifacts:
- Atomic writes: temp file in the target directory, then rename
- JSON reports with canonical key order
- CSV tables at 17 significant digits (pandas)
- Ensemble state snapshots in a columnar format (point, axes, P, S)
- Git-style content hashes of configurations
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

from qcmediator.ensemble import ConfigurationGrid, ContinuousAxis, EnsembleState

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def canonical_json(obj: Any) -> str:
    """Sorted keys, compact separators, no trailing whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def content_hash(obj: Any) -> str:
    """SHA-1 of the git blob object for the canonical JSON of obj."""
    payload = canonical_json(obj).encode("utf-8")
    header = f"blob {len(payload)}\0".encode("ascii")
    return hashlib.sha1(header + payload).hexdigest()


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


class ArtifactWriter:
    """
    Writes run artifacts into one output directory.

    Every file is written to "<name>.tmp" first and renamed into place, so a
    crash never leaves a half-written artifact behind.
    """

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written: Dict[str, Path] = {}

    def _atomic_write(self, name: str, text: str) -> Path:
        target = self.out_dir / name
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_name(target.name + ".tmp")
        try:
            with open(tmp, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            tmp.replace(target)
        except OSError:
            tmp.unlink(missing_ok=True)
            raise
        self.written[name] = target
        logger.debug(f"Wrote {target}")
        return target

    def write_json(self, name: str, obj: Any) -> Path:
        text = json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"
        return self._atomic_write(name, text)

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        return self._atomic_write(name, frame.to_csv(index=False, float_format=FLOAT_FORMAT))

    def write_state(self, name: str, state: EnsembleState) -> Path:
        return self.write_frame(name, state_to_frame(state))


def state_to_frame(state: EnsembleState) -> pd.DataFrame:
    """Columnar snapshot: point index, one column per axis, P, S."""
    grid = state.grid
    columns: Dict[str, Any] = {"point": np.arange(grid.n_points)}
    for name, values in zip(grid.axis_names, grid.mesh()):
        columns[name] = values.reshape(-1)
    columns["P"] = state.P.reshape(-1)
    columns["S"] = state.S.reshape(-1)
    return pd.DataFrame(columns)


def read_state(path: Union[str, Path], grid: ConfigurationGrid) -> EnsembleState:
    """Rebuild an EnsembleState written by write_state on the given grid."""
    frame = pd.read_csv(path).sort_values("point")
    if len(frame) != grid.n_points:
        raise ValueError(f"{path} has {len(frame)} points, grid expects {grid.n_points}")
    for name, axis, values in zip(grid.axis_names, grid.axes, grid.mesh()):
        if name not in frame.columns:
            raise ValueError(f"{path} is missing axis column {name!r}")
        if isinstance(axis, ContinuousAxis):
            if not np.allclose(frame[name].to_numpy(), values.reshape(-1), rtol=0, atol=1e-12):
                raise ValueError(f"{path}: coordinates of axis {name!r} do not match the grid")
    P = frame["P"].to_numpy(dtype=float).reshape(grid.shape)
    S = frame["S"].to_numpy(dtype=float).reshape(grid.shape)
    return EnsembleState(grid, P, S)


def load_json(path: Union[str, Path]) -> Optional[Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as f:
        return json.load(f)

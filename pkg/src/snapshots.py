"""
Trajectory directories on disk.

    <out>/run.meta              resolved config + meta.* facts
    <out>/diagnostics.csv       one FunctionalReport row per snapshot
    <out>/snapshots/t_00000.csv ensemble at each stored time

Snapshot files start with ``# key = value`` header lines, then the columns
x_1..x_d, v_1..v_d, w. Floats are written with 17 significant digits.
"""
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from .ensemble import ParticleEnsemble
from .errors import DomainError, SnapshotError
from .kernels import Domain

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
SNAPSHOT_DIR = "snapshots"
META_FILE = "run.meta"
DIAGNOSTICS_FILE = "diagnostics.csv"


def snapshot_path(root: str | Path, index: int) -> Path:
    return Path(root) / SNAPSHOT_DIR / f"t_{index:05d}.csv"


def _columns(d: int) -> list[str]:
    return [f"x_{i + 1}" for i in range(d)] + [f"v_{i + 1}" for i in range(d)] + ["w"]


def write_snapshot(path: str | Path, t: float, e: ParticleEnsemble, seed: int | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "t": repr(float(t)), "n": e.n, "d": e.dim, "domain": e.domain.kind, "side": repr(e.domain.side),
        "alpha": repr(e.alpha), "beta": repr(e.beta),
    }
    if seed is not None:
        header["seed"] = seed
    frame = pd.DataFrame(np.hstack([e.positions, e.velocities, e.weights[:, None]]), columns=_columns(e.dim))
    with path.open("w", newline="") as fh:
        for key, value in header.items():
            fh.write(f"# {key} = {value}\n")
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT)


def read_snapshot(path: str | Path) -> tuple[float, ParticleEnsemble]:
    path = Path(path)
    if not path.is_file():
        raise SnapshotError(f"missing snapshot {path}")
    header = {}
    try:
        with path.open() as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].partition("=")
                header[key.strip()] = value.strip()
        d = int(header["d"])
        frame = pd.read_csv(path, comment="#", dtype=float, float_precision="round_trip")
        if list(frame.columns) != _columns(d) or len(frame) != int(header["n"]):
            raise SnapshotError(f"unexpected columns or row count in {path}")
        data = frame.to_numpy()
        domain = Domain(header["domain"], float(header["side"]))
        e = ParticleEnsemble(data[:, :d], data[:, d:2 * d], data[:, -1],
                             float(header["alpha"]), float(header["beta"]), domain)
        return float(header["t"]), e
    except SnapshotError:
        raise
    except (KeyError, ValueError, DomainError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise SnapshotError(f"corrupt snapshot {path}: {exc}") from exc


def load_snapshots(root: str | Path) -> list[tuple[float, ParticleEnsemble]]:
    directory = Path(root) / SNAPSHOT_DIR
    files = sorted(directory.glob("t_*.csv"))
    if not files:
        raise SnapshotError(f"no snapshots under {directory}")
    snaps = [read_snapshot(f) for f in files]
    times = [t for t, _ in snaps]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise SnapshotError(f"snapshot times are not increasing under {directory}")
    logger.info("loaded %d snapshots from %s", len(snaps), directory)
    return snaps


class CsvStream:
    """Appends rows to a CSV file, writing the header with the first row."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.columns: list[str] | None = None
        self.rows = 0

    def write(self, row: dict):
        frame = pd.DataFrame([row])
        if self.columns is None:
            self.columns = list(frame.columns)
            frame.to_csv(self.path, index=False, float_format=FLOAT_FORMAT)
        else:
            frame[self.columns].to_csv(self.path, mode="a", header=False, index=False, float_format=FLOAT_FORMAT)
        self.rows += 1


def read_frame(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise SnapshotError(f"missing file {path}")
    return pd.read_csv(path, float_precision="round_trip")

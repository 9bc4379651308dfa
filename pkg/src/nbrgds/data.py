"""Count-matrix I/O, held-out masks and zero-inflated NB synthetic data."""
import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError
from .inference import MaskSpec
from .model import CountMatrix


# --------------------------------------------------------------------------
# CSV


def _data_lines(f):
    for line in f:
        if not line.lstrip().startswith("#"):
            yield line


def load_counts(path) -> CountMatrix:
    """Read a CSV with a header of time labels and a leading label column.

    Lines starting with ``#`` are comments (used for manifest hashes).
    """
    path = Path(path)
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(_data_lines(f)))
    except OSError as e:
        raise DataFormatError(f"{path}: {e.strerror}") from e
    rows = [r for r in rows if r]
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    time_labels = [h.strip() for h in header[1:]]
    T = len(time_labels)
    if T == 0 or not body:
        raise DataFormatError(f"{path}: need a header row and at least one data row")
    values = np.zeros((len(body), T), dtype=np.int64)
    dim_labels = []
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != T + 1:
            raise DataFormatError(f"{path}: row {line} has {len(row) - 1} cells, expected {T}")
        dim_labels.append(row[0].strip())
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            try:
                x = int(cell)
            except ValueError:
                raise DataFormatError(f"{path}: row {line}, column {j + 2}: "
                                      f"{cell!r} is not an integer") from None
            if x < 0:
                raise DataFormatError(f"{path}: row {line}, column {j + 2}: negative count {x}")
            values[i, j] = x
    return CountMatrix(values, dim_labels, time_labels)


def save_counts(path, counts: CountMatrix, manifest_hash=None):
    with open(path, "w", newline="") as f:
        if manifest_hash:
            f.write(f"# manifest: {manifest_hash}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["dim", *counts.time_labels])
        for label, row in zip(counts.dim_labels, counts.values):
            w.writerow([label, *row.tolist()])


# --------------------------------------------------------------------------
# masks


def make_mask(shape, mode="SMOOTHING", holdout_fraction=None, S=None, rng=None) -> MaskSpec:
    """SMOOTHING: ``round(fraction * V * T)`` uniformly chosen cells.
    FORECAST: the last ``S`` columns."""
    if isinstance(shape, CountMatrix):
        shape = shape.shape
    V, T = shape
    mode = mode.upper()
    if mode == "SMOOTHING":
        if holdout_fraction is None or not 0 < holdout_fraction < 1:
            raise ConfigError("holdout_fraction must lie in (0, 1)")
        n = int(round(holdout_fraction * V * T))
        held = np.zeros(V * T, dtype=bool)
        held[rng.choice(V * T, size=n, replace=False)] = True
        return MaskSpec(held.reshape(V, T))
    if mode == "FORECAST":
        if S is None or not 0 < S < T:
            raise ConfigError(f"forecast horizon S must satisfy 0 < S < T={T}")
        held = np.zeros((V, T), dtype=bool)
        held[:, T - S:] = True
        return MaskSpec(held, "FORECAST", S)
    raise ConfigError(f"unknown mask mode {mode!r}")


def parse_mask_arg(text, shape, rng):
    """``smoothing:0.2`` or ``forecast:2``."""
    try:
        mode, value = text.split(":")
        if mode.lower() == "smoothing":
            return make_mask(shape, "SMOOTHING", holdout_fraction=float(value), rng=rng)
        if mode.lower() == "forecast":
            return make_mask(shape, "FORECAST", S=int(value))
    except ValueError:
        pass
    raise ConfigError(f"bad mask spec {text!r}; use smoothing:FRACTION or forecast:S")


def save_mask(path, mask: MaskSpec):
    Path(path).write_text(json.dumps(mask.to_dict()))


def load_mask(path) -> MaskSpec:
    try:
        return MaskSpec.from_dict(json.loads(Path(path).read_text()))
    except (OSError, KeyError, json.JSONDecodeError) as e:
        raise DataFormatError(f"{path}: not a mask file ({e})") from e


# --------------------------------------------------------------------------
# ZINB synthetic data


@dataclass(frozen=True)
class ZinbConfig:
    """Zero-inflated NB cells; ``V`` is the number of rows per group."""

    p0: float
    r: float
    p: float
    V: int = 10
    T: int = 365
    n_groups: int = 1

    def __post_init__(self):
        if not 0 <= self.p0 <= 1:
            raise ConfigError("p0 must lie in [0, 1]")
        if not self.r > 0:
            raise ConfigError("r must be positive")
        if not 0 < self.p < 1:
            raise ConfigError("p must lie in (0, 1)")
        if self.V < 1 or self.T < 1 or self.n_groups < 1:
            raise ConfigError("V, T and n_groups must be positive")

    @property
    def mean(self):
        return self.r * (1 - self.p0) * (1 - self.p) / self.p

    @property
    def var(self):
        q = 1 - self.p
        return ((1 - self.p0) * self.r * q / self.p ** 2
                + self.p0 * (1 - self.p0) * (self.r * q / self.p) ** 2)

    @property
    def ve_ratio(self):
        return (1 + self.r * self.p0 * (1 - self.p)) / self.p

    def to_dict(self):
        return asdict(self)


# five overdispersion levels, V/E from 1.61 up to 6.5
ZINB_PRESETS = {i + 1: ZinbConfig(p0=0.9, r=5, p=p) for i, p in enumerate((0.9, 0.8, 0.7, 0.6, 0.5))}


def sample_zinb(cfg: ZinbConfig, size, rng):
    # numpy's negative_binomial(r, p) counts failures: mean r (1 - p) / p
    x = rng.negative_binomial(cfg.r, cfg.p, size=size)
    return np.where(rng.random(size) < cfg.p0, 0, x)


def generate_zinb(cfg: ZinbConfig, rng):
    """i.i.d. ZINB matrix of ``n_groups * V`` rows; returns (counts, group ids)."""
    rows = cfg.V * cfg.n_groups
    values = sample_zinb(cfg, (rows, cfg.T), rng)
    groups = np.repeat(np.arange(cfg.n_groups), cfg.V)
    labels = [f"g{g}_v{v}" for g in range(cfg.n_groups) for v in range(cfg.V)]
    return CountMatrix(values, labels), groups

"""On-disk formats for posterior traces and run manifests.

A trace is newline-delimited JSON: one header record (config, schedule,
mask, manifest hash) followed by one record per retained sample.
Per-iteration diagnostics go to a separate CSV.
"""
import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataFormatError
from .inference import MaskSpec, PosteriorTrace, Schedule
from .model import SCHEMA, LatentState, ModelConfig

TRACE_FORMAT = "nbrgds.trace/v1"


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Provenance of one command.  ``hash`` covers everything except the
    timestamps and output paths, so reruns with the same inputs agree."""

    command: str
    config: dict
    seed: int
    inputs: dict = field(default_factory=dict)   # path -> sha256
    outputs: list = field(default_factory=list)
    started: float = field(default_factory=time.time)
    finished: float = 0.0

    @property
    def hash(self):
        payload = {"command": self.command, "config": self.config, "seed": self.seed,
                   "inputs": sorted(self.inputs.values())}
        text = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def to_dict(self):
        return {"hash": self.hash, "command": self.command, "config": self.config,
                "seed": self.seed, "inputs": self.inputs, "outputs": self.outputs,
                "started": self.started, "finished": self.finished}

    def write(self, path):
        self.finished = time.time()
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, default=str))


def write_trace(path, trace: PosteriorTrace, manifest_hash=""):
    s = trace.schedule
    with open(path, "w") as f:
        header = {"type": "header", "format": TRACE_FORMAT, "state_schema": SCHEMA,
                  "manifest": manifest_hash, "config": trace.config.to_dict(),
                  "schedule": {"total": s.total, "burn_in": s.burn_in, "thin": s.thin},
                  "mask": trace.mask.to_dict()}
        f.write(json.dumps(header) + "\n")
        its = trace.iterations or range(len(trace.samples))
        if len(its) != len(trace.samples):
            raise ValueError("trace iterations and samples differ in length")
        for it, st in zip(its, trace.samples):
            rec = {"type": "sample", "manifest": manifest_hash, "iteration": it,
                   "state": st.to_dict()}
            f.write(json.dumps(rec) + "\n")


def read_trace(path) -> PosteriorTrace:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise DataFormatError(f"{path}: {e.strerror}") from e
    try:
        header = json.loads(lines[0])
        if header.get("format") != TRACE_FORMAT:
            raise DataFormatError(f"{path}: not a trace file")
        trace = PosteriorTrace(samples=[], schedule=Schedule(**header["schedule"]),
                               config=ModelConfig.from_dict(header["config"]),
                               mask=MaskSpec.from_dict(header["mask"]))
        for line in lines[1:]:
            rec = json.loads(line)
            trace.iterations.append(rec["iteration"])
            trace.samples.append(LatentState.from_dict(rec["state"]))
    except (IndexError, KeyError, json.JSONDecodeError) as e:
        raise DataFormatError(f"{path}: malformed trace ({e})") from e
    return trace


def write_diagnostics(path, trace: PosteriorTrace, manifest_hash=""):
    d = trace.diagnostics
    with open(path, "w", newline="") as f:
        if manifest_hash:
            f.write(f"# manifest: {manifest_hash}\n")
        w = csv.writer(f, lineterminator="\n")
        keys = ["iteration", "heldout_mae", "heldout_mre", "joint_loglik"]
        w.writerow(keys)
        for row in zip(*(d[k] for k in keys)):
            w.writerow(row)

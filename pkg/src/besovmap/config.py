"""Experiment configuration files and result persistence."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .forward import LINEAR, MODEL_TYPES, ForwardProblem, convolution_matrix
from .prior import BesovParams
from .solver import SolverConfig

PRIOR_KEYS = {"s", "d", "p", "N", "t"}
FORWARD_KEYS = {"type", "kernel", "matrix", "obs_dim", "grid_size"}
SOLVER_KEYS = set(SolverConfig.__dataclass_fields__)
LAB_KEYS = {"eps_grid", "n_samples"}
TOP_KEYS = {"prior", "forward", "noise_cov", "solver", "lab"}


class ConfigError(ValueError):
    pass


@dataclass
class LabConfig:
    eps_grid: list = field(default_factory=lambda: [0.5, 0.25, 0.125])
    n_samples: int = 100_000


@dataclass
class ExperimentConfig:
    prior: BesovParams
    forward: dict
    noise_cov: object
    solver: SolverConfig
    lab: LabConfig
    raw: dict = field(repr=False, default_factory=dict)

    def problem(self) -> ForwardProblem:
        fwd = self.forward
        if fwd.get("matrix") is not None:
            A = np.atleast_2d(np.asarray(fwd["matrix"], dtype=float))
        else:
            A = convolution_matrix(self.prior, fwd.get("kernel"), fwd.get("obs_dim"), fwd.get("grid_size"))
        return ForwardProblem(A, self.noise_cov, model=fwd["type"])

    def normalized(self) -> dict:
        return {
            "prior": {"s": self.prior.s, "d": self.prior.d, "p": self.prior.p, "N": self.prior.N, "t": self.prior.t},
            "forward": self.forward,
            "noise_cov": self.noise_cov,
            "solver": asdict(self.solver),
            "lab": asdict(self.lab),
        }

    @property
    def hash(self) -> str:
        payload = json.dumps(self.normalized(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _reject_unknown(section: str, obj: dict, allowed: set) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{section}: expected a JSON object")
    extra = sorted(set(obj) - allowed)
    if extra:
        raise ConfigError(f"{section}: unknown key(s) {extra}")


def parse_config(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    obj = dict(obj)
    # prior fields may also sit at the top level
    flat_prior = {k: obj.pop(k) for k in list(obj) if k in PRIOR_KEYS}
    if flat_prior and "prior" in obj:
        raise ConfigError("prior: give prior fields either at top level or under 'prior', not both")
    _reject_unknown("config", obj, TOP_KEYS)
    prior_obj = flat_prior or obj.get("prior")
    if prior_obj is None:
        raise ConfigError("prior: missing")
    _reject_unknown("prior", prior_obj, PRIOR_KEYS)
    for key in ("s", "N"):
        if key not in prior_obj:
            raise ConfigError(f"prior.{key}: missing")
    if prior_obj.get("p", 1) != 1:
        raise ConfigError(f"prior.p: p=1 only (got {prior_obj['p']})")
    s, d = prior_obj["s"], prior_obj.get("d", 1)
    t = prior_obj.get("t")
    if t is not None and isinstance(s, (int, float)) and isinstance(d, int) and not t < s - d:
        raise ConfigError(f"prior.t: must satisfy t < s - d (got t={t}, s - d={s - d})")
    try:
        prior = BesovParams(s=s, N=prior_obj["N"], d=d, t=t)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"prior: {exc}") from None

    fwd = dict(obj.get("forward") or {"type": LINEAR})
    _reject_unknown("forward", fwd, FORWARD_KEYS)
    fwd.setdefault("type", LINEAR)
    if fwd["type"] not in MODEL_TYPES:
        raise ConfigError(f"forward.type: must be one of {list(MODEL_TYPES)}, got {fwd['type']!r}")
    if fwd.get("matrix") is not None and fwd.get("kernel") is not None:
        raise ConfigError("forward: give either 'kernel' or 'matrix', not both")

    noise = obj.get("noise_cov", 1.0)
    if isinstance(noise, dict):
        _reject_unknown("noise_cov", noise, {"scale"})
        noise = noise.get("scale", 1.0)

    solver_obj = obj.get("solver") or {}
    _reject_unknown("solver", solver_obj, SOLVER_KEYS)
    try:
        solver = SolverConfig(**solver_obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from None

    lab_obj = obj.get("lab") or {}
    _reject_unknown("lab", lab_obj, LAB_KEYS)
    lab = LabConfig(**lab_obj)
    if any(not e > 0 for e in lab.eps_grid):
        raise ConfigError("lab.eps_grid: radii must be positive")
    if lab.n_samples < 1:
        raise ConfigError("lab.n_samples: must be positive")

    cfg = ExperimentConfig(prior, fwd, noise, solver, lab, raw=obj)
    try:
        problem = cfg.problem()
    except ValueError as exc:
        raise ConfigError(f"forward: {exc}") from None
    if problem.N != prior.N:
        raise ConfigError(f"forward.matrix: has {problem.N} columns, prior has N={prior.N}")
    return cfg


def load_config(path=None) -> ExperimentConfig:
    """Read and validate a JSON config; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("besovmap.data").joinpath("default_config.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(obj)


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the target directory and rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    atomic_write_text(path, buf.getvalue())


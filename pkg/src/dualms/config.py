"""Pipeline configuration: JSON file, validated against every stage's preconditions at load."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .domain import load_domain
from .exceptions import ConfigInvalid, DualMSError
from .field import TrainConfig
from .maxcut import INIT_STRATEGIES
from .mesh.implicit import TPMS_KINDS
from .mesh.io import MESH_FORMATS


def data_path(name):
    """Path of a file shipped in ``dualms/data``."""
    return Path(str(resources.files("dualms") / "data" / name))


@dataclass
class GraphSection:
    n_vertices: int = 500
    cvt_iterations: int = 20
    density_samples: int = 50_000
    penalty: float = 5.0
    edge_samples: int = 1

    def validate(self):
        _require(self.n_vertices >= 6, "graph.n_vertices must be >= 6")
        _require(self.cvt_iterations >= 0, "graph.cvt_iterations must be >= 0")
        _require(self.density_samples >= 1, "graph.density_samples must be >= 1")
        _require(self.penalty > 1, "graph.penalty must be > 1")
        _require(self.edge_samples in (1, 3), "graph.edge_samples must be 1 or 3")


@dataclass
class MaxCutSection:
    max_rounds: int = 100_000
    n_init: int = 1
    init: str = "auto"
    start_attempts: int = 8

    def validate(self):
        _require(self.max_rounds >= 1, "maxcut.max_rounds must be >= 1")
        _require(self.n_init >= 1, "maxcut.n_init must be >= 1")
        _require(self.init in ("auto",) + INIT_STRATEGIES,
                 f"maxcut.init must be one of {('auto',) + INIT_STRATEGIES}")
        _require(self.start_attempts >= 1, "maxcut.start_attempts must be >= 1")


@dataclass
class SkeletonSection:
    density: float = 8.0

    def validate(self):
        _require(self.density > 0, "skeleton.density must be > 0")


@dataclass
class ExtractSection:
    resolution: int = 64
    thickness: float | None = None
    volume_fraction: float | None = None
    format: str = "obj"

    def validate(self):
        _require(self.resolution >= 2, "extract.resolution must be >= 2")
        _require(self.thickness is None or self.volume_fraction is None,
                 "set at most one of extract.thickness and extract.volume_fraction")
        _require(self.thickness is None or self.thickness > 0, "extract.thickness must be > 0")
        _require(self.volume_fraction is None or 0 < self.volume_fraction < 1,
                 "extract.volume_fraction must be in (0, 1)")
        _require(self.format in MESH_FORMATS, f"extract.format must be one of {MESH_FORMATS}")

    @property
    def thickened(self):
        return self.thickness is not None or self.volume_fraction is not None


@dataclass
class TpmsSection:
    kind: str = "schwarz_p"
    periods: float = 1
    resolution: int = 64

    def validate(self):
        _require(self.kind in TPMS_KINDS, f"tpms.kind must be one of {TPMS_KINDS}")
        _require(np.all(np.asarray(self.periods) >= 1), "tpms.periods must be >= 1")
        _require(self.resolution >= 2, "tpms.resolution must be >= 2")


@dataclass
class BaselineSection:
    smooth_iterations: int = 20
    smooth_step: float = 0.5

    def validate(self):
        _require(self.smooth_iterations >= 0, "baseline.smooth_iterations must be >= 0")
        _require(0 < self.smooth_step <= 1, "baseline.smooth_step must be in (0, 1]")


SECTIONS = {"graph": GraphSection, "maxcut": MaxCutSection, "skeleton": SkeletonSection,
            "extract": ExtractSection, "tpms": TpmsSection, "baseline": BaselineSection}


def _require(ok, message):
    if not ok:
        raise ConfigInvalid(message)


@dataclass
class PipelineConfig:
    domain: str
    seed: int = 0
    output_dir: str = "dualms_out"
    graph: GraphSection = field(default_factory=GraphSection)
    maxcut: MaxCutSection = field(default_factory=MaxCutSection)
    skeleton: SkeletonSection = field(default_factory=SkeletonSection)
    train: dict = field(default_factory=dict)
    extract: ExtractSection = field(default_factory=ExtractSection)
    tpms: TpmsSection = field(default_factory=TpmsSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)
    base_dir: str = field(default=".", repr=False, compare=False)

    @property
    def domain_path(self):
        return Path(self.base_dir) / self.domain

    def load_domain(self):
        return load_domain(self.domain_path)

    def train_config(self):
        return TrainConfig(**self.train, seed=self.seed)

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "base_dir"}
        for name in SECTIONS:
            d[name] = asdict(d[name])
        d["train"] = dict(self.train)
        return d

    def hash(self):
        """sha256 of the canonical config plus the domain definition; output_dir excluded."""
        d = self.to_dict()
        d.pop("output_dir")
        d["domain"] = self.load_domain().to_dict()
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def validate(self):
        _require(isinstance(self.seed, int) and self.seed >= 0, "seed must be a non-negative integer")
        for name in SECTIONS:
            try:
                getattr(self, name).validate()
            except TypeError as exc:
                raise ConfigInvalid(f"{name}: wrong value type ({exc})") from exc
        _require("seed" not in self.train, "train.seed is not allowed; use the top-level seed")
        try:
            self.train_config()
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"train: {exc}") from exc
        try:
            domain = self.load_domain()
        except DualMSError as exc:
            raise ConfigInvalid(f"domain: {exc}") from exc
        lo, hi = domain.bbox
        h = float(np.max((hi - lo) / (self.extract.resolution - 1)))
        if self.extract.thickness is not None:
            _require(self.extract.thickness >= 2 * h,
                     f"extract.thickness must be at least two grid spacings ({2 * h:.6g})")
        return self


def config_from_dict(spec, base_dir="."):
    if not isinstance(spec, dict):
        raise ConfigInvalid("config must be a JSON object")
    known = {f.name for f in fields(PipelineConfig)} - {"base_dir"}
    unknown = set(spec) - known
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")
    _require("domain" in spec, "config needs a 'domain' path")
    kwargs = {"domain": spec["domain"], "base_dir": str(base_dir)}
    for key in ("seed", "output_dir"):
        if key in spec:
            kwargs[key] = spec[key]
    for name, cls in SECTIONS.items():
        section = spec.get(name, {})
        _require(isinstance(section, dict), f"{name} must be an object")
        try:
            kwargs[name] = cls(**section)
        except TypeError as exc:
            raise ConfigInvalid(f"{name}: {exc}") from exc
    train = spec.get("train", {})
    _require(isinstance(train, dict), "train must be an object")
    kwargs["train"] = dict(train)
    return PipelineConfig(**kwargs).validate()


def load_config(path, seed=None):
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    if seed is not None:
        spec = {**spec, "seed": int(seed)}
    return config_from_dict(spec, base_dir=path.parent)

"""Run configuration: INI-style ``key = value`` files with sections.

A single ``[run] seed`` feeds every component seed, so one number pins a run.
"""

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .data import NoiseSpec
from .network import NetworkConfig
from .texture import AsmExperimentConfig, GlcmConfig
from .train import TrainConfig

DEFAULT_SEED = 20180101


@dataclass
class Paths:
    train_manifest: str = ""
    eval_manifest: str = ""
    checkpoint: str = ""
    out: str = "runs"


@dataclass
class RunConfig:
    seed: int = DEFAULT_SEED
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    glcm: GlcmConfig = field(default_factory=GlcmConfig)
    asm: AsmExperimentConfig = field(default_factory=AsmExperimentConfig)
    paths: Paths = field(default_factory=Paths)

    def __post_init__(self):
        self.reseed(self.seed)

    def reseed(self, seed):
        self.seed = int(seed)
        self.network = dataclasses.replace(self.network, seed=self.seed)
        self.train = dataclasses.replace(self.train, seed=self.seed)
        self.noise = dataclasses.replace(self.noise, seed=self.seed)
        self.asm = dataclasses.replace(self.asm, seed=self.seed, glcm=self.glcm)
        return self


SECTIONS = ("network", "train", "noise", "glcm", "asm", "paths")
_SKIP = {"seed", "glcm"}


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(current, text):
    """Parse ``text`` into the type of the field's current value."""
    if isinstance(current, bool):
        low = text.strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {text!r}")
        return low in ("true", "1", "yes")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        return tuple(int(x) for x in text.split(","))
    return text.strip()


def _update(obj, values, section):
    names = {f.name for f in dataclasses.fields(obj)} - _SKIP
    changes = {}
    for key, text in values.items():
        if key not in names:
            raise ValueError(f"unknown key {key!r} in section [{section}]")
        changes[key] = _coerce(getattr(obj, key), text)
    return dataclasses.replace(obj, **changes)


def parse(text):
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(text)
    cfg = RunConfig()
    for section in cp.sections():
        if section == "run":
            for key in cp[section]:
                if key != "seed":
                    raise ValueError(f"unknown key {key!r} in section [run]")
            continue
        if section not in SECTIONS:
            raise ValueError(f"unknown section [{section}]")
        setattr(cfg, section, _update(getattr(cfg, section), dict(cp[section]), section))
    seed = cp.getint("run", "seed", fallback=DEFAULT_SEED)
    return cfg.reseed(seed)


def load(path):
    return parse(Path(path).read_text())


def dumps(cfg):
    lines = ["[run]", f"seed = {cfg.seed}", ""]
    for section in SECTIONS:
        obj = getattr(cfg, section)
        lines.append(f"[{section}]")
        for f in dataclasses.fields(obj):
            if f.name not in _SKIP:
                lines.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def override(cfg, section, **values):
    """Apply non-None keyword overrides (e.g. from CLI flags) to one section."""
    values = {k: v for k, v in values.items() if v is not None}
    if values:
        setattr(cfg, section, dataclasses.replace(getattr(cfg, section), **values))
        cfg.reseed(cfg.seed)
    return cfg

"""Pipeline configuration: nested dataclasses and a dotted ``key = value`` text format.

Example file::

    # synthetic desk-scale run
    dataset_root = data/synth
    dict_size = 128
    sample_n = 20000
    sae1.beta = 3
    sift.patch_sizes = 12, 16, 24
    fine_tune.enabled = true

Blank lines and ``#`` comments are ignored. Later assignments win; CLI
``--set key=value`` overrides are applied after the file.
"""

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..classify import SvmConfig
from ..deepnet import FineTuneConfig
from ..dataset import SplitSpec
from ..errors import ConfigurationError
from ..pooling import SpmConfig
from ..rng import derive_seed
from ..sae import SaeConfig

STAGES = ("split", "sample", "sae1", "sae2", "finetune", "svm")


@dataclass
class SplitParams:
    train_per_class: int = 15
    test_per_class: int = 5


@dataclass
class SiftParams:
    step: int = 4
    patch_sizes: tuple = (12, 16, 24)


@dataclass
class SaeParams:
    rho: float = 0.05
    beta: float = 3.0
    learning_rate: float = 0.3
    epochs: int = 50
    batch_size: int = 256
    init_scale: str = "glorot"


@dataclass
class FineTuneParams:
    enabled: bool = True
    lr: float = 1.0
    epochs: int = 20
    batch_size: int = 256


@dataclass
class SpmParams:
    levels: tuple = (1, 2, 4)
    normalize: bool = True


@dataclass
class SvmParams:
    c_reg: float = 1.0
    epochs: int = 50
    lr0: float = 0.1
    standardize: bool = True


@dataclass
class PipelineConfig:
    """Every knob of a run; stage seeds are derived from ``seed``."""

    dataset_root: str = ""
    out_dir: str = "out"
    seed: int = 1
    side: int = 90
    dict_size: int = 1024
    sample_n: int = 200000
    split: SplitParams = field(default_factory=SplitParams)
    sift: SiftParams = field(default_factory=SiftParams)
    sae1: SaeParams = field(default_factory=SaeParams)
    # Layer 2 sees low-contrast sigmoid codes and needs a larger step.
    sae2: SaeParams = field(default_factory=lambda: SaeParams(learning_rate=0.5))
    fine_tune: FineTuneParams = field(default_factory=FineTuneParams)
    spm: SpmParams = field(default_factory=SpmParams)
    svm: SvmParams = field(default_factory=SvmParams)

    def stage_seed(self, stage):
        return derive_seed(self.seed, stage)

    def split_spec(self):
        return SplitSpec(self.split.train_per_class, self.split.test_per_class,
                         self.stage_seed("split"))

    def sae_config(self, which):
        p = getattr(self, which)
        init = p.init_scale if p.init_scale == "glorot" else float(p.init_scale)
        return SaeConfig(hidden=self.dict_size, rho=p.rho, beta=p.beta,
                         learning_rate=p.learning_rate, epochs=p.epochs,
                         batch_size=p.batch_size, seed=self.stage_seed(which), init_scale=init)

    def fine_tune_config(self):
        p = self.fine_tune
        return FineTuneConfig(lr=p.lr, epochs=p.epochs, batch_size=p.batch_size,
                              seed=self.stage_seed("finetune"))

    def spm_config(self):
        return SpmConfig(self.spm.levels, self.spm.normalize)

    def svm_config(self):
        p = self.svm
        return SvmConfig(c_reg=p.c_reg, epochs=p.epochs, lr0=p.lr0,
                         seed=self.stage_seed("svm"), standardize=p.standardize)

    def validate(self):
        """Build every nested stage config so invariant violations surface early."""
        try:
            self.split_spec()
            self.sae_config("sae1")
            self.sae_config("sae2")
            self.fine_tune_config()
            self.spm_config()
            self.svm_config()
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        if self.side < 2 or self.sample_n < 1 or self.dict_size < 1 or self.sift.step < 1:
            raise ConfigurationError("side, sample_n, dict_size and sift.step must be positive")
        if any(s > self.side for s in self.sift.patch_sizes):
            raise ConfigurationError("a sift patch size exceeds the image side")
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def copy(self):
        return copy.deepcopy(self)


# --------------------------------------------------------------------------
# Flattening and parsing


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


def _parse(text, template, key):
    text = text.strip()
    try:
        if isinstance(template, bool):
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if isinstance(template, int):
            return int(text)
        if isinstance(template, float):
            return float(text)
        if isinstance(template, tuple):
            return tuple(int(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigurationError(f"cannot parse {key} = {text!r}") from None
    return text


def to_flat(cfg, prefix=""):
    flat = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            flat.update(to_flat(value, f"{prefix}{f.name}."))
        else:
            flat[f"{prefix}{f.name}"] = value
    return flat


def apply_overrides(cfg, pairs):
    """Set dotted keys on a copy of ``cfg``; ``pairs`` is an iterable of (key, text)."""
    cfg = cfg.copy() if isinstance(cfg, PipelineConfig) else cfg
    for key, text in pairs:
        node = cfg
        parts = key.strip().split(".")
        for part in parts[:-1]:
            if not hasattr(node, part) or not dataclasses.is_dataclass(getattr(node, part)):
                raise ConfigurationError(f"unknown config key {key!r}")
            node = getattr(node, part)
        leaf = parts[-1]
        if not hasattr(node, leaf) or dataclasses.is_dataclass(getattr(node, leaf)):
            raise ConfigurationError(f"unknown config key {key!r}")
        setattr(node, leaf, _parse(text, getattr(node, leaf), key))
    return cfg


def from_flat(flat):
    return apply_overrides(PipelineConfig(), [(k, _format(v)) for k, v in flat.items()])


def parse_lines(lines, source="<config>"):
    pairs = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_config(path=None, overrides=()):
    cfg = PipelineConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigurationError(f"config file not found: {p}")
        cfg = apply_overrides(cfg, parse_lines(p.read_text().splitlines(), str(p)))
    return apply_overrides(cfg, overrides)


def dump_config(cfg, include_seeds=False, exclude=()):
    """Resolved config as ``key = value`` lines, sorted by key."""
    flat = {k: v for k, v in to_flat(cfg).items() if k not in exclude}
    if include_seeds:
        for stage in STAGES:
            flat[f"derived_seed.{stage}"] = cfg.stage_seed(stage)
    return "".join(f"{k} = {_format(flat[k])}\n" for k in sorted(flat))


def synthetic_preset(dataset_root, **overrides):
    """Desk-scale defaults used by the synthetic benchmark (K = 128, 20k patches)."""
    cfg = PipelineConfig(dataset_root=str(dataset_root), dict_size=128, sample_n=20000)
    return cfg.replace(**overrides) if overrides else cfg

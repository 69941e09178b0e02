"""Sectioned run configuration with strict keys and a stable hash.

File format (INI)::

    [run]        seed
    [plant]      PlantConfig fields
    [trainer]    TrainerConfig fields (its seed comes from [run])
    [excitation] ExcitationConfig fields (seed from [run])
    [lstm]       LstmConfig fields (seed from [run])
    [baseline]   PI grid: kp, ki, kd as comma lists, i_clamp
    [harness]    reference kinds/params, episode length, PI tuning reference

Tuples are comma-separated numbers; dict values are JSON objects.
"""
from __future__ import annotations

import configparser
import copy
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field, fields, replace

from .baseline import PidGrid
from .harness import TRAIN_SINE, make_reference
from .lstmctrl import ExcitationConfig, LstmConfig
from .plant import PlantConfig
from .rl.common import TrainerConfig


class ConfigError(ValueError):
    pass


@dataclass
class HarnessConfig:
    N: int = 400
    train_kind: str = "sine"
    train_params: dict = field(default_factory=lambda: dict(TRAIN_SINE))
    test_kind: str = "steps"
    test_params: dict = field(default_factory=dict)
    pid_tune_on: str = "test"     # reference the PI grid search is scored on
    run_baselines: bool = True    # also train the three-layer RL baselines in compare

    def validate(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.pid_tune_on not in ("test", "train"):
            raise ValueError("pid_tune_on must be 'test' or 'train'")
        return self

    def train_reference(self, theta_max=90.0):
        return make_reference(self.train_kind, self.train_params, self.N, theta_max)

    def test_reference(self, theta_max=90.0):
        return make_reference(self.test_kind, self.test_params, self.N, theta_max)


@dataclass
class RunSection:
    seed: int = 0


# section name -> (dataclass, keys fixed by other sections)
SECTIONS = {
    "run": (RunSection, ()),
    "plant": (PlantConfig, ()),
    "trainer": (TrainerConfig, ("seed",)),
    "excitation": (ExcitationConfig, ("seed",)),
    "lstm": (LstmConfig, ("seed",)),
    "baseline": (PidGrid, ()),
    "harness": (HarnessConfig, ()),
}


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    plant: PlantConfig = field(default_factory=PlantConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)
    lstm: LstmConfig = field(default_factory=LstmConfig)
    baseline: PidGrid = field(default_factory=PidGrid)
    harness: HarnessConfig = field(default_factory=HarnessConfig)

    def __post_init__(self):
        self.apply_seed(self.run.seed)

    @property
    def seed(self):
        return self.run.seed

    def apply_seed(self, seed: int):
        """Propagate the run seed to every seeded section."""
        self.run = replace(self.run, seed=int(seed))
        self.trainer = replace(self.trainer, seed=int(seed))
        self.excitation = replace(self.excitation, seed=int(seed))
        self.lstm = replace(self.lstm, seed=int(seed))
        return self

    def with_seed(self, seed: int) -> "RunConfig":
        return copy.deepcopy(self).apply_seed(seed)

    def validate(self):
        self.plant.validate()
        self.trainer.validate()
        self.lstm.validate()
        self.harness.validate()
        if not self.baseline.points():
            raise ValueError("PI grid is empty")
        return self

    def to_text(self) -> str:
        """Fully resolved config, keys in schema order (reloadable)."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for name, (cls, fixed) in SECTIONS.items():
            obj = getattr(self, name)
            cp[name] = {f.name: _format(getattr(obj, f.name))
                        for f in fields(cls) if f.name not in fixed}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def to_dict(self):
        return {name: asdict(getattr(self, name)) for name in SECTIONS}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True)
    return str(v)


def _parse(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if isinstance(default, dict):
            val = json.loads(raw)
            if not isinstance(val, dict):
                raise ValueError("expected a JSON object")
            return val
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {where}: {raw!r} ({exc})") from None


def parse_config(text: str) -> RunConfig:
    """Build a RunConfig from INI text; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    unknown = [s for s in cp.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    parts = {}
    for name, (cls, fixed) in SECTIONS.items():
        default = cls()
        allowed = {f.name for f in fields(cls)} - set(fixed)
        kw = {}
        if cp.has_section(name):
            for key, raw in cp[name].items():
                if key not in allowed:
                    raise ConfigError(f"unknown key {key!r} in section [{name}]")
                kw[key] = _parse(raw, getattr(default, key), f"[{name}] {key}")
        try:
            parts[name] = cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid [{name}] section: {exc}") from None
    try:
        return RunConfig(**parts).validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def default_config() -> RunConfig:
    return RunConfig().validate()

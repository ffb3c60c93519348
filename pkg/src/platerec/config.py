"""Line-oriented ``key = value`` training configuration."""

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigInvalid


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    seed: int = 0
    split_seed: int = 0
    # either a directory of labelled images / manifest, or synthetic data
    data: str = ""
    synth_n: int = 0
    synth_seed: int = 0
    alphabet: str = "full"
    synth_alphabet: str = "digits"
    maxlen: int = 8
    minlen: int = 8
    out: str = "model.crnn"
    log: str = ""
    # stop once validation sequence accuracy reaches this value (0 disables)
    stop_at_val_accuracy: float = 0.0


def _coerce(kind, key, raw):
    try:
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigInvalid(f"{key}: cannot parse {raw!r}") from exc
    return raw


def parse_config(text):
    known = {f.name: f.type for f in fields(TrainConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigInvalid(f"line {lineno}: expected 'key = value'")
        if key not in known:
            raise ConfigInvalid(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(known[key], key, raw)
    cfg = TrainConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg):
    if cfg.epochs < 0:
        raise ConfigInvalid("epochs must be >= 0")
    if cfg.batch_size < 1:
        raise ConfigInvalid("batch_size must be >= 1")
    if cfg.lr <= 0:
        raise ConfigInvalid("lr must be positive")
    if not cfg.data and cfg.synth_n <= 0:
        raise ConfigInvalid("set either 'data' or a positive 'synth_n'")
    if not 1 <= cfg.minlen <= cfg.maxlen <= 8:
        raise ConfigInvalid("need 1 <= minlen <= maxlen <= 8")
    if cfg.alphabet not in ("full", "digits") or cfg.synth_alphabet not in ("full", "digits"):
        raise ConfigInvalid("alphabets must be 'full' or 'digits'")
    return cfg


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(text)
    base = Path(path).parent
    if cfg.data and not Path(cfg.data).is_absolute():
        cfg.data = str(base / cfg.data)
    if not Path(cfg.out).is_absolute():
        cfg.out = str(base / cfg.out)
    if cfg.log and not Path(cfg.log).is_absolute():
        cfg.log = str(base / cfg.log)
    return cfg

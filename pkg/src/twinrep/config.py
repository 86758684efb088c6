"""Run configuration: a flat ``key = value`` file plus command-line overrides."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .encoder import EncoderConfig
from .model import FeatureMode, Pooling, Task
from .vocab import PHRASE_MAX_LEN, SENTENCE_MAX_LEN


class ConfigError(ValueError):
    """Bad configuration value; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _paths(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _tasks(text: str) -> tuple[Task, ...]:
    return tuple(Task(t.strip().lower()) for t in text.split(",") if t.strip())


@dataclass
class RunConfig:
    # data
    nli_train: list[str] = field(default_factory=list)
    nli_valid: str = ""
    ppdb_train: list[str] = field(default_factory=list)
    vocab: str = ""
    out_dir: str = "run"
    # objectives and ablation axes
    tasks: tuple[Task, ...] = (Task.NLI, Task.PI, Task.PTC)
    pooling: Pooling = Pooling.MEAN
    features: FeatureMode = field(default_factory=lambda: FeatureMode(("u", "v", "|u-v|")))
    k: int = 3
    n_per_label: int = 0  # 0: largest size every label can supply
    resample_negatives: bool = True
    # optimisation
    batch_size: int = 16
    total_steps: int = 2000
    lr: float = 1e-4
    warmup_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    checkpoint_every: int = 0
    seed: int = 0
    data_seed: int = 0
    # encoder
    num_layers: int = 2
    num_heads: int = 4
    hidden_dim: int = 64
    ffn_dim: int = 256
    dropout: float = 0.1
    share_layers: bool = False
    head_bias: bool = True
    sentence_max_len: int = SENTENCE_MAX_LEN
    phrase_max_len: int = PHRASE_MAX_LEN

    def validate(self, check_paths: bool = True) -> "RunConfig":
        if not self.tasks:
            raise ConfigError("tasks", "at least one task is required")
        if len(set(self.tasks)) != len(self.tasks):
            raise ConfigError("tasks", "duplicate task")
        for name in ("k", "batch_size", "total_steps", "num_layers", "num_heads", "hidden_dim", "ffn_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.n_per_label < 0:
            raise ConfigError("n_per_label", "must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr", "must be positive")
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction", "must be in (0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout", "must be in [0, 1)")
        if self.hidden_dim % self.num_heads:
            raise ConfigError("num_heads", f"must divide hidden_dim {self.hidden_dim}")
        for name in ("sentence_max_len", "phrase_max_len"):
            if getattr(self, name) < 3:
                raise ConfigError(name, "must be >= 3")
        if Task.NLI in self.tasks and not self.nli_train:
            raise ConfigError("nli_train", "required when the nli task is enabled")
        if {Task.PI, Task.PTC} & set(self.tasks) and not self.ppdb_train:
            raise ConfigError("ppdb_train", "required when pi or ptc is enabled")
        if check_paths:
            for name in ("nli_train", "ppdb_train"):
                for p in getattr(self, name):
                    if not Path(p).is_file():
                        raise ConfigError(name, f"no such file: {p}")
            for name in ("nli_valid", "vocab"):
                p = getattr(self, name)
                if p and not Path(p).is_file():
                    raise ConfigError(name, f"no such file: {p}")
        return self

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(
            vocab_size=vocab_size,
            max_len=max(self.sentence_max_len, self.phrase_max_len),
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            hidden_dim=self.hidden_dim,
            ffn_dim=self.ffn_dim,
            dropout_rate=self.dropout,
            share_layers=self.share_layers,
        )

    def set(self, key: str, value: str) -> None:
        """Parse ``value`` according to the type of ``key`` and assign it."""
        key = key.strip().replace("-", "_")
        kinds = {f.name: f for f in fields(self)}
        if key not in kinds:
            raise ConfigError(key, "unknown configuration key")
        current = getattr(self, key)
        try:
            if key in ("nli_train", "ppdb_train"):
                parsed = _paths(value)
            elif key == "tasks":
                parsed = _tasks(value)
            elif key == "pooling":
                parsed = Pooling(value.strip().lower())
            elif key == "features":
                parsed = FeatureMode.parse(value)
            elif isinstance(current, bool):
                parsed = _bool(value)
            elif isinstance(current, int):
                parsed = int(value)
            elif isinstance(current, float):
                parsed = float(value)
            else:
                parsed = value.strip()
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
        setattr(self, key, parsed)

    def items(self) -> list[tuple[str, str]]:
        """Every key with its value in config-file syntax."""
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                text = ",".join(value)
            elif f.name == "tasks":
                text = ",".join(t.value for t in value)
            elif isinstance(value, Pooling):
                text = value.value
            elif isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = str(value)
            out.append((f.name, text))
        return out

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    @classmethod
    def from_text(cls, text: str, base_dir: str | Path | None = None) -> "RunConfig":
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
            cfg.set(key, value)
        if base_dir is not None:
            cfg._resolve(Path(base_dir))
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        return cls.from_text(path.read_text(encoding="utf-8"), base_dir=path.parent)

    def _resolve(self, base: Path) -> None:
        def fix(p: str) -> str:
            return p if not p or Path(p).is_absolute() else str(base / p)

        self.nli_train = [fix(p) for p in self.nli_train]
        self.ppdb_train = [fix(p) for p in self.ppdb_train]
        self.nli_valid = fix(self.nli_valid)
        self.vocab = fix(self.vocab)

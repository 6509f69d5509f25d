"""Run configuration: a flat key=value file that round-trips exactly."""

import dataclasses
from dataclasses import dataclass


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    embedding_dim: int = 300
    token_size: int = 3000
    gru_hidden: int = 128
    glimpses: int = 2
    attn_width: int = 256
    fused_width: int = 1024
    dropout_rate: float = 0.0
    label_smoothing: float = 0.0
    max_count: int = 10
    count_tau: float = 0.5
    count_kappa: float = 20.0
    seed: int = 0
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3

    def validate(self):
        positive_ints = (
            "embedding_dim",
            "token_size",
            "gru_hidden",
            "attn_width",
            "fused_width",
            "max_count",
            "epochs",
            "batch_size",
        )
        for name in positive_ints:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.glimpses != 2:
            raise ConfigError(f"glimpses is fixed at 2, got {self.glimpses}")
        if self.token_size < 3:
            raise ConfigError(f"token_size must be at least 3, got {self.token_size}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(f"label_smoothing must be in [0, 1), got {self.label_smoothing}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.count_kappa <= 0:
            raise ConfigError(f"count_kappa must be positive, got {self.count_kappa}")
        if not 0.0 < self.count_tau < 1.0:
            raise ConfigError(f"count_tau must be in (0, 1), got {self.count_tau}")
        return self

    def replace(self, **overrides):
        return dataclasses.replace(self, **overrides).validate()

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            text = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{f.name}={text}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text, source="<config>"):
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{source} line {lineno}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in types:
                raise ConfigError(f"{source} line {lineno}: unknown key {key!r}")
            caster = int if types[key] in (int, "int") else float
            try:
                values[key] = caster(value.strip())
            except ValueError:
                raise ConfigError(
                    f"{source} line {lineno}: cannot parse {value.strip()!r} as {caster.__name__}"
                ) from None
        return cls(**values).validate()

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), source=str(path))

"""Pipeline configuration, named presets, and the key/value config file."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .aggregation import AGG_MODES, AggregationConfig
from .embedding import EMBED_KINDS, embedding_dim
from .errors import ConfigError
from .masking import MASK_KINDS

# Final-dimensionality presets: temb with 128 dropped directions, keyed by
# the resulting output dimension d * |C| - 128.
PRESETS: dict[str, tuple[int, int]] = {
    "D512": (32, 20),
    "D1024": (64, 18),
    "D2048": (64, 34),
    "D4096": (64, 66),
    "D8064": (128, 64),
}

DEFAULT_DROP = 128
CLI_BITS = (64, 128, 256, 512)


@dataclass(frozen=True)
class PipelineConfig:
    mask: str = "max"
    layers: tuple[str, ...] = ("conv5_3",)
    embed: str = "temb"
    dim: int = 32
    codebook_size: int = 20
    drop: int = DEFAULT_DROP
    agg: AggregationConfig = field(default_factory=AggregationConfig)
    alpha: float = 0.5
    rn_whiten: bool = True
    rn_dim: int | None = None
    hash_enabled: bool = False
    bits: int = 512
    seed: int = 0
    train_descriptor_cap: int = 200_000
    projection_sample_cap: int = 50_000

    def validate(self) -> "PipelineConfig":
        if self.mask not in MASK_KINDS:
            raise ConfigError(f"unknown mask kind {self.mask!r}")
        if self.embed not in EMBED_KINDS:
            raise ConfigError(f"unknown embedding kind {self.embed!r}")
        if not self.layers:
            raise ConfigError("at least one layer suffix is required")
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.codebook_size < 1:
            raise ConfigError(f"codebook size must be >= 1, got {self.codebook_size}")
        if self.drop < 0:
            raise ConfigError(f"drop count must be >= 0, got {self.drop}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.bits < 1:
            raise ConfigError(f"bits must be >= 1, got {self.bits}")
        if self.rn_dim is not None and self.rn_dim < 1:
            raise ConfigError(f"rn dim must be >= 1, got {self.rn_dim}")
        drop = self.drop if self.embed == "temb" else 0
        out = embedding_dim(self.embed, self.dim, self.codebook_size, drop)
        rn_out = self.rn_dim if self.rn_dim is not None else out
        if rn_out > out:
            raise ConfigError(f"rn dim {rn_out} exceeds embedding dim {out}")
        if self.hash_enabled and self.bits > rn_out:
            raise ConfigError(f"bits {self.bits} exceed final dimension {rn_out}")
        if self.train_descriptor_cap < 1 or self.projection_sample_cap < 1:
            raise ConfigError("sample caps must be >= 1")
        return self

    @property
    def embedded_dim(self) -> int:
        drop = self.drop if self.embed == "temb" else 0
        return embedding_dim(self.embed, self.dim, self.codebook_size, drop)

    @property
    def final_dim(self) -> int:
        return self.rn_dim if self.rn_dim is not None else self.embedded_dim


def apply_preset(cfg: PipelineConfig, preset: str) -> PipelineConfig:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    d, codebook_size = PRESETS[preset]
    return replace(cfg, embed="temb", dim=d, codebook_size=codebook_size, drop=DEFAULT_DROP)


def _parse_bool(value: str, key: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"config key {key!r}: expected a boolean, got {value!r}")


def read_config_file(path: Path | str) -> dict[str, str]:
    """Parse a UTF-8 `key = value` file, ignoring blanks and # comments."""
    entries: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def config_from_entries(entries: dict[str, str], base: PipelineConfig | None = None) -> PipelineConfig:
    """Build a config from string key/value pairs, starting from base."""
    cfg = base or PipelineConfig()
    if "preset" in entries:
        cfg = apply_preset(cfg, entries["preset"])
    updates: dict[str, object] = {}
    agg_updates: dict[str, object] = {}
    try:
        for key, value in entries.items():
            if key == "preset":
                continue
            elif key == "mask":
                updates["mask"] = value
            elif key == "layers":
                updates["layers"] = tuple(s.strip() for s in value.split(",") if s.strip())
            elif key == "embed":
                updates["embed"] = value
            elif key in ("dim", "d"):
                updates["dim"] = int(value)
            elif key == "codebook_size":
                updates["codebook_size"] = int(value)
            elif key == "drop":
                updates["drop"] = int(value)
            elif key == "alpha":
                updates["alpha"] = float(value)
            elif key == "whiten":
                updates["rn_whiten"] = _parse_bool(value, key)
            elif key == "rn_dim":
                updates["rn_dim"] = int(value)
            elif key == "hash":
                updates["hash_enabled"] = _parse_bool(value, key)
            elif key == "bits":
                updates["bits"] = int(value)
            elif key == "seed":
                updates["seed"] = int(value)
            elif key == "agg":
                agg_updates["mode"] = value
            elif key == "sinkhorn_iterations":
                agg_updates["sinkhorn_iterations"] = int(value)
            elif key == "sinkhorn_exponent":
                agg_updates["sinkhorn_exponent"] = float(value)
            elif key == "clamp_gram":
                agg_updates["clamp_negative_gram"] = _parse_bool(value, key)
            elif key == "train_descriptor_cap":
                updates["train_descriptor_cap"] = int(value)
            elif key == "projection_sample_cap":
                updates["projection_sample_cap"] = int(value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    if agg_updates:
        updates["agg"] = replace(cfg.agg, **agg_updates)
    if updates:
        cfg = replace(cfg, **updates)
    return cfg


def config_to_entries(cfg: PipelineConfig) -> dict[str, object]:
    """Flatten a config into manifest-friendly key/value pairs."""
    return {
        "mask": cfg.mask,
        "layers": ",".join(cfg.layers),
        "embed": cfg.embed,
        "dim": cfg.dim,
        "codebook_size": cfg.codebook_size,
        "drop": cfg.drop,
        "agg": cfg.agg.mode,
        "sinkhorn_iterations": cfg.agg.sinkhorn_iterations,
        "sinkhorn_exponent": cfg.agg.sinkhorn_exponent,
        "clamp_gram": cfg.agg.clamp_negative_gram,
        "alpha": cfg.alpha,
        "whiten": cfg.rn_whiten,
        "rn_dim": cfg.rn_dim if cfg.rn_dim is not None else "",
        "hash": cfg.hash_enabled,
        "bits": cfg.bits,
        "seed": cfg.seed,
        "train_descriptor_cap": cfg.train_descriptor_cap,
        "projection_sample_cap": cfg.projection_sample_cap,
    }


def config_from_manifest(entries: dict[str, object]) -> PipelineConfig:
    strings = {k: str(v) for k, v in entries.items() if str(v) != ""}
    for boolean in ("whiten", "hash", "clamp_gram"):
        if boolean in entries:
            strings[boolean] = "true" if entries[boolean] in (True, "True", "true") else "false"
    return config_from_entries(strings)

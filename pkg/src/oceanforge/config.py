"""Pipeline configuration: per-stage TOML blocks, a global seed and its hash."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields

from .artifacts import config_hash
from .dsp import DspConfig, get_profile, with_overrides
from .errors import InputError
from .model import ModelConfig
from .train import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SEED_ENV = "OCEANFORGE_SEED"
DEFAULT_SALT = "oceanforge"


@dataclass(frozen=True)
class AisConfig:
    salt: str = DEFAULT_SALT
    verify_checksum: bool = True


@dataclass(frozen=True)
class CorpusConfig:
    granularity: str = "both"
    corpus_id: str = "default"
    max_skew_ms: int = 2000
    keep_ambiguous: bool = False
    eval_fraction: float = 0.1


@dataclass(frozen=True)
class EvalConfig:
    mode: str = "retrieval"
    targets: str = "prompts"
    ks: tuple = (1, 3, 5)
    extra_prompts: tuple = ()


def _build(cls, block: dict, what: str):
    names = {f.name for f in fields(cls)}
    unknown = set(block) - names
    if unknown:
        raise InputError(f"[{what}] unknown keys: {sorted(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in block.items()}
    return cls(**kw)


def _as_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    profile: str = "default"
    ais: AisConfig = field(default_factory=AisConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    dsp: DspConfig = field(default_factory=DspConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, env: dict | None = None) -> "PipelineConfig":
        """Build from a parsed TOML mapping. The global seed feeds every stage seed;
        ``OCEANFORGE_SEED`` in ``env`` (default: the process environment) overrides it.
        """
        d = dict(d)
        env = os.environ if env is None else env
        known = {"seed", "profile", "ais", "corpus", "dsp", "model", "train", "eval", "paths"}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config sections: {sorted(unknown)}")
        seed = d.get("seed", 0)
        if env.get(SEED_ENV, "") != "":
            try:
                seed = int(env[SEED_ENV])
            except ValueError:
                raise InputError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
        profile = d.get("profile", "default")
        dsp = with_overrides(get_profile(profile), **d.get("dsp", {}))
        model_block = {"spec_frames": dsp.target_frames, "spec_mels": dsp.n_mels, **d.get("model", {}), "seed": seed}
        train_block = {**d.get("train", {}), "seed": seed}
        return cls(
            seed=seed,
            profile=profile,
            ais=_build(AisConfig, d.get("ais", {}), "ais"),
            corpus=_build(CorpusConfig, d.get("corpus", {}), "corpus"),
            dsp=dsp,
            model=_build(ModelConfig, model_block, "model"),
            train=TrainConfig.from_dict({k: tuple(v) if isinstance(v, list) else v for k, v in train_block.items()}),
            eval=_build(EvalConfig, d.get("eval", {}), "eval"),
            paths=dict(d.get("paths", {})),
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "profile": self.profile,
            "ais": _as_dict(self.ais),
            "corpus": _as_dict(self.corpus),
            "dsp": self.dsp.to_dict(),
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "eval": _as_dict(self.eval),
            "paths": dict(self.paths),
        }

    def stage_hash(self, *stages: str) -> str:
        d = self.to_dict()
        return config_hash({s: d[s] for s in stages})


def load_config(path=None, env: dict | None = None) -> PipelineConfig:
    if path is None:
        return PipelineConfig.from_dict({}, env)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{path}: {exc}") from None
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    return PipelineConfig.from_dict(data, env)

"""Run configuration: dataset profiles, hyperparameter defaults, config files.

Profiles bundle the window length, per-frame feature layout, class table,
and the hyperparameter block for that dataset. Config files are JSON with
the same block structure as RunConfig; unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .canlog import AttackKind, AttackSpec, BenignId, SynthConfig, default_synth_config
from .distill import DistillConfig, STUDENT_BUDGET, TEACHER_BUDGET
from .errors import ConfigError, IoError
from .features import (
    CIC_CLASSES,
    CIC_LAYOUT,
    HCRL_CLASSES,
    HCRL_LAYOUT,
    SYNTH_CLASSES,
    ClassTable,
    FeatureLayout,
)
from .neural import TrainConfig
from .vae import derive_seed

# Published hyperparameter defaults per dataset profile.
HYPER_DEFAULTS = {
    "hcrl": {
        "smooth_factor": 1e-06,
        "encoder_layers": 3,
        "batch_size": 32,
        "learning_rate": 0.0001,
        "epochs": 1,
    },
    "ciciov": {
        "smooth_factor": 1e-08,
        "encoder_layers": 3,
        "batch_size": 32,
        "learning_rate": 0.0001,
        "epochs": 50,
    },
}
# The desk-scale synthetic profile trains with the CIC block.
HYPER_DEFAULTS["synthetic"] = dict(HYPER_DEFAULTS["ciciov"])


@dataclass(frozen=True)
class Profile:
    name: str
    window_length: int
    layout: FeatureLayout
    classes: ClassTable


PROFILES = {
    "hcrl": Profile("hcrl", 29, HCRL_LAYOUT, HCRL_CLASSES),
    "ciciov": Profile("ciciov", 7, CIC_LAYOUT, CIC_CLASSES),
    "synthetic": Profile("synthetic", 7, CIC_LAYOUT, SYNTH_CLASSES),
}


def get_profile(name):
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return PROFILES[name]


@dataclass
class HyperBlock:
    learning_rate: float
    batch_size: int
    encoder_layers: int
    smooth_factor: float
    epochs: int


@dataclass
class VaeBlock:
    widths: tuple = (128, 64, 48)
    latent_dim: int = 32
    beta: float = 1.0
    benign_only: bool = False


@dataclass
class DistillBlock:
    temperature: float = 2.0
    alpha: float = 0.5
    t_squared: bool = True
    reverse_kl: bool = False
    teacher_hidden: int = 96
    student_hidden: int = 0  # 0 = widest that fits the budget
    teacher_budget: int = TEACHER_BUDGET
    student_budget: int = STUDENT_BUDGET
    teacher_epochs: int = 400
    student_epochs: int = 400


@dataclass
class ExplainBlock:
    permutations: int = 2000
    instances_per_class: int = 50
    background_size: int = 100


@dataclass
class DataEntry:
    path: str
    attack: AttackKind = AttackKind.NONE


@dataclass
class RunConfig:
    profile: str = "synthetic"
    seed: int = 7
    split_fraction: float = 0.05
    out_dir: str = "out"
    data: list = field(default_factory=list)  # DataEntry items; empty = synthetic
    synth: SynthConfig | None = None
    hyper: HyperBlock | None = None
    vae: VaeBlock = field(default_factory=VaeBlock)
    distill: DistillBlock = field(default_factory=DistillBlock)
    explain: ExplainBlock = field(default_factory=ExplainBlock)

    def __post_init__(self):
        get_profile(self.profile)
        if self.hyper is None:
            self.hyper = HyperBlock(**HYPER_DEFAULTS[self.profile])
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError("split_fraction must be in (0, 1)")
        if self.hyper.encoder_layers != len(self.vae.widths):
            raise ConfigError(
                f"encoder_layers={self.hyper.encoder_layers} but "
                f"{len(self.vae.widths)} encoder widths configured"
            )
        if self.profile == "synthetic" and self.synth is None and not self.data:
            self.synth = default_synth_config(seed=self.seed)

    def vae_train_config(self):
        return TrainConfig(
            learning_rate=self.hyper.learning_rate,
            batch_size=self.hyper.batch_size,
            epochs=self.hyper.epochs,
            seed=derive_seed(self.seed, 10),
            epsilon=self.hyper.smooth_factor,
        )

    def distill_config(self):
        base = dict(
            learning_rate=self.hyper.learning_rate,
            batch_size=self.hyper.batch_size,
            epsilon=self.hyper.smooth_factor,
        )
        return DistillConfig(
            temperature=self.distill.temperature,
            alpha=self.distill.alpha,
            t_squared=self.distill.t_squared,
            reverse_kl=self.distill.reverse_kl,
            teacher_budget=self.distill.teacher_budget,
            student_budget=self.distill.student_budget,
            teacher_hidden=self.distill.teacher_hidden,
            student_hidden=self.distill.student_hidden,
            teacher_train=TrainConfig(
                epochs=self.distill.teacher_epochs, seed=derive_seed(self.seed, 11), **base
            ),
            student_train=TrainConfig(
                epochs=self.distill.student_epochs, seed=derive_seed(self.seed, 12), **base
            ),
        )

    def explain_settings(self):
        return self.explain

    def to_dict(self):
        return {
            "profile": self.profile,
            "seed": self.seed,
            "split_fraction": self.split_fraction,
            "out_dir": self.out_dir,
            "data": [
                {"path": e.path, "attack": e.attack.value} for e in self.data
            ],
            "synth": _synth_to_dict(self.synth) if self.synth else None,
            "hyper": vars(self.hyper).copy(),
            "vae": {**vars(self.vae), "widths": list(self.vae.widths)},
            "distill": vars(self.distill).copy(),
            "explain": vars(self.explain).copy(),
        }


def _check_keys(obj, allowed, where):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _parse_id(value):
    if isinstance(value, str):
        return int(value, 16) if value.lower().startswith("0x") else int(value)
    return int(value)


def _synth_to_dict(cfg):
    return {
        "seed": cfg.seed,
        "duration": cfg.duration,
        "benign": [
            {"can_id": b.can_id, "period": b.period, "dlc": b.dlc, "phase": b.phase}
            for b in cfg.benign
        ],
        "attacks": [
            {
                "kind": a.kind.value,
                "rate": a.rate,
                "start": a.start,
                "end": a.end,
                "target_id": a.target_id,
                "payload": list(a.payload),
            }
            for a in cfg.attacks
        ],
    }


def synth_from_dict(obj, where="synth"):
    _check_keys(obj, {"seed", "duration", "benign", "attacks"}, where)
    benign = []
    for i, b in enumerate(obj.get("benign", [])):
        _check_keys(b, {"can_id", "period", "dlc", "phase"}, f"{where}.benign[{i}]")
        benign.append(
            BenignId(
                can_id=_parse_id(b["can_id"]),
                period=float(b["period"]),
                dlc=int(b.get("dlc", 8)),
                phase=float(b.get("phase", 0.0)),
            )
        )
    attacks = []
    for i, a in enumerate(obj.get("attacks", [])):
        _check_keys(
            a, {"kind", "rate", "start", "end", "target_id", "payload"},
            f"{where}.attacks[{i}]",
        )
        try:
            kind = AttackKind(a["kind"])
        except ValueError:
            raise ConfigError(f"{where}.attacks[{i}]: unknown kind {a['kind']!r}") from None
        attacks.append(
            AttackSpec(
                kind=kind,
                rate=float(a["rate"]),
                start=float(a["start"]),
                end=float(a["end"]),
                target_id=_parse_id(a.get("target_id", 0)),
                payload=tuple(a.get("payload", ())),
            )
        )
    return SynthConfig(
        seed=int(obj.get("seed", 0)),
        duration=float(obj["duration"]),
        benign=tuple(benign),
        attacks=tuple(attacks),
    )


def _block_from_dict(cls, obj, where, tuple_fields=()):
    _check_keys(obj, {f for f in cls.__dataclass_fields__}, where)
    kwargs = dict(obj)
    for name in tuple_fields:
        if name in kwargs:
            kwargs[name] = tuple(kwargs[name])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad {where} block: {exc}") from None


def config_from_dict(obj, overrides=None):
    _check_keys(
        obj,
        {
            "profile", "seed", "split_fraction", "out_dir", "data", "synth",
            "hyper", "vae", "distill", "explain",
        },
        "config",
    )
    merged = dict(obj)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    data = []
    for i, entry in enumerate(merged.get("data", []) or []):
        _check_keys(entry, {"path", "attack"}, f"data[{i}]")
        attack = entry.get("attack", "none")
        try:
            kind = AttackKind(attack)
        except ValueError:
            raise ConfigError(f"data[{i}]: unknown attack {attack!r}") from None
        data.append(DataEntry(path=entry["path"], attack=kind))

    profile = merged.get("profile", "synthetic")
    get_profile(profile)
    hyper = None
    if "hyper" in merged and merged["hyper"] is not None:
        defaults = dict(HYPER_DEFAULTS[profile])
        _check_keys(merged["hyper"], defaults.keys(), "hyper")
        defaults.update(merged["hyper"])
        hyper = HyperBlock(**defaults)

    synth = None
    if merged.get("synth"):
        synth = synth_from_dict(merged["synth"])

    return RunConfig(
        profile=profile,
        seed=int(merged.get("seed", 7)),
        split_fraction=float(merged.get("split_fraction", 0.05)),
        out_dir=merged.get("out_dir", "out"),
        data=data,
        synth=synth,
        hyper=hyper,
        vae=_block_from_dict(VaeBlock, merged.get("vae", {}), "vae", ("widths",)),
        distill=_block_from_dict(DistillBlock, merged.get("distill", {}), "distill"),
        explain=_block_from_dict(ExplainBlock, merged.get("explain", {}), "explain"),
    )


def load_config(path, overrides=None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(obj, overrides)


def default_config(profile="synthetic", seed=7, out_dir="out"):
    return RunConfig(profile=profile, seed=seed, out_dir=out_dir)

"""Combined model artifact: scaler + VAE + teacher + student in one file.

The container is deterministic JSON (sorted keys, compact separators) with
weight tensors stored as base64-encoded little-endian float64 bytes, so
save -> load -> save is byte-identical and retraining with the same config
and seed reproduces the file exactly. Wall-clock metadata is deliberately
excluded. Budget checks run on every load.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .canlog import AttackKind
from .distill import ClassifierModel, DistillConfig
from .errors import ConfigError, IoError
from .features import ClassTable, FeatureLayout, ScalerParams
from .neural import Layer, MlpModel, TrainConfig
from .stream import WindowScorer
from .vae import VaeModel

FORMAT_VERSION = "canids-artifact/1"


@dataclass
class ModelArtifact:
    profile: str
    window_length: int
    layout: FeatureLayout
    classes: ClassTable
    scaler: ScalerParams
    vae: VaeModel
    teacher: ClassifierModel
    student: ClassifierModel
    distill_config: DistillConfig
    seed: int
    traces_digest: str = ""

    def make_scorer(self):
        return WindowScorer(
            self.scaler, self.vae, self.student, self.layout,
            self.window_length, self.classes.names,
        )


def _arr(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(a.astype("<f8").tobytes()).decode("ascii"),
    }


def _unarr(obj):
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(obj["shape"])


def _layer(layer):
    return {"activation": layer.activation, "w": _arr(layer.w), "b": _arr(layer.b)}


def _unlayer(obj):
    return Layer(_unarr(obj["w"]), _unarr(obj["b"]), obj["activation"])


def _mlp(model):
    return {"seed": model.seed, "layers": [_layer(l) for l in model.layers]}


def _unmlp(obj):
    return MlpModel([_unlayer(l) for l in obj["layers"]], seed=obj["seed"])


def _train_config(cfg):
    return {
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "epsilon": cfg.epsilon,
    }


def _untrain_config(obj):
    return TrainConfig(**obj)


def artifact_to_dict(art):
    d = art.distill_config
    return {
        "format_version": FORMAT_VERSION,
        "profile": art.profile,
        "window_length": art.window_length,
        "layout": {"name": art.layout.name, "fields": list(art.layout.fields)},
        "classes": {
            "names": list(art.classes.names),
            "kinds": [k.value for k in art.classes.kinds],
        },
        "scaler": {
            "x_min": _arr(art.scaler.x_min),
            "x_max": _arr(art.scaler.x_max),
            "fitted_on": art.scaler.fitted_on,
        },
        "vae": {
            "trunk": _mlp(art.vae.trunk),
            "mu_head": _layer(art.vae.mu_head),
            "logvar_head": _layer(art.vae.logvar_head),
            "decoder": _mlp(art.vae.decoder),
            "latent_dim": art.vae.latent_dim,
            "beta": art.vae.beta,
            "config": _train_config(art.vae.config),
        },
        "teacher": {
            "mlp": _mlp(art.teacher.mlp),
            "budget": art.teacher.budget,
        },
        "student": {
            "mlp": _mlp(art.student.mlp),
            "budget": art.student.budget,
        },
        "distill": {
            "temperature": d.temperature,
            "alpha": d.alpha,
            "t_squared": d.t_squared,
            "reverse_kl": d.reverse_kl,
            "teacher_budget": d.teacher_budget,
            "student_budget": d.student_budget,
            "teacher_hidden": d.teacher_hidden,
            "student_hidden": d.student_hidden,
            "teacher_train": _train_config(d.teacher_train),
            "student_train": _train_config(d.student_train),
        },
        "seed": art.seed,
        "traces_digest": art.traces_digest,
    }


def artifact_from_dict(obj):
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(
            f"unsupported artifact version {version!r}, expected {FORMAT_VERSION!r}"
        )
    layout = FeatureLayout(obj["layout"]["name"], tuple(obj["layout"]["fields"]))
    classes = ClassTable(
        tuple(obj["classes"]["names"]),
        tuple(AttackKind(k) for k in obj["classes"]["kinds"]),
    )
    scaler = ScalerParams(
        _unarr(obj["scaler"]["x_min"]),
        _unarr(obj["scaler"]["x_max"]),
        obj["scaler"]["fitted_on"],
    )
    v = obj["vae"]
    vae_model = VaeModel(
        trunk=_unmlp(v["trunk"]),
        mu_head=_unlayer(v["mu_head"]),
        logvar_head=_unlayer(v["logvar_head"]),
        decoder=_unmlp(v["decoder"]),
        latent_dim=v["latent_dim"],
        beta=v["beta"],
        config=_untrain_config(v["config"]),
    )
    d = obj["distill"]
    dconfig = DistillConfig(
        temperature=d["temperature"],
        alpha=d["alpha"],
        t_squared=d["t_squared"],
        reverse_kl=d["reverse_kl"],
        teacher_budget=d["teacher_budget"],
        student_budget=d["student_budget"],
        teacher_hidden=d["teacher_hidden"],
        student_hidden=d["student_hidden"],
        teacher_train=_untrain_config(d["teacher_train"]),
        student_train=_untrain_config(d["student_train"]),
    )
    teacher = ClassifierModel(
        _unmlp(obj["teacher"]["mlp"]), "teacher", classes.names,
        obj["teacher"]["budget"],
    )
    student = ClassifierModel(
        _unmlp(obj["student"]["mlp"]), "student", classes.names,
        obj["student"]["budget"],
    )
    for model in (teacher, student):
        count = model.param_count()
        if count > model.budget:
            raise ConfigError(
                f"artifact {model.role} has {count} params, budget {model.budget}"
            )
    return ModelArtifact(
        profile=obj["profile"],
        window_length=obj["window_length"],
        layout=layout,
        classes=classes,
        scaler=scaler,
        vae=vae_model,
        teacher=teacher,
        student=student,
        distill_config=dconfig,
        seed=obj["seed"],
        traces_digest=obj["traces_digest"],
    )


def save_artifact(art, path):
    text = json.dumps(artifact_to_dict(art), sort_keys=True, separators=(",", ":"))
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write artifact {path}: {exc}") from None


def load_artifact(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read artifact {path}: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"artifact {path} is not valid JSON: {exc}") from None
    return artifact_from_dict(obj)


def traces_digest(traces):
    """Stable digest of the training traces kept inside the artifact."""
    blob = json.dumps(traces, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("ascii")).hexdigest()

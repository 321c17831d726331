"""End-to-end orchestration used by the CLI.

Training order: parse -> window -> 5/95 stratified split -> fit scaler on
the training split -> train VAE -> extract latent means -> train teacher ->
distill student -> evaluate the student on the held-out 95%. Errors carry
the failing stage name. Everything is deterministic under the config seed.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from . import canlog, distill, features, metrics, vae
from .artifact import ModelArtifact, traces_digest
from .config import get_profile
from .errors import CanidsError, ConfigError, DataError
from .explain import ExplainConfig, explain_models


@contextmanager
def stage(name):
    """Tag escaping package errors with the pipeline stage that failed."""
    try:
        yield
    except CanidsError as exc:
        first = exc.args[0] if exc.args else ""
        exc.args = (f"[{name}] {first}",) + exc.args[1:]
        raise


def load_frames(cfg):
    """Frames from the configured data files, or synthetic traffic."""
    profile = get_profile(cfg.profile)
    if cfg.data:
        frames = []
        for entry in cfg.data:
            if profile.name == "ciciov":
                schema = canlog.ciciov_schema(attack=entry.attack)
            elif profile.name == "hcrl":
                schema = canlog.hcrl_schema(attack=entry.attack)
            else:
                schema = canlog.synthetic_schema(attack=entry.attack, attack_column=True)
            parsed, _ = canlog.parse_log(entry.path, schema)
            frames.extend(parsed)
        return frames
    if cfg.synth is None:
        raise ConfigError("no data files configured and no synthetic config")
    return canlog.generate_synthetic(cfg.synth)


def train_pipeline(cfg):
    """Returns {artifact, report, traces, split sizes}; does not write files."""
    profile = get_profile(cfg.profile)

    with stage("parse"):
        frames = load_frames(cfg)
    with stage("window"):
        windows = features.aggregate_windows(
            frames, profile.window_length, profile.layout, profile.classes
        )
        if not windows:
            raise DataError(
                f"no complete windows (need {profile.window_length} frames)"
            )
    with stage("split"):
        train_w, test_w = features.split_train_test(
            windows, cfg.split_fraction, seed=vae.derive_seed(cfg.seed, 1)
        )
        X_train, y_train = features.windows_matrix(train_w)
        X_test, y_test = features.windows_matrix(test_w)
    with stage("scale"):
        scaler = features.fit_scaler(X_train)
        Xs_train = features.apply_scaler(scaler, X_train)
        Xs_test = features.apply_scaler(scaler, X_test)
    with stage("vae"):
        vae_input = Xs_train[y_train == 0] if cfg.vae.benign_only else Xs_train
        if vae_input.shape[0] == 0:
            raise DataError("benign_only requested but no benign training windows")
        vae_model, vae_trace = vae.train_vae(
            vae_input,
            cfg.vae_train_config(),
            latent_dim=cfg.vae.latent_dim,
            widths=tuple(cfg.vae.widths),
            beta=cfg.vae.beta,
        )
        Z_train = vae.latent_features(vae_model, Xs_train)
        Z_test = vae.latent_features(vae_model, Xs_test)
    dcfg = cfg.distill_config()
    with stage("teacher"):
        teacher, teacher_trace = distill.train_teacher(
            Z_train, y_train, profile.classes.names, dcfg.teacher_train,
            hidden=dcfg.teacher_hidden, budget=dcfg.teacher_budget,
        )
    with stage("student"):
        student, student_trace = distill.train_student(Z_train, y_train, teacher, dcfg)
    with stage("evaluate"):
        preds, _ = distill.predict(student, Z_test)
        report = metrics.confusion_and_rates(
            preds, y_test, profile.classes.count, profile.classes.names
        )

    traces = {"vae": vae_trace, "teacher": teacher_trace, "student": student_trace}
    art = ModelArtifact(
        profile=profile.name,
        window_length=profile.window_length,
        layout=profile.layout,
        classes=profile.classes,
        scaler=scaler,
        vae=vae_model,
        teacher=teacher,
        student=student,
        distill_config=dcfg,
        seed=cfg.seed,
        traces_digest=traces_digest(traces),
    )
    return {
        "artifact": art,
        "report": report,
        "traces": traces,
        "train_windows": len(train_w),
        "test_windows": len(test_w),
    }


def windows_for_artifact(art, frames):
    profile = get_profile(art.profile)
    windows = features.aggregate_windows(
        frames, art.window_length, art.layout, profile.classes
    )
    if not windows:
        raise DataError("no complete windows in evaluation data")
    return windows


def evaluate_artifact(art, frames, repetitions=30, warmup=5):
    """Metrics + Eq-style timing + complexity rows using the persisted scaler."""
    with stage("window"):
        windows = windows_for_artifact(art, frames)
        X, y = features.windows_matrix(windows)
    with stage("evaluate"):
        Xs = features.apply_scaler(art.scaler, X)
        Z = vae.latent_features(art.vae, Xs)
        preds, _ = distill.predict(art.student, Z)
        report = metrics.confusion_and_rates(
            preds, y, art.classes.count, art.classes.names
        )
    timing = _time_pipeline(art, X, repetitions, warmup)
    return report, timing, complexity_rows(art)


def complexity_rows(art):
    return metrics.complexity_report(
        [
            ("teacher", art.teacher, art.teacher.budget),
            ("student", art.student, art.student.budget),
            ("vae", _vae_layers(art.vae), None),
        ]
    )


def _vae_layers(vae_model):
    class _All:
        layers = (
            vae_model.trunk.layers
            + [vae_model.mu_head, vae_model.logvar_head]
            + vae_model.decoder.layers
        )

    return _All


def _time_pipeline(art, X_raw, repetitions, warmup, batch_size=32):
    if X_raw.shape[0] >= batch_size:
        batch = X_raw[:batch_size]
    else:
        reps = int(np.ceil(batch_size / X_raw.shape[0]))
        batch = np.tile(X_raw, (reps, 1))[:batch_size]

    def run(b):
        Z = vae.latent_features(art.vae, features.apply_scaler(art.scaler, b))
        return distill.predict(art.student, Z)[0]

    return metrics.measure_inference(run, batch, repetitions, warmup)


def bench_artifact(art, batch_size=32, repetitions=50, warmup=10, seed=0):
    """Timing on a deterministic random batch (no dataset required)."""
    rng = np.random.default_rng(seed)
    width = art.scaler.x_min.shape[0]
    X = features.inverse_scaler(art.scaler, rng.random((batch_size, width)))
    timing = _time_pipeline(art, X, repetitions, warmup, batch_size)
    return timing, complexity_rows(art)


def explain_artifact(art, frames, settings, seed=None):
    """Balanced-subset SHAP report for the artifact's teacher and student."""
    with stage("window"):
        windows = windows_for_artifact(art, frames)
    with stage("explain"):
        subset, warnings = features.balanced_subset(
            windows,
            per_class=settings.instances_per_class,
            seed=vae.derive_seed(art.seed, 20),
        )
        if not subset:
            raise DataError("balanced subset is empty")
        X, y = features.windows_matrix(subset)
        Z = vae.latent_features(art.vae, features.apply_scaler(art.scaler, X))
        report = explain_models(
            art.teacher,
            art.student,
            Z,
            y,
            art.classes.names,
            art.profile,
            ExplainConfig(
                permutations=settings.permutations,
                instances_per_class=settings.instances_per_class,
                background_size=settings.background_size,
                seed=art.seed if seed is None else seed,
            ),
        )
        report.meta["subset_warnings"] = warnings
    return report

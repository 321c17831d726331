"""Teacher/student classifiers on VAE latent features.

The teacher is pre-trained with plain cross-entropy. The student minimizes
alpha * CE(hard labels) + (1 - alpha) * T^2 * KD(student_probs, soft_targets)
where soft targets are the teacher's temperature-softened probabilities and
KD is the divergence sum_i S_i * log((S_i + eps) / (T_i + eps)) with the
student distribution inside the log numerator. The T^2 factor keeps the
soft-gradient magnitude comparable across temperatures and can be switched
off. Both models must fit their parameter budgets, enforced at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import neural
from .errors import ConfigError, ShapeError, TrainingError
from .neural import MlpModel, TrainConfig
from .vae import derive_seed

TEACHER_BUDGET = 4350
STUDENT_BUDGET = 1669


@dataclass
class DistillConfig:
    temperature: float = 2.0
    alpha: float = 0.5  # weight of the hard-label CE term
    t_squared: bool = True
    reverse_kl: bool = False
    teacher_budget: int = TEACHER_BUDGET
    student_budget: int = STUDENT_BUDGET
    teacher_hidden: int = 96
    student_hidden: int = 0  # 0 = widest layer that fits the budget
    teacher_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=400))
    student_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=400))

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must be in [0, 1]")
        if self.teacher_budget <= 0 or self.student_budget <= 0:
            raise ConfigError("budgets must be positive")


@dataclass
class ClassifierModel:
    mlp: MlpModel
    role: str  # "teacher" | "student"
    class_names: tuple
    budget: int

    def param_count(self):
        return neural.count_params(self.mlp)


def fit_hidden_width(latent_dim, n_classes, budget):
    """Widest single hidden layer with (latent+1)h + (h+1)C <= budget."""
    h = (budget - n_classes) // (latent_dim + 1 + n_classes)
    if h < 1:
        raise ConfigError(f"budget {budget} cannot fit any hidden layer")
    return h


def build_classifier(role, latent_dim, hidden, class_names, seed, budget):
    mlp = neural.init_mlp(
        (latent_dim, hidden, len(class_names)), ("relu", "linear"), seed
    )
    count = neural.count_params(mlp)
    if count > budget:
        raise ConfigError(f"{role} has {count} params, budget {budget}")
    return ClassifierModel(mlp, role, tuple(class_names), budget)


def _train_loop(model, X, y, cfg, grad_fn):
    """Shared mini-batch loop; grad_fn(logits, rows) -> (loss parts, glogits)."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    params = neural.model_params(model.mlp)
    state = neural.adam_init(params)
    rng = np.random.default_rng(derive_seed(cfg.seed, 0))
    trace = []
    for _ in range(cfg.epochs):
        sums = {}
        seen = 0
        for idx in neural.iterate_minibatches(X.shape[0], cfg.batch_size, rng):
            logits, cache = neural.forward(model.mlp, X[idx], want_cache=True)
            parts, glogits = grad_fn(logits, idx)
            if not np.isfinite(parts["loss"]):
                raise TrainingError(f"{model.role} training diverged", trace=trace)
            layer_grads, _ = neural.backward(model.mlp, cache, glogits)
            neural.adam_step(
                params, neural.grads_to_flat(layer_grads), state, cfg.learning_rate
            )
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v * len(idx)
            seen += len(idx)
        trace.append({k: v / seen for k, v in sums.items()})
    return trace


def train_classifier(model, X, y, cfg):
    """Plain cross-entropy training of an existing classifier."""
    y_arr = np.asarray(y, dtype=np.int64)

    def grad_fn(logits, idx):
        loss, g = neural.softmax_ce_grad(logits, y_arr[idx], cfg.epsilon)
        return {"loss": loss}, g

    return _train_loop(model, X, y_arr, cfg, grad_fn)


def train_teacher(latents, labels, class_names, cfg, hidden=96, budget=TEACHER_BUDGET):
    """Pre-train the teacher on latent features with hard labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if np.unique(labels).size < 2:
        raise TrainingError("teacher needs at least two classes")
    model = build_classifier(
        "teacher", np.asarray(latents).shape[1], hidden, class_names,
        derive_seed(cfg.seed, 1), budget,
    )
    trace = train_classifier(model, latents, labels, cfg)
    preds, _ = predict(model, latents)
    trace[-1]["train_accuracy"] = float((preds == labels).mean())
    return model, trace


def soft_targets(teacher, latents, temperature):
    """Teacher probabilities softened at the given temperature."""
    logits = neural.forward(teacher.mlp, np.atleast_2d(latents))
    return neural.softmax_t(logits, temperature)


def kd_loss(student_probs, teacher_probs, epsilon):
    """Batch-mean sum_i S_i * log((S_i + eps) / (T_i + eps))."""
    S = np.atleast_2d(np.asarray(student_probs, dtype=np.float64))
    T = np.atleast_2d(np.asarray(teacher_probs, dtype=np.float64))
    if S.shape != T.shape:
        raise ShapeError(f"distribution shapes differ: {S.shape} vs {T.shape}")
    return float((S * np.log((S + epsilon) / (T + epsilon))).sum(axis=1).mean())


def _kd_grad(S, T, epsilon, reverse):
    """d(kd)/dS for the batch mean; reverse flips the divergence direction."""
    B = S.shape[0]
    if reverse:
        # sum_i T_i log((T_i+eps)/(S_i+eps)) differentiated in S
        return -(T / (S + epsilon)) / B
    return (np.log((S + epsilon) / (T + epsilon)) + S / (S + epsilon)) / B


def train_student(latents, labels, teacher, dcfg):
    """Distill the teacher into a budget-constrained student."""
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    cfg = dcfg.student_train
    hidden = dcfg.student_hidden or fit_hidden_width(
        latents.shape[1], len(teacher.class_names), dcfg.student_budget
    )
    model = build_classifier(
        "student", latents.shape[1], hidden, teacher.class_names,
        derive_seed(cfg.seed, 1), dcfg.student_budget,
    )
    if dcfg.alpha == 1.0:
        # Degenerate mixture: exactly the CE-only float path.
        trace = train_classifier(model, latents, labels, cfg)
        return model, trace

    T = dcfg.temperature
    soft = soft_targets(teacher, latents, T)
    soft_scale = (1.0 - dcfg.alpha) * (T * T if dcfg.t_squared else 1.0)

    def grad_fn(logits, idx):
        ce, g_ce = neural.softmax_ce_grad(logits, labels[idx], cfg.epsilon)
        S = neural.softmax_t(logits, T)
        Tp = soft[idx]
        if dcfg.reverse_kl:
            kd = float((Tp * np.log((Tp + cfg.epsilon) / (S + cfg.epsilon))).sum(1).mean())
        else:
            kd = kd_loss(S, Tp, cfg.epsilon)
        dS = _kd_grad(S, Tp, cfg.epsilon, dcfg.reverse_kl)
        g_soft = neural.softmax_t_backward(S, dS, T)
        loss = dcfg.alpha * ce + soft_scale * kd
        return {"loss": loss, "ce": ce, "kd": kd}, dcfg.alpha * g_ce + soft_scale * g_soft

    trace = _train_loop(model, latents, labels, cfg, grad_fn)
    return model, trace


def predict(classifier, latents):
    """(class indices, probability rows); ties go to the lowest class index."""
    X = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    if X.shape[1] != classifier.mlp.input_width:
        raise ShapeError(
            f"latent width {X.shape[1]} != model width {classifier.mlp.input_width}"
        )
    logits = neural.forward(classifier.mlp, X)
    probs = neural.softmax_t(np.atleast_2d(logits), 1.0)
    return probs.argmax(axis=1), probs

"""Shapley-value attribution over the latent dimensions.

The coalition value v(S) is the model's predicted probability of a target
class when the instance keeps its own coordinates on S and takes the
background mean elsewhere (single-point interventional imputation, so every
evaluation is one model forward). The exact engine enumerates all 2^m
coalitions and is the test oracle for m <= 20; the production estimator
averages marginal gains over uniformly random feature permutations, which
is unbiased for the same quantity and reports a per-feature standard error.

Latent dimensions map back to original features cyclically: dimension i is
attributed to per-frame feature i mod f.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import distill
from .errors import ConfigError, DataError, SizeError

EXACT_MAX_FEATURES = 20
RATIO_DENOM_FLOOR = 1e-12

HCRL_FEATURE_NAMES = ("Timestamp", "CAN ID", "DLC") + tuple(
    f"DATA[{i}]" for i in range(8)
)
CIC_FEATURE_NAMES = ("CAN ID",) + tuple(f"DATA[{i}]" for i in range(8))


def latent_to_feature_map(profile, latent_dim=32):
    """Names of the original feature each latent dimension folds back to."""
    if profile == "hcrl":
        names = HCRL_FEATURE_NAMES
    elif profile in ("ciciov", "synthetic"):
        names = CIC_FEATURE_NAMES
    else:
        raise ConfigError(f"unknown profile {profile!r}")
    return tuple(names[i % len(names)] for i in range(latent_dim))


class ModelValueFunction:
    """v(S) = P(target class | instance restricted to S, background mean elsewhere)."""

    def __init__(self, predict_proba, instance, background, target_class):
        self.predict_proba = predict_proba
        self.instance = np.asarray(instance, dtype=np.float64)
        self.baseline = np.asarray(background, dtype=np.float64).mean(axis=0)
        self.target_class = target_class

    def __call__(self, masks):
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        X = np.where(masks, self.instance, self.baseline)
        return np.asarray(self.predict_proba(X))[:, self.target_class]


def classifier_value_function(model, instance, background, target_class):
    return ModelValueFunction(
        lambda X: distill.predict(model, X)[1], instance, background, target_class
    )


def exact_shapley(v, m):
    """Exact attribution by subset enumeration (2^m evaluations of v)."""
    if m > EXACT_MAX_FEATURES:
        raise SizeError(
            f"{m} features need 2^{m} evaluations; use sampled_shapley instead"
        )
    n_masks = 1 << m
    bits = ((np.arange(n_masks)[:, None] >> np.arange(m)) & 1).astype(bool)
    vals = np.asarray(v(bits), dtype=np.float64)
    if vals.shape != (n_masks,):
        raise DataError(f"value function returned shape {vals.shape}")
    sizes = bits.sum(axis=1)
    # weight of a coalition S (i excluded): |S|! (m - |S| - 1)! / m!
    w = np.array([1.0 / (m * math.comb(m - 1, k)) for k in range(m)])
    phi = np.empty(m)
    for i in range(m):
        without = np.nonzero(~bits[:, i])[0]
        with_i = without + (1 << i)
        phi[i] = (w[sizes[without]] * (vals[with_i] - vals[without])).sum()
    return phi


def sampled_shapley(v, m, samples, seed=0, chunk=256):
    """Monte-Carlo permutation estimate of exact_shapley.

    Each permutation contributes one marginal gain per feature; the
    estimate is their mean and se its standard error. Deterministic
    under seed. Returns (phi, se).
    """
    if samples < 1:
        raise ConfigError("need at least one permutation")
    rng = np.random.default_rng(seed)
    sums = np.zeros(m)
    sumsq = np.zeros(m)
    done = 0
    base = np.arange(m)
    while done < samples:
        c = min(chunk, samples - done)
        perms = rng.permuted(np.tile(base, (c, 1)), axis=1)
        # masks[p, k] = coalition after inserting the first k features of perm p
        masks = np.zeros((c, m + 1, m), dtype=bool)
        for k in range(m):
            masks[:, k + 1, :] = masks[:, k, :]
            masks[np.arange(c), k + 1, perms[:, k]] = True
        vals = np.asarray(v(masks.reshape(c * (m + 1), m)), dtype=np.float64)
        vals = vals.reshape(c, m + 1)
        gains = vals[:, 1:] - vals[:, :-1]  # (c, m) in permutation order
        rows = np.repeat(np.arange(c), m)
        np.add.at(sums, perms.reshape(-1), gains[rows, np.tile(base, c)])
        np.add.at(sumsq, perms.reshape(-1), gains[rows, np.tile(base, c)] ** 2)
        done += c
    phi = sums / samples
    if samples > 1:
        var = np.maximum(sumsq - samples * phi**2, 0.0) / (samples - 1)
        se = np.sqrt(var / samples)
    else:
        se = np.full(m, np.inf)
    return phi, se


@dataclass
class ExplainConfig:
    permutations: int = 2000
    instances_per_class: int = 50
    background_size: int = 100
    seed: int = 0


@dataclass
class ShapReport:
    profile: str
    class_names: tuple
    feature_map: tuple  # latent dim -> original feature name
    # mean |phi| per latent dim: phi[model][class_name] -> list of 32 floats
    phi: dict
    # aggregated importance: importance[model][class_name][feature] -> float
    importance: dict
    # ratios[class_name][feature] -> float or None (student denominator ~ 0)
    ratios: dict
    meta: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "profile": self.profile,
            "class_names": list(self.class_names),
            "feature_map": list(self.feature_map),
            "phi": self.phi,
            "importance": self.importance,
            "ratios": self.ratios,
            "meta": self.meta,
        }

    def format_text(self):
        lines = []
        for cls in self.phi["teacher"]:
            lines.append(f"class {cls}")
            lines.append(f"  {'feature':<12} {'teacher':>10} {'student':>10} {'ratio':>8}")
            for feat in dict.fromkeys(self.feature_map):
                t = self.importance["teacher"][cls][feat]
                s = self.importance["student"][cls][feat]
                r = self.ratios[cls][feat]
                r_txt = f"{r:8.3f}" if r is not None else "   undef"
                lines.append(f"  {feat:<12} {t:10.5f} {s:10.5f} {r_txt}")
        return "\n".join(lines) + "\n"


def _aggregate(phi_abs, feature_map):
    by_feature = {}
    for dim, name in enumerate(feature_map):
        by_feature.setdefault(name, []).append(phi_abs[dim])
    return {name: float(np.mean(vals)) for name, vals in by_feature.items()}


def explain_models(teacher, student, latents, labels, class_names, profile,
                   config=None):
    """Mean-|phi| report per class and latent dim for both models,
    aggregated to original features, with the teacher/student ratio table."""
    cfg = config or ExplainConfig()
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if latents.shape[0] == 0:
        raise DataError("empty evaluation subset")
    m = latents.shape[1]
    feature_map = latent_to_feature_map(profile, m)
    rng = np.random.default_rng(cfg.seed)

    # Class-balanced background batch.
    present = [c for c in range(len(class_names)) if (labels == c).any()]
    per_class_bg = max(1, cfg.background_size // max(1, len(present)))
    bg_rows = []
    for c in present:
        idx = np.nonzero(labels == c)[0]
        take = min(per_class_bg, len(idx))
        bg_rows.extend(idx[rng.permutation(len(idx))[:take]].tolist())
    background = latents[np.array(sorted(bg_rows))]

    models = {"teacher": teacher, "student": student}
    phi = {name: {} for name in models}
    importance = {name: {} for name in models}
    skipped = []
    for c in range(len(class_names)):
        idx = np.nonzero(labels == c)[0]
        if len(idx) == 0:
            skipped.append(class_names[c])
            continue
        take = min(cfg.instances_per_class, len(idx))
        chosen = idx[rng.permutation(len(idx))[:take]]
        for name, model in models.items():
            acc = np.zeros(m)
            for j, row in enumerate(chosen):
                vfun = classifier_value_function(model, latents[row], background, c)
                seed = int(
                    np.random.SeedSequence([cfg.seed, c, int(row), name == "student"])
                    .generate_state(1)[0]
                )
                est, _ = sampled_shapley(vfun, m, cfg.permutations, seed=seed)
                acc += np.abs(est)
            mean_abs = acc / take
            phi[name][class_names[c]] = mean_abs.tolist()
            importance[name][class_names[c]] = _aggregate(mean_abs, feature_map)

    ratios = {}
    for cls in phi["teacher"]:
        ratios[cls] = {}
        for feat in dict.fromkeys(feature_map):
            t = importance["teacher"][cls][feat]
            s = importance["student"][cls][feat]
            ratios[cls][feat] = (t / s) if s >= RATIO_DENOM_FLOOR else None

    return ShapReport(
        profile=profile,
        class_names=tuple(class_names),
        feature_map=feature_map,
        phi=phi,
        importance=importance,
        ratios=ratios,
        meta={
            "estimator": "permutation-sampling",
            "permutations": cfg.permutations,
            "instances_per_class": cfg.instances_per_class,
            "background_rows": int(background.shape[0]),
            "imputation": "background-mean",
            "seed": cfg.seed,
            "skipped_classes": skipped,
            "ratio_denominator_floor": RATIO_DENOM_FLOOR,
        },
    )

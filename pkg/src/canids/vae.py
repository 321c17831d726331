"""Variational autoencoder over scaled window vectors.

Encoder: a 3-hidden-layer ReLU trunk feeding two linear heads that produce
the latent mean and log-variance. Sampling uses z = mu + exp(logvar/2) * eps
so gradients flow through mu/logvar (the reparameterization trick); the KL
term against a standard normal prior has the closed form
0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2). Reconstruction is plain MSE:
inputs are min-max scaled to [0, 1], where a Gaussian likelihood is the
natural fit. Downstream feature extraction always uses the deterministic
latent mean, never a sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels, neural
from .errors import NumericError, ShapeError, TrainingError
from .neural import Layer, MlpModel, TrainConfig

DEFAULT_WIDTHS = (128, 64, 48)
DEFAULT_LATENT = 32


@dataclass
class VaeModel:
    trunk: MlpModel  # 3 hidden ReLU layers
    mu_head: Layer
    logvar_head: Layer
    decoder: MlpModel  # mirrored widths, final layer linear
    latent_dim: int
    beta: float
    config: TrainConfig = field(default_factory=TrainConfig)

    @property
    def input_width(self):
        return self.trunk.input_width


def derive_seed(seed, stream):
    """Deterministic child seed for one named substream."""
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1)[0])


def build_vae(input_dim, latent_dim=DEFAULT_LATENT, widths=DEFAULT_WIDTHS, beta=1.0,
              seed=0, config=None):
    trunk = neural.init_mlp(
        (input_dim,) + tuple(widths), ("relu",) * len(widths), derive_seed(seed, 1)
    )
    head_rng = np.random.default_rng(derive_seed(seed, 2))
    mu_head = neural.init_layer(widths[-1], latent_dim, "linear", head_rng)
    logvar_head = neural.init_layer(widths[-1], latent_dim, "linear", head_rng)
    dec_widths = (latent_dim,) + tuple(reversed(widths)) + (input_dim,)
    decoder = neural.init_mlp(
        dec_widths, ("relu",) * len(widths) + ("linear",), derive_seed(seed, 3)
    )
    return VaeModel(trunk, mu_head, logvar_head, decoder, latent_dim, beta,
                    config or TrainConfig())


def _encode_cached(model, x):
    trunk_out, cache = neural.forward(model.trunk, x, want_cache=True)
    mu = kernels.linear_forward(trunk_out, model.mu_head.w, model.mu_head.b)
    logvar = kernels.linear_forward(trunk_out, model.logvar_head.w, model.logvar_head.b)
    return mu, logvar, trunk_out, cache


def encode(model, x):
    """Deterministic (mu, logvar) for a batch of scaled inputs."""
    xb = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if xb.shape[1] != model.input_width:
        raise ShapeError(f"input width {xb.shape[1]} != model width {model.input_width}")
    mu, logvar, _, _ = _encode_cached(model, xb)
    return mu, logvar


def reparameterize(mu, logvar, noise):
    """z = mu + exp(logvar / 2) * noise; noise=None means noiseless (z = mu)."""
    if noise is None:
        return np.array(mu, copy=True)
    return mu + np.exp(0.5 * logvar) * noise


def kl_to_standard_normal(mu, logvar):
    """Batch-mean KL(q(z|x) || N(0, I)) in closed form."""
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    logvar = np.atleast_2d(np.asarray(logvar, dtype=np.float64))
    per_row = 0.5 * (mu**2 + np.exp(logvar) - 1.0 - logvar).sum(axis=1)
    return float(per_row.mean())


def decode(model, z):
    return neural.forward(model.decoder, z)


def vae_loss(model, x, noise=None):
    """(total, reconstruction, kl) on one batch; total = recon + beta * kl."""
    xb = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mu, logvar = encode(model, xb)
    z = reparameterize(mu, logvar, noise)
    xhat = np.atleast_2d(decode(model, z))
    recon = float(((xhat - xb) ** 2).mean())
    kl = kl_to_standard_normal(mu, logvar)
    total = recon + model.beta * kl
    if not np.isfinite(total):
        raise NumericError("non-finite VAE loss")
    return total, recon, kl


def _params(model):
    return (
        neural.model_params(model.trunk)
        + [model.mu_head.w, model.mu_head.b, model.logvar_head.w, model.logvar_head.b]
        + neural.model_params(model.decoder)
    )


def vae_loss_and_grads(model, x, noise):
    """Loss triple plus gradients in _params order (exact reverse mode)."""
    xb = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    B, F = xb.shape
    mu, logvar, trunk_out, trunk_cache = _encode_cached(model, xb)
    z = reparameterize(mu, logvar, noise)
    xhat, dec_cache = neural.forward(model.decoder, z, want_cache=True)

    recon = float(((xhat - xb) ** 2).mean())
    kl = kl_to_standard_normal(mu, logvar)
    total = recon + model.beta * kl

    gxhat = 2.0 * (xhat - xb) / (B * F)
    dec_grads, gz = neural.backward(model.decoder, dec_cache, gxhat)

    gmu = gz + model.beta * mu / B
    glogvar = model.beta * 0.5 * (np.exp(logvar) - 1.0) / B
    if noise is not None:
        glogvar = glogvar + gz * noise * 0.5 * np.exp(0.5 * logvar)

    gw_mu, gb_mu, gtrunk_a = kernels.linear_backward(
        trunk_out, model.mu_head.w, np.ascontiguousarray(gmu)
    )
    gw_lv, gb_lv, gtrunk_b = kernels.linear_backward(
        trunk_out, model.logvar_head.w, np.ascontiguousarray(glogvar)
    )
    trunk_grads, _ = neural.backward(model.trunk, trunk_cache, gtrunk_a + gtrunk_b)

    grads = (
        neural.grads_to_flat(trunk_grads)
        + [gw_mu, gb_mu, gw_lv, gb_lv]
        + neural.grads_to_flat(dec_grads)
    )
    return (total, recon, kl), grads


def train_vae(X, config, latent_dim=DEFAULT_LATENT, widths=DEFAULT_WIDTHS, beta=1.0):
    """Mini-batch Adam training; returns (model, per-epoch loss trace)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise TrainingError("empty training set")
    model = build_vae(X.shape[1], latent_dim, widths, beta, seed=config.seed,
                      config=config)
    params = _params(model)
    state = neural.adam_init(params)
    rng = np.random.default_rng(derive_seed(config.seed, 0))
    trace = []
    for _ in range(config.epochs):
        sums = np.zeros(3)
        seen = 0
        for idx in neural.iterate_minibatches(X.shape[0], config.batch_size, rng):
            xb = np.ascontiguousarray(X[idx])
            noise = rng.standard_normal((len(idx), model.latent_dim))
            losses, grads = vae_loss_and_grads(model, xb, noise)
            if not np.isfinite(losses[0]):
                raise TrainingError("VAE training diverged", trace=trace)
            neural.adam_step(params, grads, state, config.learning_rate)
            sums += np.array(losses) * len(idx)
            seen += len(idx)
        trace.append(
            {"total": sums[0] / seen, "recon": sums[1] / seen, "kl": sums[2] / seen}
        )
    return model, trace


def latent_features(model, X):
    """Deterministic latent means, shape (batch, latent_dim)."""
    mu, _ = encode(model, np.atleast_2d(np.asarray(X, dtype=np.float64)))
    return mu


def reconstruction_errors(model, X):
    """Per-row MSE of the noiseless reconstruction (z = mu)."""
    Xb = np.atleast_2d(np.asarray(X, dtype=np.float64))
    mu, _ = encode(model, Xb)
    xhat = np.atleast_2d(decode(model, mu))
    return ((xhat - Xb) ** 2).mean(axis=1)


def reconstruction_error(model, x):
    """Scalar reconstruction error of a single window."""
    return float(reconstruction_errors(model, np.atleast_2d(x))[0])

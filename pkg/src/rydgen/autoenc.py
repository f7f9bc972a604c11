"""Feed-forward autoencoder with an n-bit quantized latent.

Forward path for one design ``x``::

    zeta = encoder(x)                       # real pre-activations
    t = tanh(zeta); spin = sign(t)          # sign(0) = +1
    z' = (spin + 1) / 2                     # binary latent
    eps = z' xor Gamma_f(z')                # channel noise, detached
    z = z' xor eps
    x_hat = sigmoid(decoder(z))

Backward: the quantizer noise ``spin - t`` and the channel noise ``eps`` are
constants, so ``z = eps + (1 - 2 eps) (t + noise + 1) / 2`` is differentiated
only through ``t``; that is the straight-through estimate with slope
``sech^2(zeta)``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from . import mcmc
from .bits import as_bits
from .errors import TrainingError
from .lattice import InteractionGraph, violation_count
from .metrics import hamming

QUANTIZER_TAG = "tanh-sign-st"
BCE_CLAMP = 1e-7


@dataclass
class AutoencoderModel:
    pixels: int
    latent_n: int
    hidden: tuple
    enc_w: list
    enc_b: list
    dec_w: list
    dec_b: list

    def params(self) -> list:
        return [*self.enc_w, *self.enc_b, *self.dec_w, *self.dec_b]

    def copy(self) -> "AutoencoderModel":
        return AutoencoderModel(
            self.pixels,
            self.latent_n,
            tuple(self.hidden),
            [w.copy() for w in self.enc_w],
            [b.copy() for b in self.enc_b],
            [w.copy() for w in self.dec_w],
            [b.copy() for b in self.dec_b],
        )

    def layer_shapes(self) -> dict:
        return {
            "encoder": [list(w.shape) for w in self.enc_w],
            "decoder": [list(w.shape) for w in self.dec_w],
        }


def init_model(pixels: int, hidden=(64,), latent_n: int = 12, seed: int = 0) -> AutoencoderModel:
    """Glorot-uniform weights, zero biases; deterministic given ``seed``."""
    hidden = tuple(int(h) for h in hidden)
    if pixels < 1 or latent_n < 1 or any(h < 1 for h in hidden):
        raise ValueError("every layer needs at least one unit")
    rng = np.random.Generator(np.random.Philox(seed))

    def stack(sizes):
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
        return ws, bs

    enc_w, enc_b = stack([pixels, *hidden, latent_n])
    dec_w, dec_b = stack([latent_n, *hidden[::-1], pixels])
    return AutoencoderModel(pixels, latent_n, hidden, enc_w, enc_b, dec_w, dec_b)


def _as_batch(x, width, what):
    x = np.asarray(x, dtype=float)
    single = x.size == width and not (x.ndim == 2 and x.shape == (1, width))
    x = x.reshape(1, -1) if single else x.reshape(x.shape[0] if x.ndim else 1, -1)
    if x.shape[1] != width:
        raise ValueError(f"{what} has {x.shape[1]} entries, model expects {width}")
    return x, single


def _mlp_forward(ws, bs, x):
    acts = [x]
    for k, (w, b) in enumerate(zip(ws, bs)):
        pre = acts[-1] @ w.T + b
        acts.append(np.tanh(pre) if k < len(ws) - 1 else pre)
    return acts


def _mlp_backward(ws, acts, grad_out):
    """Gradients of a tanh MLP with a linear output layer."""
    gw, gb = [None] * len(ws), [None] * len(ws)
    g = grad_out
    for k in range(len(ws) - 1, -1, -1):
        gw[k] = g.T @ acts[k]
        gb[k] = g.sum(axis=0)
        g_in = g @ ws[k]
        if k > 0:
            g = g_in * (1.0 - acts[k] ** 2)
    return gw, gb, g_in


def encode(model: AutoencoderModel, chi) -> np.ndarray:
    """Latent pre-activations zeta for one design or a batch.

    Pixels enter the encoder in spin form (2x - 1) so the first layer sees
    centered inputs.
    """
    x, single = _as_batch(chi, model.pixels, "design")
    zeta = _mlp_forward(model.enc_w, model.enc_b, 2.0 * x - 1.0)[-1]
    return zeta[0] if single else zeta


def decoder_logits(model: AutoencoderModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = z.reshape(1, -1) if single else z
    if z.shape[1] != model.latent_n:
        raise ValueError(f"latent has {z.shape[1]} bits, model expects {model.latent_n}")
    a = _mlp_forward(model.dec_w, model.dec_b, z)[-1]
    return a[0] if single else a


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def decode(model: AutoencoderModel, z) -> np.ndarray:
    """Pixel probabilities in (0, 1) for one latent or a batch."""
    return _sigmoid(decoder_logits(model, z))


def binarize(x_hat) -> np.ndarray:
    return (np.asarray(x_hat) >= 0.5).astype(np.uint8)


@dataclass(frozen=True)
class QuantizerOutput:
    spin: np.ndarray
    relaxed: np.ndarray
    noise: np.ndarray


def quantize(zeta) -> QuantizerOutput:
    zeta = np.asarray(zeta, dtype=float)
    if not np.all(np.isfinite(zeta)):
        raise ValueError("pre-activations must be finite")
    relaxed = np.tanh(zeta)
    spin = np.where(relaxed >= 0, 1.0, -1.0)
    return QuantizerOutput(spin, relaxed, spin - relaxed)


def quantizer_grad(zeta) -> np.ndarray:
    """Straight-through slope d spin / d zeta = sech^2(zeta)."""
    return 1.0 - np.tanh(np.asarray(zeta, dtype=float)) ** 2


def spin_to_binary(s) -> np.ndarray:
    return ((np.asarray(s) + 1) // 2).astype(np.uint8)


def binary_to_spin(z) -> np.ndarray:
    return 2 * np.asarray(z, dtype=np.int64) - 1


# --------------------------------------------------------------------------
# losses


def reconstruction_loss(chi, x_hat, return_flag: bool = False):
    """Mean binary cross-entropy per pixel (nats); x_hat is clamped to [1e-7, 1 - 1e-7]."""
    chi = np.asarray(chi, dtype=float).ravel()
    x = np.asarray(x_hat, dtype=float).ravel()
    if chi.shape != x.shape:
        raise ValueError("design and reconstruction shapes differ")
    clipped = np.clip(x, BCE_CLAMP, 1.0 - BCE_CLAMP)
    flag = bool(np.any(clipped != x))
    loss = float(-np.mean(chi * np.log(clipped) + (1.0 - chi) * np.log1p(-clipped)))
    return (loss, flag) if return_flag else loss


def energy_match_loss(c_z: float, c_chi_values, scale: float) -> float:
    """Mean over decoded samples of |C_z - scale * C_chi|^2."""
    c = np.atleast_1d(np.asarray(c_chi_values, dtype=float))
    if c.size == 0:
        raise ValueError("need at least one decoded sample")
    return float(np.mean((c_z - scale * c) ** 2))


def is_penalty_loss(graph: InteractionGraph, z) -> int:
    return violation_count(graph, as_bits(z, graph.n))


def distance_match_loss(latents, decoded, d_z=hamming, scale: Optional[float] = None):
    """Mean over unordered pairs of |d_Z(z_i, z_j) - scale * d_X(x_i, x_j)|.

    ``d_X`` is the mean absolute pixel difference.  Returns the loss and its
    subgradient with respect to ``decoded`` (sgn(0) = 0 throughout).  When
    ``scale`` is None it is set to mean d_Z / mean d_X over the pairs and
    treated as a constant.
    """
    x = np.asarray(decoded, dtype=float)
    m = x.shape[0]
    if m < 2 or len(latents) != m:
        raise ValueError("need at least two latents with one decoding each")
    x = x.reshape(m, -1)
    npix = x.shape[1]
    pairs = list(combinations(range(m), 2))
    ii = np.array([p[0] for p in pairs])
    jj = np.array([p[1] for p in pairs])
    dz = np.array([float(d_z(latents[i], latents[j])) for i, j in pairs])
    diff = x[ii] - x[jj]
    dx = np.abs(diff).mean(axis=1)
    if scale is None:
        scale = dz.mean() / dx.mean() if dx.mean() > 0 else 1.0
    resid = dz - scale * dx
    loss = float(np.mean(np.abs(resid)))
    coef = (np.sign(resid) * -scale / (npix * len(pairs)))[:, None] * np.sign(diff)
    grad = np.zeros_like(x)
    np.add.at(grad, ii, coef)
    np.add.at(grad, jj, -coef)
    return loss, grad.reshape(np.shape(decoded))


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: Optional[int] = None
    energy_scale: Optional[float] = None
    distance_scale: Optional[float] = None  # None: per-batch ratio, held constant for gradients
    w_rec: float = 1.0
    w_energy: float = 1.0
    w_is: float = 0.0
    w_dist: float = 0.0
    momentum: float = 0.9
    noise_draws: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning rate must be non-negative")
        if min(self.w_rec, self.w_energy, self.w_is, self.w_dist) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.noise_draws < 1:
            raise ValueError("noise_draws must be at least 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch size must be positive")


@dataclass
class LossBreakdown:
    reconstruction: float = 0.0
    energy_match: float = 0.0
    is_penalty: float = 0.0
    distance_match: float = 0.0
    total: float = 0.0

    def as_row(self):
        return [self.reconstruction, self.energy_match, self.is_penalty, self.distance_match, self.total]


@dataclass
class TrainState:
    """Momentum buffers and the energy scale frozen on the first batch."""

    velocity: list = field(default_factory=list)
    energy_scale: Optional[float] = None
    epoch: int = 0


def _energy_terms(energy):
    lin = getattr(energy, "linear", None)
    pair = getattr(energy, "pair", None)
    if callable(lin) and callable(pair):
        return np.asarray(lin(), dtype=float), np.asarray(pair(), dtype=float), float(getattr(energy, "offset", 0.0))
    return None


def native_energy(terms, table, z_rel, z_bin_idx):
    """C_z on relaxed latents and its gradient (zero when only a table is known)."""
    if terms is None:
        return table[z_bin_idx], np.zeros_like(z_rel)
    lin, pair, offset = terms
    upper = np.triu(pair, 1)
    c = z_rel @ lin + np.einsum("bi,ij,bj->b", z_rel, upper, z_rel) + offset
    return c, lin[None, :] + z_rel @ pair


def _design_costs(objective, x_hat) -> np.ndarray:
    return np.asarray(objective.costs(binarize(x_hat).reshape((x_hat.shape[0], *objective.shape))), dtype=float)


def loss_and_grad(model, x, eps, cfg: TrainConfig, channel, objective, graph, energy_scale, frozen_noise=None):
    """Weighted loss for a batch with fixed channel noise, and its gradient.

    ``eps`` has one row per design.  ``frozen_noise`` pins the quantizer
    noise (spin - tanh) so the function is a smooth surrogate suitable for
    finite differences.  Returns ``(LossBreakdown, grads, extras)``.
    """
    b = x.shape[0]
    enc = _mlp_forward(model.enc_w, model.enc_b, 2.0 * x - 1.0)
    zeta = enc[-1]
    t = np.tanh(zeta)
    noise = (np.where(t >= 0, 1.0, -1.0) - t) if frozen_noise is None else frozen_noise
    spin = t + noise
    eps = np.asarray(eps, dtype=float)
    flip = 1.0 - 2.0 * eps
    z_rel = eps + flip * (spin + 1.0) / 2.0
    z_bin = (z_rel > 0.5).astype(np.int64)
    z_idx = (z_bin << np.arange(model.latent_n)).sum(axis=1)

    dec = _mlp_forward(model.dec_w, model.dec_b, z_rel)
    logits = dec[-1]
    x_hat = _sigmoid(logits)
    npix = model.pixels

    g_logit = np.zeros_like(logits)
    g_xhat = np.zeros_like(x_hat)
    g_z = np.zeros_like(z_rel)
    out = LossBreakdown()

    if cfg.w_rec > 0:
        per = (np.logaddexp(0.0, logits) - x * logits).mean(axis=1)
        out.reconstruction = float(per.mean())
        g_logit += cfg.w_rec * (x_hat - x) / (npix * b)

    scale = energy_scale
    if cfg.w_energy > 0:
        c_z, dcz = native_energy(_energy_terms(channel.energy), channel.energy_table(), z_rel, z_idx)
        # the decoded design is scored as a concrete binary design and the
        # cost enters as a constant target for the latent energy
        c_x = _design_costs(objective, x_hat)
        if scale is None:
            scale = float(np.mean(np.abs(c_z)) / max(np.mean(np.abs(c_x)), 1e-12))
        r = c_z - scale * c_x
        out.energy_match = float(np.mean(r**2))
        g_z += cfg.w_energy * (2.0 * r / b)[:, None] * dcz

    if cfg.w_is > 0:
        adj = graph.adjacency().astype(float)
        pen = 0.5 * np.einsum("bi,ij,bj->b", z_rel, adj, z_rel)
        out.is_penalty = float(pen.mean())
        g_z += cfg.w_is * (z_rel @ adj) / b

    if cfg.w_dist > 0 and b >= 2:
        dl, dg = distance_match_loss(list(z_bin), x_hat, scale=cfg.distance_scale)
        out.distance_match = dl
        g_xhat += cfg.w_dist * dg

    out.total = (
        cfg.w_rec * out.reconstruction
        + cfg.w_energy * out.energy_match
        + cfg.w_is * out.is_penalty
        + cfg.w_dist * out.distance_match
    )
    g_logit += g_xhat * x_hat * (1.0 - x_hat)
    dec_gw, dec_gb, g_zin = _mlp_backward(model.dec_w, dec, g_logit)
    g_z += g_zin
    g_zeta = g_z * flip / 2.0 * (1.0 - t**2)
    enc_gw, enc_gb, _ = _mlp_backward(model.enc_w, enc, g_zeta)
    grads = [*enc_gw, *enc_gb, *dec_gw, *dec_gb]
    extras = {"noise": noise, "z_bin": z_bin, "z_idx": z_idx, "x_hat": x_hat, "energy_scale": scale}
    return out, grads, extras


def latent_indices(model, x) -> np.ndarray:
    """Integer index of the quantized encoder latent for each design."""
    zeta = encode(model, x)
    zeta = np.atleast_2d(zeta)
    z = spin_to_binary(quantize(zeta).spin).astype(np.int64)
    return (z << np.arange(model.latent_n)).sum(axis=1)


def _flatten(dataset) -> np.ndarray:
    arr = [np.asarray(getattr(d, "pixels", d), dtype=float).ravel() for d in dataset]
    if not arr:
        raise ValueError("dataset is empty")
    return np.vstack(arr)


def train_epoch(model, dataset, channel, objective, graph, cfg: TrainConfig, rng, state: Optional[TrainState] = None) -> LossBreakdown:
    """One pass over ``dataset``; updates ``model`` in place.

    For every design and noise draw the channel is sampled from the encoder's
    quantized latent, the resulting XOR noise is held fixed, and the weighted
    loss is back-propagated through the relaxed quantizer.  SGD with momentum
    makes one update per batch.
    """
    state = TrainState() if state is None else state
    if not state.velocity:
        state.velocity = [np.zeros_like(p) for p in model.params()]
    if cfg.energy_scale is not None:
        state.energy_scale = cfg.energy_scale
    x_all = _flatten(dataset)
    if channel.n != model.latent_n:
        raise ValueError("channel size differs from the model's latent size")
    m = x_all.shape[0]
    bs = m if cfg.batch_size is None else min(cfg.batch_size, m)
    order = rng.permutation(m) if bs < m else np.arange(m)
    totals = LossBreakdown()
    weight_sum = 0
    for batch_index, start in enumerate(range(0, m, bs)):
        x = x_all[order[start:start + bs]]
        grads = [np.zeros_like(p) for p in model.params()]
        batch_loss = LossBreakdown()
        for _ in range(cfg.noise_draws):
            starts = latent_indices(model, x)
            finals = mcmc.apply_channel_batch(channel, starts, rng)
            eps_idx = starts ^ finals
            eps = ((eps_idx[:, None] >> np.arange(model.latent_n)) & 1).astype(float)
            loss, g, extras = loss_and_grad(model, x, eps, cfg, channel, objective, graph, state.energy_scale)
            if state.energy_scale is None and cfg.w_energy > 0:
                state.energy_scale = extras["energy_scale"]
            for acc, gi in zip(grads, g):
                acc += gi / cfg.noise_draws
            for name in ("reconstruction", "energy_match", "is_penalty", "distance_match", "total"):
                setattr(batch_loss, name, getattr(batch_loss, name) + getattr(loss, name) / cfg.noise_draws)
        if not np.isfinite(batch_loss.total) or not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingError(f"non-finite loss in batch {batch_index}", batch_index)
        for p, v, g in zip(model.params(), state.velocity, grads):
            v *= cfg.momentum
            v -= cfg.learning_rate * g
            p += v
        rows = x.shape[0]
        for name in ("reconstruction", "energy_match", "is_penalty", "distance_match", "total"):
            setattr(totals, name, getattr(totals, name) + rows * getattr(batch_loss, name))
        weight_sum += rows
    state.epoch += 1
    for name in ("reconstruction", "energy_match", "is_penalty", "distance_match", "total"):
        setattr(totals, name, getattr(totals, name) / weight_sum)
    return totals


def train(model, dataset, channel, objective, graph, cfg: TrainConfig, rng=None, callback=None):
    """Run ``cfg.epochs`` epochs; returns the per-epoch LossBreakdown list."""
    rng = mcmc.make_rng(cfg.seed) if rng is None else rng
    state = TrainState()
    history = []
    for epoch in range(cfg.epochs):
        loss = train_epoch(model, dataset, channel, objective, graph, cfg, rng, state)
        history.append(loss)
        if callback is not None:
            callback(epoch, loss)
    return history


# --------------------------------------------------------------------------
# persistence


def save_model(model: AutoencoderModel, path) -> None:
    doc = {
        "format": "rydgen-autoencoder",
        "version": 1,
        "quantizer": QUANTIZER_TAG,
        "pixels": model.pixels,
        "latent_n": model.latent_n,
        "hidden": list(model.hidden),
        "layers": model.layer_shapes(),
        "encoder": [{"weight": w.ravel().tolist(), "bias": b.tolist()} for w, b in zip(model.enc_w, model.enc_b)],
        "decoder": [{"weight": w.ravel().tolist(), "bias": b.tolist()} for w, b in zip(model.dec_w, model.dec_b)],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_model(path, expect_pixels: Optional[int] = None, expect_latent: Optional[int] = None) -> AutoencoderModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("quantizer") != QUANTIZER_TAG:
        raise ValueError(f"unsupported quantizer tag {doc.get('quantizer')!r}")
    pixels, latent_n, hidden = int(doc["pixels"]), int(doc["latent_n"]), tuple(doc["hidden"])
    if expect_pixels is not None and pixels != expect_pixels:
        raise ValueError(f"model expects {pixels} pixels, data has {expect_pixels}")
    if expect_latent is not None and latent_n != expect_latent:
        raise ValueError(f"model latent size {latent_n} differs from {expect_latent}")
    ref = init_model(pixels, hidden, latent_n, 0)
    shapes = ref.layer_shapes()
    if doc["layers"] != shapes:
        raise ValueError("layer shapes in file do not match the declared architecture")

    def unpack(layers, ref_w):
        ws, bs = [], []
        for layer, w0 in zip(layers, ref_w):
            w = np.asarray(layer["weight"], dtype=float)
            b = np.asarray(layer["bias"], dtype=float)
            if w.size != w0.size or b.size != w0.shape[0]:
                raise ValueError("weight array size does not match its declared shape")
            ws.append(w.reshape(w0.shape))
            bs.append(b)
        return ws, bs

    enc_w, enc_b = unpack(doc["encoder"], ref.enc_w)
    dec_w, dec_b = unpack(doc["decoder"], ref.dec_w)
    return AutoencoderModel(pixels, latent_n, hidden, enc_w, enc_b, dec_w, dec_b)


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)

"""Denoising diffusion over range images with semantic-mask conditioning.

The pixel grid is normalized to [-1, 1], packed losslessly into a latent
grid by a fixed 4x4 space-to-depth transform, and diffused there. The
denoiser sees the noisy latent concatenated with the encoded masked image
and the latent-resolution mask; training minimizes squared error on the
masked latent region only. Sampling is ancestral, with unmasked latent
cells pinned to the forward-diffused known content at every step and the
final output composited so pixels outside the mask are untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import records, tensorfile
from .denoiser import Denoiser, DenoiserConfig
from .masking import apply_mask, downsample_mask
from .projection import ProjectionConfig
from .types import RangeImage, SemanticMask

LATENT_BLOCK = 4
LATENT_CHANNELS = 2 * LATENT_BLOCK * LATENT_BLOCK  # 32
# z_t + encoded masked image + latent mask, concatenated along channels
COND_CHANNELS = 2 * LATENT_CHANNELS + 1


@dataclass(frozen=True)
class NoiseSchedule:
    """Forward-process parameters for a T-step chain; all arrays 1-indexed by t."""

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def alpha_bar(self, t) -> np.ndarray | float:
        """Cumulative alpha at step t (t may be an array); t = 0 yields 1."""
        table = np.concatenate(([1.0], self.alpha_bars))
        out = table[np.asarray(t)]
        return float(out) if np.isscalar(t) or np.asarray(t).ndim == 0 else out

    def beta(self, t: int) -> float:
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        return float(self.alphas[t - 1])


def make_schedule(T: int = 1000, beta_1: float = 1e-4, beta_T: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule from beta_1 to beta_T over T steps."""
    if T < 2:
        raise ValueError("schedule needs T >= 2")
    if not 0.0 < beta_1 <= beta_T < 1.0:
        raise ValueError("need 0 < beta_1 <= beta_T < 1")
    betas = np.linspace(beta_1, beta_T, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(T=T, betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def normalize_image(img: RangeImage, cfg: ProjectionConfig) -> np.ndarray:
    """(H, W, 2) float64 in [-1, 1]: range scaled by r_max, both channels shifted."""
    rng = img.range_m.astype(np.float64)
    if np.any(rng > cfg.r_max):
        raise ValueError(f"range exceeds r_max={cfg.r_max}")
    grid = np.empty(img.shape + (2,), dtype=np.float64)
    grid[:, :, 0] = rng / cfg.r_max * 2.0 - 1.0
    grid[:, :, 1] = img.intensity.astype(np.float64) * 2.0 - 1.0
    return grid


def denormalize_image(grid: np.ndarray, cfg: ProjectionConfig) -> RangeImage:
    """Inverse of normalize_image with clamping into valid ranges.

    Generated values below -1 in the range channel clamp to the no-return
    sentinel, which is how ray drop appears in outputs.
    """
    rng = np.clip((grid[:, :, 0] + 1.0) / 2.0, 0.0, 1.0) * cfg.r_max
    inten = np.clip((grid[:, :, 1] + 1.0) / 2.0, 0.0, 1.0)
    rng32 = rng.astype(np.float32)
    inten32 = inten.astype(np.float32)
    inten32[rng32 == 0.0] = 0.0
    return RangeImage(rng32, inten32)


def encode(x: np.ndarray) -> np.ndarray:
    """Fixed 4x4 space-to-depth: (..., H, W, 2) -> (..., H/4, W/4, 32).

    Parameter-free, linear, and exactly invertible by decode(), standing in
    for a learned autoencoder while keeping every downstream check exact.
    """
    x = np.asarray(x)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    n, h, w, c = x.shape
    if c != 2:
        raise ValueError(f"expected 2 channels, got {c}")
    if h % LATENT_BLOCK or w % LATENT_BLOCK:
        raise ValueError(f"grid {h}x{w} not divisible by {LATENT_BLOCK}")
    b = LATENT_BLOCK
    z = (
        x.reshape(n, h // b, b, w // b, b, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(n, h // b, w // b, b * b * c)
    )
    return z[0] if squeeze else z


def decode(z: np.ndarray) -> np.ndarray:
    """Exact inverse of encode()."""
    z = np.asarray(z)
    squeeze = z.ndim == 3
    if squeeze:
        z = z[None]
    n, hh, ww, cc = z.shape
    if cc != LATENT_CHANNELS:
        raise ValueError(f"expected {LATENT_CHANNELS} latent channels, got {cc}")
    b = LATENT_BLOCK
    x = (
        z.reshape(n, hh, ww, b, b, 2)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(n, hh * b, ww * b, 2)
    )
    return x[0] if squeeze else x


def forward_diffuse(z0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps; t may be per-example."""
    z0 = np.asarray(z0)
    eps = np.asarray(eps)
    if eps.shape != z0.shape:
        raise ValueError(f"noise shape {eps.shape} != latent shape {z0.shape}")
    ab = np.asarray(sched.alpha_bar(t), dtype=np.float64)
    while ab.ndim < z0.ndim:
        ab = ab[..., None]
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def _broadcast_mask(m: np.ndarray, like: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=bool)
    if m.shape != like.shape[:-1]:
        raise ValueError(f"mask shape {m.shape} does not match tensor {like.shape}")
    return m[..., None]


def region_loss(eps: np.ndarray, eps_hat: np.ndarray, m_latent) -> float:
    """Mean squared error over latent cells where the mask is set (all channels)."""
    loss, _ = region_loss_grad(eps, eps_hat, m_latent)
    return loss


def region_loss_grad(
    eps: np.ndarray, eps_hat: np.ndarray, m_latent
) -> tuple[float, np.ndarray]:
    """Loss plus its gradient with respect to eps_hat."""
    eps = np.asarray(eps, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if eps.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch {eps.shape} vs {eps_hat.shape}")
    m = m_latent.bits if isinstance(m_latent, SemanticMask) else np.asarray(m_latent, dtype=bool)
    mb = _broadcast_mask(m, eps)
    count = int(m.sum()) * eps.shape[-1]
    if count == 0:
        raise ValueError("region loss is undefined for an empty mask")
    diff = np.where(mb, eps - eps_hat, 0.0)
    loss = float(np.sum(diff * diff) / count)
    grad = (-2.0 / count) * diff
    return loss, grad


@dataclass(frozen=True)
class TrainExample:
    """Normalized image x, its edit mask, and the masked variant x_m.

    x and x_m are (H, W, 2) float64 in [-1, 1]; x_m equals x with masked
    pixels at the normalized sentinel (-1, -1). The mask is never empty.
    """

    x: np.ndarray
    mask: SemanticMask
    x_m: np.ndarray

    def __post_init__(self) -> None:
        if self.mask.count() == 0:
            raise ValueError("training example needs a non-empty mask")
        if self.x.shape[:2] != self.mask.shape or self.x.shape != self.x_m.shape:
            raise ValueError("example grids and mask disagree on shape")


def make_train_example(img: RangeImage, mask: SemanticMask, cfg: ProjectionConfig) -> TrainExample:
    x = normalize_image(img, cfg)
    x_m = normalize_image(apply_mask(img, mask), cfg)
    return TrainExample(x=x, mask=mask, x_m=x_m)


@dataclass
class TrainConfig:
    """Mirrors the flat key=value config file, one field per key."""

    T: int = 100
    beta_1: float = 1e-3
    beta_T: float = 0.2
    lr: float = 0.1
    steps: int = 2000
    batch: int = 8
    seed: int = 0
    crop_h: int = 32
    crop_w: int = 256

    @classmethod
    def from_record(cls, fields: dict[str, str]) -> "TrainConfig":
        kw = {}
        for name, caster in (
            ("T", int), ("beta_1", float), ("beta_T", float), ("lr", float),
            ("steps", int), ("batch", int), ("seed", int),
            ("crop_h", int), ("crop_w", int),
        ):
            if name in fields:
                kw[name] = caster(fields[name])
        return cls(**kw)

    def to_record(self) -> dict:
        return {
            "T": self.T, "beta_1": self.beta_1, "beta_T": self.beta_T,
            "lr": self.lr, "steps": self.steps, "batch": self.batch,
            "seed": self.seed, "crop_h": self.crop_h, "crop_w": self.crop_w,
        }


def _crop_example(ex: TrainExample, ch: int, cw: int, rng: np.random.Generator) -> TrainExample:
    """Seeded crop that always overlaps the mask; columns wrap around the seam."""
    h, w = ex.mask.shape
    if (ch, cw) == (h, w):
        return ex
    if ch > h or cw > w:
        raise ValueError("crop larger than image")
    if ch % LATENT_BLOCK or cw % LATENT_BLOCK:
        raise ValueError("crop dims must be divisible by the latent block")
    rows = np.nonzero(ex.mask.bits.any(axis=1))[0]
    r_lo = max(0, int(rows.min()) - ch + 1)
    r_hi = min(h - ch, int(rows.max()))
    r0, cols = 0, np.arange(cw)
    for attempt in range(64):
        r0 = int(rng.integers(r_lo, r_hi + 1))
        c0 = int(rng.integers(0, w))
        cols = (c0 + np.arange(cw)) % w
        if ex.mask.bits[r0 : r0 + ch][:, cols].any():
            break
    else:
        # Center the window on the first masked pixel.
        pr, pc = ex.mask.pixels()[0]
        r0 = min(max(0, int(pr) - ch // 2), h - ch)
        cols = ((int(pc) - cw // 2) + np.arange(cw)) % w
    rs = slice(r0, r0 + ch)
    return TrainExample(
        x=ex.x[rs][:, cols],
        mask=SemanticMask(ex.mask.bits[rs][:, cols]),
        x_m=ex.x_m[rs][:, cols],
    )


def prepare_batch(
    examples: list[TrainExample],
    sched: NoiseSchedule,
    rng: np.random.Generator,
    crop: tuple[int, int] | None = None,
) -> dict:
    """Assemble one training batch: crops, timesteps, noise, conditioning.

    Draw order (crops, then timesteps, then noise) is fixed so a seed pins
    the whole run.
    """
    if not examples:
        raise ValueError("empty batch")
    if crop is not None:
        examples = [_crop_example(ex, crop[0], crop[1], rng) for ex in examples]
    x = np.stack([ex.x for ex in examples])
    x_m = np.stack([ex.x_m for ex in examples])
    m_lat = np.stack(
        [downsample_mask(ex.mask, LATENT_BLOCK, LATENT_BLOCK).bits for ex in examples]
    )
    z0 = encode(x)
    cond = encode(x_m)
    t = rng.integers(1, sched.T + 1, size=len(examples))
    eps = rng.standard_normal(z0.shape)
    z_t = forward_diffuse(z0, t, eps, sched)
    net_in = np.concatenate([z_t, cond, m_lat[..., None].astype(np.float64)], axis=-1)
    assert net_in.shape[-1] == COND_CHANNELS
    return {"net_in": net_in, "t": t, "eps": eps, "m_lat": m_lat}


def loss_and_grads(model: Denoiser, batch: dict) -> tuple[float, dict[str, np.ndarray]]:
    """Region loss on a prepared batch plus parameter gradients."""
    eps_hat, cache = model.forward(batch["net_in"], batch["t"], want_cache=True)
    loss, dout = region_loss_grad(batch["eps"], eps_hat, batch["m_lat"])
    return loss, model.backward(cache, dout)


def train_step(
    model: Denoiser,
    examples: list[TrainExample],
    sched: NoiseSchedule,
    rng: np.random.Generator,
    lr: float = 1e-4,
    crop: tuple[int, int] | None = None,
) -> float:
    """One SGD update on a batch; deterministic given the generator state."""
    batch = prepare_batch(examples, sched, rng, crop)
    loss, grads = loss_and_grads(model, batch)
    model.sgd_step(grads, lr)
    return loss


def train(
    model: Denoiser,
    examples: list[TrainExample],
    sched: NoiseSchedule,
    cfg: TrainConfig,
    progress=None,
) -> list[float]:
    """Run cfg.steps SGD steps over uniformly resampled batches; returns losses."""
    if not examples:
        raise ValueError("no training examples")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    h, w = examples[0].mask.shape
    ch, cw = min(cfg.crop_h, h), min(cfg.crop_w, w)
    crop = None if (ch, cw) == (h, w) else (ch, cw)
    losses: list[float] = []
    for step in range(cfg.steps):
        pick = rng.integers(0, len(examples), size=cfg.batch)
        batch = [examples[i] for i in pick]
        loss = train_step(model, batch, sched, rng, lr=cfg.lr, crop=crop)
        losses.append(loss)
        if progress is not None:
            progress(step, loss)
    return losses


def composite(generated: RangeImage, original: RangeImage, mask: SemanticMask) -> RangeImage:
    """Masked pixels from generated, everything else bit-exact from original."""
    if generated.shape != original.shape or generated.shape != mask.shape:
        raise ValueError("composite inputs disagree on shape")
    rng = np.where(mask.bits, generated.range_m, original.range_m)
    inten = np.where(mask.bits, generated.intensity, original.intensity)
    return RangeImage(rng, inten)


def sample(
    x_m: RangeImage,
    mask: SemanticMask,
    model,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    cfg: ProjectionConfig,
    original: RangeImage | None = None,
) -> RangeImage:
    """Ancestral sampling of the masked region, conditioned at every step.

    Unmasked latent cells are pinned to the forward-diffused encoding of the
    original image (or of x_m when no original is supplied) before each
    denoising step, and the decoded result is composited in pixel space, so
    the edit cannot leak outside the mask.
    """
    if mask.count() == 0:
        raise ValueError("sampling needs a non-empty mask")
    if x_m.shape != mask.shape:
        raise ValueError("masked image and mask disagree on shape")
    base = original if original is not None else x_m
    cond = encode(normalize_image(x_m, cfg))
    z_known = encode(normalize_image(base, cfg))
    m_lat = downsample_mask(mask, LATENT_BLOCK, LATENT_BLOCK).bits
    keep = ~m_lat[..., None]
    mask_chan = m_lat[..., None].astype(np.float64)

    z = rng.standard_normal(z_known.shape)
    for t in range(sched.T, 0, -1):
        noise_known = rng.standard_normal(z_known.shape)
        z = np.where(keep, forward_diffuse(z_known, t, noise_known, sched), z)
        net_in = np.concatenate([z, cond, mask_chan], axis=-1)
        eps_hat = model.forward(net_in[None], np.array([t]))[0]
        ab_t = sched.alpha_bar(t)
        mean = (z - sched.beta(t) / math.sqrt(1.0 - ab_t) * eps_hat) / math.sqrt(
            sched.alpha(t)
        )
        if t > 1:
            z = mean + math.sqrt(sched.beta(t)) * rng.standard_normal(z.shape)
        else:
            z = mean
    z = np.where(keep, z_known, z)
    generated = denormalize_image(decode(z), cfg)
    return composite(generated, base, mask)


# ---------------------------------------------------------------------------
# Checkpoints: one TensorFile per parameter plus a key=value manifest.

_MANIFEST = "manifest.txt"


def save_checkpoint(
    model: Denoiser, directory: str | Path, sched_params: dict | None = None
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    fields: dict = {"format": "rangeforge-checkpoint-1"}
    fields["in_channels"] = model.config.in_channels
    fields["out_channels"] = model.config.out_channels
    fields["width"] = model.config.width
    fields["temb_dim"] = model.config.temb_dim
    for key, value in (sched_params or {}).items():
        fields[f"sched.{key}"] = value
    for i, (name, arr) in enumerate(sorted(model.params.items())):
        fname = f"{name}.rvt"
        tensorfile.write_tensor(directory / fname, arr.reshape(1, 1, -1))
        fields[f"param.{i}.name"] = name
        fields[f"param.{i}.dims"] = ",".join(str(d) for d in arr.shape)
        fields[f"param.{i}.offset"] = tensorfile.PAYLOAD_OFFSET
        fields[f"param.{i}.file"] = fname
    records.write_record(directory / _MANIFEST, fields)


def load_checkpoint(directory: str | Path) -> tuple[Denoiser, dict[str, str]]:
    """Rebuild a model from a checkpoint directory; float32 storage widens back."""
    directory = Path(directory)
    fields = records.read_record(directory / _MANIFEST)
    if fields.get("format") != "rangeforge-checkpoint-1":
        raise ValueError(f"unrecognized checkpoint format in {directory}")
    config = DenoiserConfig(
        in_channels=int(fields["in_channels"]),
        out_channels=int(fields["out_channels"]),
        width=int(fields["width"]),
        temb_dim=int(fields["temb_dim"]),
    )
    model = Denoiser(config, seed=0)
    i = 0
    while f"param.{i}.name" in fields:
        name = fields[f"param.{i}.name"]
        dims = tuple(int(d) for d in fields[f"param.{i}.dims"].split(","))
        grid = tensorfile.read_tensor(directory / fields[f"param.{i}.file"])
        model.params[name] = grid.astype(np.float64).reshape(dims)
        i += 1
    expected = set(config.layer_shapes())
    if set(model.params) != expected:
        raise ValueError("checkpoint does not cover the full parameter set")
    sched = {k[len("sched."):]: v for k, v in fields.items() if k.startswith("sched.")}
    return model, sched


def schedule_from_manifest(sched_fields: dict[str, str]) -> NoiseSchedule:
    return make_schedule(
        T=int(sched_fields.get("T", 100)),
        beta_1=float(sched_fields.get("beta_1", 1e-3)),
        beta_T=float(sched_fields.get("beta_T", 0.2)),
    )

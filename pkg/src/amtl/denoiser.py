"""Small conditional noise predictor with one cross-attention block.

Conv encoder to an r x r bottleneck, sinusoidal timestep embedding added as a
bias, multi-head cross-attention between spatial queries and a two-token
conditioning sequence [null, concept], conv decoder with additive skips.
The attention block exposes its softmax maps, averaged over heads, as an
(r, r, 2) grid whose rows sum to one; channel 0 is the null token, channel 1
the condition slot. Unconditional calls place the learned null token in the
condition slot as well.

Everything is deterministic given (params, inputs); all randomness in
training flows from one explicit torch.Generator.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import checkpoint as ckpt
from .schedule import DiffusionSchedule

__all__ = [
    "ConceptVocab",
    "DenoiserConfig",
    "TrainConfig",
    "Denoiser",
    "train_denoiser",
    "attention_loss_gradient",
    "save_denoiser",
    "load_denoiser",
    "init_parameters",
    "sinusoidal_embedding",
    "CONCEPT_CHANNEL",
]

# Token layout of the conditioning sequence (and of attention-grid channels).
NULL_CHANNEL = 0
CONCEPT_CHANNEL = 1


@dataclasses.dataclass(frozen=True)
class ConceptVocab:
    """Frozen concept embedding table standing in for a text encoder."""

    names: tuple
    embeddings: np.ndarray  # (K, D) float32, unit rows

    @classmethod
    def create(cls, names, dim: int = 32, seed: int = 7) -> "ConceptVocab":
        names = tuple(names)
        if len(set(names)) != len(names):
            raise ValueError("concept names must be unique")
        rng = np.random.default_rng(seed)
        emb = rng.standard_normal((len(names), dim)).astype(np.float32)
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        return cls(names=names, embeddings=emb)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown concept {name!r}; vocab has {list(self.names)}") from None

    def __len__(self) -> int:
        return len(self.names)


@dataclasses.dataclass(frozen=True)
class DenoiserConfig:
    image_size: int = 32
    channels: int = 1
    base_channels: int = 16
    attn_dim: int = 32
    n_heads: int = 2
    time_dim: int = 32
    max_timestep: int = 1000

    @property
    def grid_size(self) -> int:
        return self.image_size // 4


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard sin/cos position features of integer timesteps, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(
        torch.arange(half, dtype=t.dtype, device=t.device)
        * (-math.log(10000.0) / (half - 1))
    )
    args = t[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


def init_parameters(module: nn.Module, generator: torch.Generator) -> None:
    """Re-initialize every parameter from an explicit generator.

    Uniform(-b, b) with b = 1/sqrt(fan_in), matching the scale of the torch
    defaults while keeping initialization independent of global RNG state.
    Normalization layers get (weight=1, bias=0).
    """
    owners = dict(module.named_modules())
    for name, p in module.named_parameters():
        owner = owners.get(name.rsplit(".", 1)[0]) if "." in name else module
        with torch.no_grad():
            if isinstance(owner, (nn.GroupNorm, nn.LayerNorm)):
                p.copy_(torch.ones_like(p) if name.endswith("weight")
                        else torch.zeros_like(p))
                continue
            if p.dim() >= 2:
                fan_in = p.shape[1] * (p[0][0].numel() if p.dim() > 2 else 1)
            else:
                fan_in = max(p.shape[0], 1)
            bound = 1.0 / math.sqrt(fan_in)
            u = torch.rand(p.shape, generator=generator, dtype=torch.float32)
            p.copy_(((u * 2.0 - 1.0) * bound).to(p.dtype))


class Denoiser(nn.Module):
    """Conditional epsilon predictor; forward returns (noise, attention grid)."""

    def __init__(self, config: DenoiserConfig, vocab: ConceptVocab):
        super().__init__()
        self.config = config
        self.vocab = vocab
        bc = config.base_channels
        mid = bc * 2
        d_vocab = vocab.embeddings.shape[1]
        if config.attn_dim % config.n_heads != 0:
            raise ValueError("attn_dim must be divisible by n_heads")

        groups = 4
        if bc % groups != 0:
            raise ValueError(f"base_channels must be divisible by {groups}")
        self.conv_in = nn.Conv2d(config.channels, bc, 3, padding=1)
        self.down1 = nn.Conv2d(bc, mid, 3, stride=2, padding=1)
        self.down2 = nn.Conv2d(mid, mid, 3, stride=2, padding=1)
        self.mid = nn.Conv2d(mid, mid, 3, padding=1)
        self.norm_in = nn.GroupNorm(groups, bc)
        self.norm_d1 = nn.GroupNorm(groups, mid)
        self.norm_d2 = nn.GroupNorm(groups, mid)
        self.norm_mid = nn.GroupNorm(groups, mid)
        self.norm_u1 = nn.GroupNorm(groups, mid)
        self.norm_u2 = nn.GroupNorm(groups, bc)
        self.time_mlp = nn.Sequential(
            nn.Linear(config.time_dim, mid), nn.SiLU(), nn.Linear(mid, mid))
        self.q_proj = nn.Conv2d(mid, config.attn_dim, 1)
        self.k_proj = nn.Linear(d_vocab, config.attn_dim)
        self.v_proj = nn.Linear(d_vocab, config.attn_dim)
        self.out_proj = nn.Conv2d(config.attn_dim, mid, 1)
        self.up1 = nn.ConvTranspose2d(mid, mid, 4, stride=2, padding=1)
        self.up2 = nn.ConvTranspose2d(mid, bc, 4, stride=2, padding=1)
        self.conv_out = nn.Conv2d(bc, config.channels, 3, padding=1)
        self.null_token = nn.Parameter(torch.zeros(d_vocab))
        self.register_buffer(
            "vocab_emb", torch.from_numpy(vocab.embeddings.copy()))

    # -- conditioning -------------------------------------------------------

    def tokens_for(self, c, uncond: bool = False) -> torch.Tensor:
        """Token sequence (2, D): [null, concept] or [null, null] when uncond."""
        if uncond:
            cond = self.null_token
        else:
            if c is None:
                raise KeyError("conditional prediction requires a concept id")
            cond = self.vocab_emb[self.vocab.index(c)]
        return torch.stack([self.null_token.to(cond.dtype), cond], dim=0)

    # -- forward ------------------------------------------------------------

    def forward(self, x: torch.Tensor, t: torch.Tensor, tokens: torch.Tensor):
        """Batched prediction: x (B,C,H,W), t (B,), tokens (B,2,D).

        Returns (eps (B,C,H,W), attn (B,r,r,2)); attention rows sum to 1.
        """
        cfg = self.config
        if x.shape[-1] != cfg.image_size or x.shape[-2] != cfg.image_size:
            raise ValueError(
                f"expected {cfg.image_size}x{cfg.image_size} input, got {tuple(x.shape)}")
        h0 = F.silu(self.norm_in(self.conv_in(x)))
        h1 = F.silu(self.norm_d1(self.down1(h0)))
        h2 = F.silu(self.norm_d2(self.down2(h1)))
        temb = self.time_mlp(sinusoidal_embedding(t.to(x.dtype), cfg.time_dim))
        h2 = h2 + temb[:, :, None, None]
        h2 = F.silu(self.norm_mid(self.mid(h2)))

        B = x.shape[0]
        r = cfg.grid_size
        heads, dh = cfg.n_heads, cfg.attn_dim // cfg.n_heads
        q = self.q_proj(h2).reshape(B, heads, dh, r * r).transpose(2, 3)  # B,h,r2,dh
        k = self.k_proj(tokens).reshape(B, 2, heads, dh).transpose(1, 2)  # B,h,2,dh
        v = self.v_proj(tokens).reshape(B, 2, heads, dh).transpose(1, 2)
        logits = q @ k.transpose(2, 3) / math.sqrt(dh)                    # B,h,r2,2
        attn = torch.softmax(logits, dim=-1)
        ctx = (attn @ v).transpose(2, 3).reshape(B, cfg.attn_dim, r, r)
        h2 = h2 + self.out_proj(ctx)

        u1 = F.silu(self.norm_u1(self.up1(h2))) + h1
        u2 = F.silu(self.norm_u2(self.up2(u1))) + h0
        eps = self.conv_out(u2)
        grid = attn.mean(dim=1).reshape(B, r, r, 2)
        return eps, grid

    # -- single-image API ---------------------------------------------------

    def _check_t(self, t: int) -> None:
        if not 0 <= t <= self.config.max_timestep:
            raise ValueError(f"timestep {t} outside [0, {self.config.max_timestep}]")

    def predict_noise(self, x_t: torch.Tensor, t: int, c=None,
                      uncond: bool = False):
        """Predict noise for one image (C,H,W); returns (noise, (r,r,2) grid).

        Outputs stay attached to the autograd graph only when ``x_t``
        requires grad (the attention-guidance path).
        """
        self._check_t(t)
        tokens = self.tokens_for(c, uncond=uncond)
        tt = torch.tensor([t], dtype=torch.long)
        eps, grid = self.forward(x_t.unsqueeze(0), tt, tokens.unsqueeze(0))
        if not x_t.requires_grad:
            eps, grid = eps.detach(), grid.detach()
        return eps[0], grid[0]

    def cfg_predict(self, x_t: torch.Tensor, t: int, c, guidance_scale: float):
        """Classifier-free guidance: uncond + scale * (cond - uncond).

        Returns the guided noise and the conditional branch's attention grid.
        Both branches run as one batch of two.
        """
        if guidance_scale < 0:
            raise ValueError(f"guidance_scale must be >= 0, got {guidance_scale}")
        self._check_t(t)
        tok_u = self.tokens_for(None, uncond=True)
        tok_c = self.tokens_for(c)
        x2 = torch.stack([x_t, x_t], dim=0)
        tt = torch.tensor([t, t], dtype=torch.long)
        eps, grid = self.forward(x2, tt, torch.stack([tok_u, tok_c], dim=0))
        if not x_t.requires_grad:
            eps, grid = eps.detach(), grid.detach()
        guided = eps[0] + guidance_scale * (eps[1] - eps[0])
        return guided, grid[1]


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12
    batch_size: int = 48
    lr: float = 2e-3
    cond_dropout: float = 0.1
    seed: int = 0
    log_every: int = 20


def train_denoiser(dataset, vocab: ConceptVocab, schedule: DiffusionSchedule,
                   config: TrainConfig, arch: DenoiserConfig | None = None):
    """Epsilon-prediction training with condition dropout.

    Returns (model, loss_log) where loss_log is a list of (step, loss) rows.
    Bit-reproducible for a fixed config on one machine.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    arch = arch or DenoiserConfig(
        image_size=int(dataset.images.shape[-1]),
        channels=int(dataset.images.shape[1]),
        max_timestep=schedule.T,
    )
    gen = torch.Generator().manual_seed(config.seed)
    model = Denoiser(arch, vocab)
    init_parameters(model, gen)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)

    sqrt_ab = torch.sqrt(torch.from_numpy(schedule.alpha_bar).to(torch.float32))
    sqrt_1mab = torch.sqrt(1.0 - torch.from_numpy(schedule.alpha_bar).to(torch.float32))
    images = dataset.images
    labels = torch.from_numpy(dataset.labels)
    vocab_emb = model.vocab_emb

    loss_log = []
    step = 0
    n = len(dataset)
    for _ in range(config.epochs):
        order = torch.randperm(n, generator=gen)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            x0 = images[idx]
            B = x0.shape[0]
            t = torch.randint(1, schedule.T + 1, (B,), generator=gen)
            eps = torch.randn(x0.shape, generator=gen)
            x_t = sqrt_ab[t - 1][:, None, None, None] * x0 \
                + sqrt_1mab[t - 1][:, None, None, None] * eps
            drop = torch.rand(B, generator=gen) < config.cond_dropout
            cond = vocab_emb[labels[idx]]
            null = model.null_token.unsqueeze(0).expand(B, -1)
            tok1 = torch.where(drop[:, None], null, cond)
            tokens = torch.stack([null, tok1], dim=1)

            pred, _ = model(x_t, t, tokens)
            loss = F.mse_loss(pred, eps)
            opt.zero_grad()
            loss.backward()
            opt.step()
            if step % config.log_every == 0:
                loss_log.append((step, float(loss.detach())))
            step += 1
    model.eval()
    return model, loss_log


def attention_loss_details(model: Denoiser, x: torch.Tensor, t: int, tasks,
                           phi: float):
    """Overlap loss probed at (x, t): returns (gradient, loss, pair ratios).

    Probes the conditional attention grid of every task on its viewed copy of
    ``x``, pulls the concept maps back into the canonical frame, and
    differentiates the overlap loss through the probes. Works inside no_grad
    contexts.
    """
    from . import aso, views

    if len(tasks) < 2:
        raise ValueError("attention loss needs at least 2 tasks")
    with torch.enable_grad():
        xg = x.detach().clone().requires_grad_(True)
        maps = []
        for task in tasks:
            xv = views.apply(task.view, xg)
            _, grid = model.predict_noise(xv, t, task.concept)
            maps.append(aso.concept_map(grid, (CONCEPT_CHANNEL,), task.view))
        ratios = [float(aso.overlap_ratio(maps[i], maps[j]).detach())
                  for i in range(len(maps)) for j in range(i + 1, len(maps))]
        loss = aso.anti_seg_loss(maps, phi)
        (grad,) = torch.autograd.grad(loss, xg)
    return grad.detach(), float(loss.detach()), ratios


def attention_loss_gradient(model: Denoiser, x: torch.Tensor, t: int, tasks,
                            phi: float) -> torch.Tensor:
    """Gradient of the attention-overlap loss with respect to the image."""
    return attention_loss_details(model, x, t, tasks, phi)[0]


# -- persistence -------------------------------------------------------------


def save_denoiser(model: Denoiser, path) -> None:
    cfg = dataclasses.asdict(model.config)
    cfg["version"] = 1
    cfg["vocab_names"] = list(model.vocab.names)
    tensors = {name: p.detach().numpy() for name, p in model.state_dict().items()}
    ckpt.save_checkpoint(path, "denoiser", cfg, tensors)


def load_denoiser(path) -> Denoiser:
    kind, cfg, tensors = ckpt.load_checkpoint(path)
    if kind != "denoiser":
        raise ckpt.CheckpointError(f"{path}: expected a denoiser checkpoint, got {kind!r}")
    names = tuple(cfg.pop("vocab_names"))
    cfg.pop("version")
    vocab = ConceptVocab(names=names, embeddings=tensors["vocab_emb"].copy())
    model = Denoiser(DenoiserConfig(**cfg), vocab)
    model.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()})
    model.eval()
    return model

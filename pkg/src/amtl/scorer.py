"""Embedding scorers measuring task completion on clean or noisy images.

A small conv encoder maps images to unit vectors; a learned class-embedding
table stands in for a text encoder. The completion score of (concept, image)
is the cosine of the two unit embeddings.

Two training regimes exist: ``noise_aware`` trains on forward-noised samples
at uniformly random timesteps, so noisy intermediates of the reverse process
are in-distribution; ``vanilla`` trains on clean images only. A separately
seeded, differently sized vanilla scorer serves as the held-out evaluation
embedder and is never read by the generation pipeline.
"""

from __future__ import annotations

import dataclasses

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import checkpoint as ckpt
from .denoiser import init_parameters
from .schedule import DiffusionSchedule

__all__ = ["ScorerConfig", "ScorerTrainConfig", "CompletionScore", "Scorer",
           "train_scorer", "save_scorer", "load_scorer", "REGIMES"]

REGIMES = ("noise_aware", "vanilla")


@dataclasses.dataclass(frozen=True)
class ScorerConfig:
    image_size: int = 32
    channels: int = 1
    base_channels: int = 16
    emb_dim: int = 64
    regime: str = "noise_aware"
    role: str = "pipeline"  # or "evaluation"; a usage tag, enforced by the CLI


@dataclasses.dataclass(frozen=True)
class CompletionScore:
    """Cosine of unit embeddings, in [-1, 1]; view/timestep set by the caller."""

    value: float
    view_index: int | None = None
    timestep: int | None = None


class Scorer(nn.Module):
    """Image encoder plus learned concept rows; all embeddings unit-normalized."""

    def __init__(self, config: ScorerConfig, concept_names):
        super().__init__()
        if config.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {config.regime!r}")
        self.config = config
        self.concept_names = tuple(concept_names)
        bc = config.base_channels
        self.enc = nn.Sequential(
            nn.Conv2d(config.channels, bc, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(bc, bc * 2, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(bc * 2, bc * 4, 3, stride=2, padding=1), nn.SiLU(),
        )
        side = config.image_size // 8
        self.head = nn.Linear(bc * 4 * side * side, config.emb_dim)
        self.concept_table = nn.Parameter(
            torch.zeros(len(self.concept_names), config.emb_dim))

    def concept_index(self, c: str) -> int:
        try:
            return self.concept_names.index(c)
        except ValueError:
            raise KeyError(
                f"unknown concept {c!r}; scorer knows {list(self.concept_names)}") from None

    def embed_batch(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.config.image_size or x.shape[1] != self.config.channels:
            raise ValueError(
                f"scorer trained on {self.config.channels}x{self.config.image_size}"
                f"x{self.config.image_size}, got {tuple(x.shape)}")
        h = self.enc(x)
        e = self.head(h.flatten(1))
        return F.normalize(e, dim=-1)

    def embed_image(self, x: torch.Tensor) -> torch.Tensor:
        """Unit embedding of one (C, H, W) image."""
        with torch.no_grad():
            return self.embed_batch(x.unsqueeze(0))[0]

    def embed_concept(self, c: str) -> torch.Tensor:
        with torch.no_grad():
            return F.normalize(self.concept_table[self.concept_index(c)], dim=-1)

    def completion_score(self, c: str, x: torch.Tensor) -> CompletionScore:
        """Cosine between the concept embedding and the image embedding."""
        value = float(torch.dot(self.embed_concept(c), self.embed_image(x)))
        return CompletionScore(value=value)


@dataclasses.dataclass(frozen=True)
class ScorerTrainConfig:
    steps: int = 1200
    lr: float = 2e-3
    temperature: float = 0.07
    seed: int = 1


def train_scorer(dataset, vocab, schedule: DiffusionSchedule, regime: str,
                 config: ScorerTrainConfig, arch: ScorerConfig | None = None):
    """Contrastive training; returns (scorer, loss_log).

    Each step draws one image per class, noised per the regime (noise_aware:
    forward noise at a uniform timestep in [0, T]; vanilla: clean only), and
    minimizes the symmetric cross-entropy between image and class logits.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}, got {regime!r}")
    arch = arch or ScorerConfig(
        image_size=int(dataset.images.shape[-1]),
        channels=int(dataset.images.shape[1]),
        regime=regime,
    )
    if arch.regime != regime:
        arch = dataclasses.replace(arch, regime=regime)
    gen = torch.Generator().manual_seed(config.seed)
    model = Scorer(arch, vocab.names)
    init_parameters(model, gen)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)

    n_class = len(vocab.names)
    by_class = [torch.nonzero(torch.from_numpy(dataset.labels) == k).flatten()
                for k in range(n_class)]
    if any(len(ix) == 0 for ix in by_class):
        raise ValueError("dataset must contain every vocab class")
    sqrt_ab = torch.sqrt(torch.from_numpy(schedule.alpha_bar).to(torch.float32))
    sqrt_1mab = torch.sqrt(1.0 - torch.from_numpy(schedule.alpha_bar).to(torch.float32))
    targets = torch.arange(n_class)

    loss_log = []
    for step in range(config.steps):
        picks = torch.stack([
            ix[torch.randint(len(ix), (1,), generator=gen)][0] for ix in by_class])
        x0 = dataset.images[picks]
        if regime == "noise_aware":
            t = torch.randint(0, schedule.T + 1, (x0.shape[0],), generator=gen)
            eps = torch.randn(x0.shape, generator=gen)
            clean = t == 0
            a = torch.where(clean, torch.ones(()), sqrt_ab[(t - 1).clamp(min=0)])
            b = torch.where(clean, torch.zeros(()), sqrt_1mab[(t - 1).clamp(min=0)])
            x = a[:, None, None, None] * x0 + b[:, None, None, None] * eps
        else:
            x = x0
        embs = model.embed_batch(x)
        table = F.normalize(model.concept_table, dim=-1)
        logits = embs @ table.T / config.temperature
        loss = 0.5 * (F.cross_entropy(logits, targets)
                      + F.cross_entropy(logits.T, targets))
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % 20 == 0:
            loss_log.append((step, float(loss.detach())))
    model.eval()
    return model, loss_log


def save_scorer(model: Scorer, path) -> None:
    cfg = dataclasses.asdict(model.config)
    cfg["version"] = 1
    cfg["concept_names"] = list(model.concept_names)
    tensors = {name: p.detach().numpy() for name, p in model.state_dict().items()}
    ckpt.save_checkpoint(path, "scorer", cfg, tensors)


def load_scorer(path) -> Scorer:
    kind, cfg, tensors = ckpt.load_checkpoint(path)
    if kind != "scorer":
        raise ckpt.CheckpointError(f"{path}: expected a scorer checkpoint, got {kind!r}")
    names = tuple(cfg.pop("concept_names"))
    cfg.pop("version")
    model = Scorer(ScorerConfig(**cfg), names)
    model.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()})
    model.eval()
    return model

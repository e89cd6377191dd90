"""Small deep-convolutional GAN over 96x96 fingerprints.

Generator: noise -> dense -> 12x12xC -> three stride-2 transposed convolutions
-> 96x96 tanh image. Discriminator mirrors it with stride-2 convolutions and a
dense logit. All randomness comes from ``torch.manual_seed(cfg.seed)`` inside a
forked RNG context, so a (pool, config) pair fixes every output bit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class GanArch:
    noise_dim: int = 64
    base: int = 12
    g_channels: tuple[int, ...] = (32, 16, 8)
    d_channels: tuple[int, ...] = (8, 16, 32)

    @property
    def image_size(self) -> int:
        return self.base * 2 ** len(self.g_channels)


DEFAULT_ARCH = GanArch()
# 8x8 images, one dense and one (transposed) convolution per network
REDUCED_ARCH = GanArch(noise_dim=4, base=4, g_channels=(3,), d_channels=(3,))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1600
    noise_dim: int = 64
    batch_size: int | None = None  # None: full pool
    learning_rate: float = 2e-4
    momentum_decay_1: float = 0.5
    seed: int = 0
    snapshot_window: int = 400
    snapshot_stride: int = 20

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.snapshot_stride < 1 or self.snapshot_window % self.snapshot_stride:
            raise ValueError("snapshot_window must be a positive multiple of snapshot_stride")

    def arch(self) -> GanArch:
        return GanArch(noise_dim=self.noise_dim)


class ConfigError(ValueError):
    pass


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch: int, which: str):
        super().__init__(f"non-finite {which} loss at epoch {epoch}")
        self.epoch = epoch


class Generator(nn.Module):
    def __init__(self, arch: GanArch = DEFAULT_ARCH):
        super().__init__()
        c0 = arch.g_channels[0]
        self.arch = arch
        self.project = nn.Linear(arch.noise_dim, c0 * arch.base * arch.base)
        self.bn0 = nn.BatchNorm2d(c0)
        layers = []
        chans = list(arch.g_channels) + [1]
        for i, (cin, cout) in enumerate(zip(chans[:-1], chans[1:])):
            layers.append(nn.ConvTranspose2d(cin, cout, 4, 2, 1, bias=cout == 1))
            if cout != 1:
                layers += [nn.BatchNorm2d(cout), nn.ReLU()]
        self.body = nn.Sequential(*layers)

    def forward(self, z):
        a = self.arch
        x = self.project(z).view(-1, a.g_channels[0], a.base, a.base)
        x = F.relu(self.bn0(x))
        return torch.tanh(self.body(x))


class Discriminator(nn.Module):
    def __init__(self, arch: GanArch = DEFAULT_ARCH):
        super().__init__()
        layers = []
        chans = [1] + list(arch.d_channels)
        for cin, cout in zip(chans[:-1], chans[1:]):
            layers += [nn.Conv2d(cin, cout, 4, 2, 1), nn.LeakyReLU(0.2)]
        self.body = nn.Sequential(*layers)
        self.head = nn.Linear(arch.d_channels[-1] * arch.base * arch.base, 1)

    def forward(self, x):
        return self.head(self.body(x).flatten(1)).squeeze(1)


def init_weights(module):
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)


def discriminator_loss(d: Discriminator, real, fake):
    real_logits = d(real)
    fake_logits = d(fake)
    return F.binary_cross_entropy_with_logits(
        real_logits, torch.ones_like(real_logits)
    ) + F.binary_cross_entropy_with_logits(fake_logits, torch.zeros_like(fake_logits))


def generator_loss(d: Discriminator, fake):
    """Non-saturating form: -log D(G(z))."""
    logits = d(fake)
    return F.binary_cross_entropy_with_logits(logits, torch.ones_like(logits))


@dataclass
class GeneratorState:
    arch: GanArch
    params: dict
    scale: float

    def module(self) -> Generator:
        g = Generator(self.arch)
        g.load_state_dict(self.params)
        g.eval()
        return g


@dataclass
class TrainTrace:
    generator_loss: list[float] = field(default_factory=list)
    discriminator_loss: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        rows = ["epoch,generator_loss,discriminator_loss"]
        rows += [
            f"{i},{g!r},{d!r}"
            for i, (g, d) in enumerate(zip(self.generator_loss, self.discriminator_loss))
        ]
        return "\n".join(rows) + "\n"


@dataclass
class TrainRun:
    generator: GeneratorState
    trace: TrainTrace
    snapshots: dict  # epoch -> 96x96 image in fingerprint units
    discriminator: Discriminator
    config: TrainConfig


@dataclass
class FakeImageSet:
    images: list
    source_epochs: list
    seed: int


def snapshot_epochs(epochs: int, window: int, stride: int) -> list[int]:
    """Epochs e >= epochs - window with (epochs - 1 - e) divisible by stride."""
    if epochs < window:
        raise ConfigError(f"epochs ({epochs}) must be >= snapshot_window ({window})")
    return [e for e in range(epochs - window, epochs) if (epochs - 1 - e) % stride == 0]


def pool_scale(images) -> float:
    top = max(float(np.max(im)) for im in images)
    return top if top > 0 else 1.0


def to_model(images, scale: float) -> torch.Tensor:
    arr = np.stack([np.asarray(im, dtype=np.float64) for im in images])
    return torch.from_numpy((2.0 * arr / scale - 1.0).astype(np.float32)).unsqueeze(1)


def from_model(x: torch.Tensor, scale: float) -> np.ndarray:
    y = x.detach().squeeze(1).numpy().astype(np.float64)
    return np.clip((y + 1.0) * 0.5, 0.0, 1.0) * scale


def _pool_images(pool):
    members = getattr(pool, "members", pool)
    return [getattr(m, "cells", m) for m in members]


def train(pool, cfg: TrainConfig = TrainConfig(), arch: GanArch | None = None) -> TrainRun:
    """Adversarial training on a pool of fingerprints (or raw 2-D arrays).

    Snapshots of the generator's image for a fixed noise vector are kept at
    the epochs :func:`collect_fakes` will ask for.
    """
    images = _pool_images(pool)
    if not images:
        raise ValueError("cannot train on an empty pool")
    arch = arch or cfg.arch()
    if any(np.shape(im) != (arch.image_size, arch.image_size) for im in images):
        raise ValueError(f"pool images must be {arch.image_size}x{arch.image_size}")
    scale = pool_scale(images)
    try:
        wanted = set(snapshot_epochs(cfg.epochs, cfg.snapshot_window, cfg.snapshot_stride))
    except ConfigError:
        wanted = set()

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        g = Generator(arch)
        d = Discriminator(arch)
        g.apply(init_weights)
        d.apply(init_weights)
        betas = (cfg.momentum_decay_1, 0.999)
        opt_g = torch.optim.Adam(g.parameters(), lr=cfg.learning_rate, betas=betas)
        opt_d = torch.optim.Adam(d.parameters(), lr=cfg.learning_rate, betas=betas)
        real_all = to_model(images, scale)
        n = real_all.shape[0]
        batch = cfg.batch_size or n
        fixed_noise = torch.randn(1, arch.noise_dim)
        trace = TrainTrace()
        snapshots = {}
        for epoch in range(cfg.epochs):
            order = torch.randperm(n) if batch < n else torch.arange(n)
            g_sum = d_sum = 0.0
            steps = 0
            for start in range(0, n, batch):
                real = real_all[order[start : start + batch]]
                m = real.shape[0]
                z = torch.randn(m, arch.noise_dim)
                opt_d.zero_grad()
                loss_d = discriminator_loss(d, real, g(z).detach())
                loss_d.backward()
                opt_d.step()

                z = torch.randn(m, arch.noise_dim)
                opt_g.zero_grad()
                loss_g = generator_loss(d, g(z))
                loss_g.backward()
                opt_g.step()
                d_sum += loss_d.item()
                g_sum += loss_g.item()
                steps += 1
            if not math.isfinite(d_sum):
                raise TrainingDivergence(epoch, "discriminator")
            if not math.isfinite(g_sum):
                raise TrainingDivergence(epoch, "generator")
            trace.discriminator_loss.append(d_sum / steps)
            trace.generator_loss.append(g_sum / steps)
            if epoch in wanted:
                g.eval()
                with torch.no_grad():
                    snapshots[epoch] = from_model(g(fixed_noise), scale)[0]
                g.train()

    state = GeneratorState(arch, {k: v.clone() for k, v in g.state_dict().items()}, scale)
    d.eval()
    return TrainRun(state, trace, snapshots, d, cfg)


def generate(generator: GeneratorState, noise_seed: int) -> np.ndarray:
    """One image in fingerprint units, ``[0, scale]``, from a seeded noise draw."""
    gen = torch.Generator().manual_seed(noise_seed)
    z = torch.randn(1, generator.arch.noise_dim, generator=gen)
    with torch.no_grad():
        out = generator.module()(z)
    return from_model(out, generator.scale)[0]


def untrained_generator(seed: int = 0, arch: GanArch = DEFAULT_ARCH, scale: float = 1.0) -> GeneratorState:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        g = Generator(arch)
        g.apply(init_weights)
    return GeneratorState(arch, g.state_dict(), scale)


def collect_fakes(run: TrainRun, cfg: TrainConfig | None = None) -> FakeImageSet:
    cfg = cfg or run.config
    epochs = snapshot_epochs(cfg.epochs, cfg.snapshot_window, cfg.snapshot_stride)
    missing = [e for e in epochs if e not in run.snapshots]
    if missing:
        raise ConfigError(f"run has no snapshot for epochs {missing[:3]}")
    return FakeImageSet([run.snapshots[e] for e in epochs], epochs, cfg.seed)


def discriminator_scores(run: TrainRun, images) -> np.ndarray:
    """Discriminator logits for images given in fingerprint units."""
    with torch.no_grad():
        return run.discriminator(to_model(images, run.generator.scale)).numpy()


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)


def save_generator(state: GeneratorState, path) -> None:
    torch.save({"arch": asdict(state.arch), "params": state.params, "scale": state.scale}, path)


def load_generator(path) -> GeneratorState:
    blob = torch.load(path, weights_only=True)
    arch = blob["arch"]
    arch = GanArch(arch["noise_dim"], arch["base"], tuple(arch["g_channels"]), tuple(arch["d_channels"]))
    return GeneratorState(arch, blob["params"], float(blob["scale"]))

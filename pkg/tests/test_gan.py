import numpy as np
import pytest
import torch

from imbfp.fingerprint import Fingerprint
from imbfp.gan import (
    REDUCED_ARCH,
    ConfigError,
    Discriminator,
    Generator,
    TrainConfig,
    collect_fakes,
    discriminator_loss,
    discriminator_scores,
    from_model,
    generate,
    generator_loss,
    init_weights,
    load_generator,
    save_generator,
    snapshot_epochs,
    to_model,
    train,
    untrained_generator,
)


def blob(center, size=96, width=8.0, height=10.0):
    y, x = np.mgrid[:size, :size]
    return height * np.exp(-((x - center[0]) ** 2 + (y - center[1]) ** 2) / (2 * width**2))


def test_snapshot_epoch_arithmetic():
    e = snapshot_epochs(1600, 400, 20)
    assert e == list(range(1219, 1600, 20))
    assert len(e) == 20 and e[-1] == 1599
    e = snapshot_epochs(400, 400, 20)
    assert len(e) == 20 and e[0] == 19
    with pytest.raises(ConfigError):
        snapshot_epochs(399, 400, 20)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(snapshot_window=400, snapshot_stride=30)


def test_one_epoch_smoke():
    run = train([blob((40, 40))], TrainConfig(epochs=1))
    assert len(run.trace.generator_loss) == len(run.trace.discriminator_loss) == 1
    with pytest.raises(ConfigError):
        collect_fakes(run)


def test_fingerprint_pool_accepted():
    pool = [Fingerprint(blob((30, 50)), "d", "market")]
    run = train(pool, TrainConfig(epochs=2))
    assert run.generator.scale == pytest.approx(blob((30, 50)).max())


def test_rejects_bad_pools():
    with pytest.raises(ValueError):
        train([], TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        train([np.zeros((32, 32))], TrainConfig(epochs=1))


def test_seeded_determinism_of_fakes():
    pool = [blob((30, 30)), blob((60, 60))]
    cfg = TrainConfig(epochs=40, snapshot_window=20, snapshot_stride=5, seed=3)
    a, b = train(pool, cfg), train(pool, cfg)
    assert a.trace.generator_loss == b.trace.generator_loss
    assert a.trace.discriminator_loss == b.trace.discriminator_loss
    fa, fb = collect_fakes(a), collect_fakes(b)
    assert fa.source_epochs == fb.source_epochs == [24, 29, 34, 39]
    assert all(x.tobytes() == y.tobytes() for x, y in zip(fa.images, fb.images))
    c = train(pool, TrainConfig(epochs=40, snapshot_window=20, snapshot_stride=5, seed=4))
    assert c.trace.generator_loss != a.trace.generator_loss


def test_training_leaves_global_rng_alone():
    torch.manual_seed(123)
    expected = torch.rand(3)
    torch.manual_seed(123)
    train([blob((30, 30))], TrainConfig(epochs=2))
    assert torch.equal(torch.rand(3), expected)


def test_fakes_shape_and_range():
    pool = [blob((30, 30)), blob((50, 70))]
    cfg = TrainConfig(epochs=30, snapshot_window=20, snapshot_stride=1)
    fakes = collect_fakes(train(pool, cfg))
    assert len(fakes.images) == 20
    top = max(p.max() for p in pool)
    for img in fakes.images:
        assert img.shape == (96, 96) and np.isfinite(img).all()
        assert img.min() >= 0 and img.max() <= top


def test_generate_range_over_seeds():
    state = untrained_generator(seed=1, scale=7.5)
    for s in range(100):
        img = generate(state, s)
        assert img.shape == (96, 96) and np.isfinite(img).all()
        assert 0.0 <= img.min() and img.max() <= 7.5
    assert np.array_equal(generate(state, 5), generate(state, 5))


def test_model_scaling_round_trip():
    img = blob((20, 20))
    x = to_model([img], img.max())
    assert x.dtype == torch.float32 and float(x.min()) >= -1 and float(x.max()) <= 1
    assert np.allclose(from_model(x, img.max())[0], img, atol=1e-5)


def test_save_and_load_generator(tmp_path):
    state = untrained_generator(seed=2, scale=3.0)
    save_generator(state, tmp_path / "g.pt")
    back = load_generator(tmp_path / "g.pt")
    assert back.arch == state.arch and back.scale == 3.0
    assert np.array_equal(generate(back, 9), generate(state, 9))


def test_discriminator_separates_real_from_other():
    a = [blob((25, 25)) for _ in range(3)]
    b = [blob((70, 70))]
    run = train(a, TrainConfig(epochs=150, seed=0, snapshot_window=100, snapshot_stride=20))
    sa = discriminator_scores(run, a).mean()
    sb = discriminator_scores(run, b).mean()
    assert sa > sb


@pytest.mark.slow
def test_long_run_properties():
    rng = np.random.default_rng(0)
    pool = [blob((rng.integers(20, 76), rng.integers(20, 76))) for _ in range(5)]
    run = train(pool, TrainConfig(epochs=1600, seed=1))
    assert np.isfinite(np.mean(run.trace.discriminator_loss[-100:]))
    fakes = collect_fakes(run)
    assert len(fakes.images) == 20 and fakes.source_epochs[-1] == 1599
    assert np.var(fakes.images[-1]) > 0


def fd_relative_error(model, loss_fn, h=1e-6):
    """Max over parameter tensors of the relative error between autograd and central differences."""
    params = list(model.parameters())
    model.zero_grad()
    loss_fn().backward()
    worst = 0.0
    for p in params:
        analytic = p.grad.detach().clone()
        numeric = torch.zeros_like(p)
        flat, nflat = p.data.view(-1), numeric.view(-1)
        for i in range(flat.numel()):
            old = flat[i].item()
            flat[i] = old + h
            with torch.no_grad():
                up = loss_fn().item()
            flat[i] = old - h
            with torch.no_grad():
                down = loss_fn().item()
            flat[i] = old
            nflat[i] = (up - down) / (2 * h)
        scale = max(analytic.norm().item(), numeric.norm().item(), 1e-12)
        worst = max(worst, (analytic - numeric).norm().item() / scale)
    return worst


def test_gradient_check_reduced_model():
    torch.manual_seed(0)
    g = Generator(REDUCED_ARCH).double()
    d = Discriminator(REDUCED_ARCH).double()
    size = REDUCED_ARCH.image_size
    real = torch.rand(4, 1, size, size, dtype=torch.float64) * 2 - 1
    z = torch.randn(4, REDUCED_ARCH.noise_dim, dtype=torch.float64)
    # train-mode batch norm: running statistics never feed back into the output
    fake = g(z).detach()
    assert fd_relative_error(d, lambda: discriminator_loss(d, real, fake)) < 1e-4
    assert fd_relative_error(g, lambda: generator_loss(d, g(z))) < 1e-4


def test_init_weights_distribution():
    torch.manual_seed(0)
    g = Generator()
    g.apply(init_weights)
    w = g.project.weight.detach()
    assert abs(w.mean().item()) < 1e-3 and abs(w.std().item() - 0.02) < 1e-3

import numpy as np
import pytest

from ssagan.autograd import Tensor
from ssagan.errors import ConfigurationError, DimensionError
from ssagan.gradcheck import grad_check
from ssagan.model import ModelConfig, NoiseSource, build_model, expected_param_count, init_params
from ssagan.verify import FixedNoise, tiny_model


def small_config(**kw):
    base = dict(frame_shape=(6,), k=4, d=8, m=3, noise_dim=3, enc_widths=(10, 8), fusion_width=7,
                trunk_width=9)
    base.update(kw)
    return ModelConfig(**base).validate()


def forward_inputs(cfg, n=5, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n,) + cfg.frame_shape)
    z = NoiseSource(cfg, seed).sample(n)
    c = rng.standard_normal((n, cfg.d)) * 0.5
    return x, z, c


def test_generator_shapes_and_range():
    cfg = small_config()
    model = build_model(cfg, 0)
    x, z, c = forward_inputs(cfg)
    code, s = model.gen.forward(x, z, c)
    assert code.shape == (5, cfg.k) and s.shape == (5, cfg.d)
    assert np.all((code.data > 0) & (code.data < 1))


def test_generator_is_deterministic_with_zero_context():
    cfg = small_config()
    model = build_model(cfg, 0)
    x, z, _ = forward_inputs(cfg)
    c = np.zeros((5, cfg.d))
    a = model.gen.forward(x, z, c)[0].data
    b = model.gen.forward(x, z, c)[0].data
    assert np.array_equal(a, b)


def test_noise_changes_codes():
    cfg = small_config()
    model = build_model(cfg, 0)
    x, _, c = forward_inputs(cfg, n=1)
    noise = NoiseSource(cfg, 9)
    base = model.gen.forward(x, noise.sample(1), c)[0].data
    differing = sum(not np.array_equal(base, model.gen.forward(x, noise.sample(1), c)[0].data)
                    for _ in range(10))
    assert differing >= 1


def test_dropout_noise_mode():
    cfg = small_config(noise_mode="dropout")
    model = build_model(cfg, 0)
    x, z, c = forward_inputs(cfg)
    assert z.shape == (5, cfg.fusion_width)
    assert model.gen.forward(x, z, c)[0].shape == (5, cfg.k)
    assert np.array_equal(NoiseSource(cfg).neutral(2), np.ones((2, cfg.fusion_width)))


def test_discriminator_heads():
    cfg = small_config()
    model = build_model(cfg, 0)
    x, z, c = forward_inputs(cfg)
    code = model.gen.forward(x, z, c)[0]
    real, probs = model.disc.forward(x, code)
    assert real.shape == (5,) and np.all((real.data > 0) & (real.data < 1))
    assert np.max(np.abs(probs.data.sum(axis=1) - 1)) < 1e-12


def test_discriminator_consumes_the_code():
    cfg = small_config()
    model = build_model(cfg, 0)
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 6))
    code = rng.random((5, cfg.k))
    real0, probs0 = model.disc.forward(x, code)
    for _ in range(10):
        real1, probs1 = model.disc.forward(x, code + rng.normal(0, 0.1, code.shape))
        assert np.abs(real1.data - real0.data).max() > 0
        assert np.abs(probs1.data - probs0.data).max() > 0


def test_frame_only_classifier_ignores_code():
    cfg = small_config(classifier_input="frame")
    model = build_model(cfg, 0)
    rng = np.random.default_rng(4)
    x = rng.standard_normal((5, 6))
    a = model.disc.forward(x, rng.random((5, cfg.k)))[1].data
    b = model.disc.forward(x, rng.random((5, cfg.k)))[1].data
    assert np.array_equal(a, b)


def test_image_frames():
    cfg = ModelConfig(frame_shape=(1, 8, 8), k=3, d=0, m=2, noise_dim=2, enc_widths=(2, 3),
                      fusion_width=5, trunk_width=5)
    cfg.d = cfg.encoder_output_dim()
    cfg.validate()
    assert cfg.d == 3 * 2 * 2
    model = build_model(cfg, 1)
    x = np.random.default_rng(0).standard_normal((4, 1, 8, 8))
    code, s = model.gen.forward(x, NoiseSource(cfg, 0).sample(4), np.zeros((4, cfg.d)), train=True)
    assert code.shape == (4, 3) and s.shape == (4, cfg.d)
    assert model.n_params() == expected_param_count(cfg)


def test_same_seed_same_parameters():
    cfg = small_config()
    a, b = build_model(cfg, 5), build_model(cfg, 5)
    for (na, pa), (nb, pb) in zip(a.parameters().items(), b.parameters().items()):
        assert na == nb and np.array_equal(pa.data, pb.data)
    c = build_model(cfg, 6)
    assert not np.array_equal(a.gen.p("fuse.W").data, c.gen.p("fuse.W").data)


@pytest.mark.parametrize("kw", [
    {}, {"gate_mode": "vector"}, {"context": "lstm"}, {"context": "none"}, {"m": 0},
    {"gen_class_head": True}, {"classifier_input": "frame"}, {"noise_mode": "dropout"},
])
def test_parameter_count_closed_form(kw):
    cfg = small_config(**kw)
    assert build_model(cfg, 0).n_params() == expected_param_count(cfg)


def test_config_errors():
    with pytest.raises(ConfigurationError):
        small_config(k=0)
    with pytest.raises(ConfigurationError):
        small_config(d=5)  # encoder emits 8
    with pytest.raises(ConfigurationError):
        small_config(context="transformer")
    with pytest.raises(ConfigurationError):
        init_params(ModelConfig(frame_shape=(6,), k=1, d=64), 0)


def test_context_shape_contract():
    cfg = small_config()
    model = build_model(cfg, 0)
    x, z, _ = forward_inputs(cfg)
    with pytest.raises(DimensionError):
        model.gen.forward(x, z, np.zeros((5, cfg.d + 1)))


def test_adding_a_head_leaves_other_parameters_alone():
    base = build_model(small_config(), 3)
    headed = build_model(small_config(gen_class_head=True), 3)
    for name, p in base.parameters().items():
        assert np.array_equal(p.data, headed.parameters()[name].data)
    x, z, c = forward_inputs(base.config)
    a = base.gen.forward(x, z, c)[0]
    b = headed.gen.forward(x, z, c)[0]
    assert np.array_equal(a.data, b.data)
    assert np.array_equal(base.disc.forward(x, a)[0].data, headed.disc.forward(x, b)[0].data)


def test_end_to_end_gradient_tiny_config():
    model = tiny_model(d=4, m=3, k=3, seed=2)
    rng = np.random.default_rng(5)
    x = rng.standard_normal((6, 5))
    noise = FixedNoise(rng.standard_normal((6, model.config.noise_dim)))
    entries = rng.standard_normal((6, 3, 4))
    R = Tensor(rng.standard_normal(6))

    def f():
        c = model.context(entries)
        code, _ = model.gen.forward(x, noise.sample(6), c, train=True)
        real, probs = model.disc.forward(x, code, train=True)
        return (real * R).sum() + probs.sum(axis=0).sum() * 0.0 + (probs * probs).sum()

    rep = grad_check(f, list(model.parameters().values()))
    assert rep.passed, rep


def test_batch_norm_buffers_round_trip():
    model = build_model(small_config(), 0)
    x, z, c = forward_inputs(model.config, n=8)
    model.gen.forward(x, z, c, train=True, update_stats=True)
    bufs = {k: v.copy() for k, v in model.buffers().items()}
    other = build_model(small_config(), 0)
    other.load_buffers(bufs)
    for k, v in other.buffers().items():
        assert np.array_equal(v, bufs[k])

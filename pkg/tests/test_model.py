import numpy as np
import pytest

from doh.model import (
    GradientSet,
    ModelConfig,
    TargetWeights,
    backward,
    forward,
    init_mlp,
    param_count,
    render_image,
)
from doh.numerics import RngStream
from doh.signals import PositionalEncodingSpec

PE10 = PositionalEncodingSpec(10)

# (width, hidden) -> params, from the occupancy benchmark table (d=3, out=1)
TABLE_PLAIN = {(20, 4): 1781, (30, 4): 3871, (28, 9): 7449, (40, 9): 14961}
TABLE_PE = {(20, 4): 2981, (30, 4): 5671, (28, 9): 9129, (40, 9): 17361}


@pytest.mark.parametrize("arch,expected", sorted(TABLE_PLAIN.items()))
def test_param_count_plain(arch, expected):
    w, h = arch
    assert param_count(ModelConfig(3, 1, w, h)) == expected


@pytest.mark.parametrize("arch,expected", sorted(TABLE_PE.items()))
def test_param_count_with_encoding(arch, expected):
    w, h = arch
    assert param_count(ModelConfig(3, 1, w, h, encoding=PE10)) == expected


def test_param_count_pe_delta_is_input_weights():
    base = param_count(ModelConfig(3, 1, 40, 9))
    lifted = param_count(ModelConfig(3, 1, 40, 9, encoding=PE10))
    assert lifted - base == 40 * (PE10.encoded_dim(3) - 3)  # 2400


def test_layer_shapes():
    cfg = ModelConfig(2, 3, 8, 2)
    assert cfg.layer_shapes() == [(8, 2), (8, 8), (8, 8), (3, 8)]
    cfg_pe = ModelConfig(2, 3, 8, 0, encoding=PositionalEncodingSpec(2))
    assert cfg_pe.layer_shapes() == [(8, 10), (3, 8)]


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(0, 1, 4, 1)
    with pytest.raises(ValueError):
        ModelConfig(2, 1, 0, 1)
    with pytest.raises(ValueError):
        ModelConfig(2, 1, 4, -1)
    with pytest.raises(ValueError):
        ModelConfig(2, 1, 4, 1, omega=0.0)


def _zero_weights(cfg: ModelConfig, out_bias: float = 0.5) -> TargetWeights:
    ws, bs = [], []
    for l, (fo, fi) in enumerate(cfg.layer_shapes()):
        ws.append(np.zeros((fo, fi)))
        b = np.zeros(fo)
        if l == cfg.n_layers - 1:
            b[:] = out_bias
        bs.append(b)
    return TargetWeights(weights=ws, biases=bs)


def test_forward_constant_output_with_zero_weights():
    cfg = ModelConfig(2, 3, 8, 1)
    w = _zero_weights(cfg)
    out = forward(w, cfg, np.array([[0.1, -0.9], [1.0, 1.0]]))
    assert np.allclose(out, 0.5)


def test_hidden_activations_bounded():
    cfg = ModelConfig(2, 1, 16, 2)
    w = init_mlp(cfg, RngStream(3))
    # scale weights up: activations still live in [-1, 1]
    for m in w.weights[:-1]:
        m *= 50.0
    from doh.model import _forward_trace
    coords = np.random.default_rng(0).uniform(-1, 1, (40, 2))
    inputs, _, _ = _forward_trace(w, cfg, coords)
    for x in inputs[1:]:
        assert np.all(np.abs(x) <= 1.0)


def test_single_hidden_forward_matches_hand_computation():
    # hidden=0: y = W1 sin(omega (W0 x + h0)) + h1 on a fixed 2x2 instance
    cfg = ModelConfig(2, 2, 2, 0, omega=3.0)
    w0 = np.array([[0.1, -0.2], [0.3, 0.05]])
    h0 = np.array([0.01, -0.02])
    w1 = np.array([[1.0, 0.5], [-0.25, 2.0]])
    h1 = np.array([0.5, -0.5])
    weights = TargetWeights(weights=[w0, w1], biases=[h0, h1])
    x = np.array([0.4, -0.6])
    hidden = np.sin(3.0 * (w0 @ x + h0))
    expected = w1 @ hidden + h1
    got = forward(weights, cfg, x)
    assert np.array_equal(got, expected)


def test_forward_shape_mismatch():
    cfg = ModelConfig(2, 1, 4, 0)
    w = init_mlp(cfg, RngStream(0))
    with pytest.raises(ValueError):
        forward(w, cfg, np.zeros((3, 5)))
    bad = TargetWeights(weights=[np.zeros((4, 3))] + w.weights[1:], biases=w.biases)
    with pytest.raises(ValueError):
        forward(bad, cfg, np.zeros((3, 2)))


def test_backward_constant_output_loss_and_bias_gradient():
    cfg = ModelConfig(2, 1, 6, 1)
    w = _zero_weights(cfg)
    coords = np.array([[0.0, 0.0], [0.5, -0.5]])
    targets = np.zeros((2, 1))
    loss, grads = backward(w, cfg, coords, targets)
    assert abs(loss - 0.25) < 1e-15
    # d(mean (y-t)^2)/db_out = 2 * 0.5 * N / (N*out) = 1.0
    assert np.allclose(grads.biases[-1], 1.0)


def test_backward_rejects_empty_batch():
    cfg = ModelConfig(2, 1, 4, 0)
    w = init_mlp(cfg, RngStream(0))
    with pytest.raises(ValueError):
        backward(w, cfg, np.zeros((0, 2)), np.zeros((0, 1)))


def test_backward_duplicating_batch_is_invariant():
    cfg = ModelConfig(2, 3, 5, 1)
    w = init_mlp(cfg, RngStream(5))
    rng = np.random.default_rng(6)
    coords = rng.uniform(-1, 1, (7, 2))
    targets = rng.uniform(0, 1, (7, 3))
    loss1, g1 = backward(w, cfg, coords, targets)
    loss2, g2 = backward(w, cfg, np.tile(coords, (2, 1)), np.tile(targets, (2, 1)))
    assert abs(loss1 - loss2) < 1e-14
    for a, b in zip(g1.weights, g2.weights):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


def _finite_difference_check(cfg: ModelConfig, seed: int, probes: int = 60) -> float:
    w = init_mlp(cfg, RngStream(seed))
    rng = np.random.default_rng(seed)
    coords = rng.uniform(-1, 1, (9, cfg.in_dim))
    targets = rng.uniform(0, 1, (9, cfg.out_dim))
    _, grads = backward(w, cfg, coords, targets)

    flats = []
    for l in range(cfg.n_layers):
        flats.append(("w", l))
        flats.append(("b", l))
    worst = 0.0
    h = 1e-5
    for _ in range(probes):
        kind, l = flats[rng.integers(0, len(flats))]
        arr = w.weights[l] if kind == "w" else w.biases[l]
        g = grads.weights[l] if kind == "w" else grads.biases[l]
        idx = tuple(rng.integers(0, s) for s in arr.shape)
        orig = arr[idx]
        arr[idx] = orig + h
        lp, _ = backward(w, cfg, coords, targets)
        arr[idx] = orig - h
        lm, _ = backward(w, cfg, coords, targets)
        arr[idx] = orig
        fd = (lp - lm) / (2 * h)
        denom = max(abs(fd), abs(g[idx]), 1e-8)
        worst = max(worst, abs(fd - g[idx]) / denom)
    return worst


@pytest.mark.parametrize("hidden", [0, 1, 2, 3])
@pytest.mark.parametrize("enc", [None, PositionalEncodingSpec(2)])
def test_gradients_match_finite_differences(hidden, enc):
    cfg = ModelConfig(2, 3, 8, hidden, encoding=enc)
    assert _finite_difference_check(cfg, seed=1234 + hidden) < 1e-4


def test_init_variances_match_targets():
    # wide shallow config gives >= 1e5 entries per layer class
    cfg = ModelConfig(3, 1, 340, 1)
    w = init_mlp(cfg, RngStream(2))
    v0 = w.weights[0].var()
    target0 = 1.0 / (3.0 * cfg.encoded_dim ** 2)
    assert abs(v0 / target0 - 1) < 0.05
    v1 = w.weights[1].var()
    target1 = 1.0 / (3.0 * cfg.omega ** 2 * cfg.width)
    assert abs(v1 / target1 - 1) < 0.05


def test_init_bias_conventions():
    cfg = ModelConfig(2, 3, 8, 2)
    w = init_mlp(cfg, RngStream(77))
    for b in w.biases[:-1]:
        assert np.all(b == 0.0)
    assert np.all(w.biases[-1] == 0.5)


def test_init_deterministic():
    cfg = ModelConfig(2, 3, 8, 2)
    a = init_mlp(cfg, RngStream(9))
    b = init_mlp(cfg, RngStream(9))
    for x, y in zip(a.weights, b.weights):
        assert np.array_equal(x, y)


def test_render_image_clamps():
    cfg = ModelConfig(2, 3, 4, 0)
    w = _zero_weights(cfg, out_bias=2.0)
    img = render_image(w, cfg, 3, 3)
    assert np.all(img.values == 1.0)


def test_gradient_set_shapes_match():
    cfg = ModelConfig(2, 2, 5, 1)
    w = init_mlp(cfg, RngStream(1))
    _, g = backward(w, cfg, np.zeros((2, 2)), np.zeros((2, 2)))
    assert isinstance(g, GradientSet)
    for gw, ww in zip(g.weights, w.weights):
        assert gw.shape == ww.shape
    for gb, wb in zip(g.biases, w.biases):
        assert gb.shape == wb.shape

import math

import numpy as np
import pytest

from affectanim.nn import (
    Adam,
    LayerConfig,
    Network,
    TrainConfig,
    build_dern,
    build_dsrn,
    cross_entropy,
    dern_layers,
    dsrn_layers,
    fit,
    mse,
    one_hot,
)
from affectanim.nn.gradcheck import check_network, numerical_gradient, relative_error

F64 = np.float64


def isolated(kind_layers, input_shape, seed=0):
    return Network(kind_layers, input_shape, seed=seed, dtype=F64)


def jitter_biases(net, seed=0):
    # zero biases put whole windows exactly on the ReLU kink; move them off it
    rng = np.random.default_rng(seed)
    for name, p in net.named_parameters():
        if name.endswith(".b"):
            p[...] = rng.uniform(-0.1, 0.1, p.shape)
    return net


LAYER_CASES = {
    "conv": ([LayerConfig("conv", 3, (3, 2))], (5, 4, 2)),
    "conv_even": ([LayerConfig("conv", 2, (4, 1))], (6, 3, 1)),
    "maxpool": ([LayerConfig("maxpool", filter=(3, 3), stride=(2, 2))], (7, 5, 2)),
    "maxpool_freq": ([LayerConfig("maxpool", filter=(2, 1), stride=(2, 1))], (5, 3, 2)),
    "fc": ([LayerConfig("flatten"), LayerConfig("fc", 4)], (3, 2, 1)),
    "relu": ([LayerConfig("relu")], (4, 3, 2)),
    "softmax": ([LayerConfig("flatten"), LayerConfig("softmax")], (6, 1, 1)),
    "dropout": ([LayerConfig("flatten"), LayerConfig("dropout", rate=0.5)], (4, 3, 1)),
    "flatten": ([LayerConfig("flatten")], (2, 3, 2)),
}


@pytest.mark.parametrize("name", sorted(LAYER_CASES))
def test_layer_gradients(name):
    layers, shape = LAYER_CASES[name]
    net = jitter_biases(isolated(layers, shape))
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3,) + shape)
    target = rng.normal(size=(3,) + net.output_shape)
    report = check_network(net, x, mse, target)
    assert max(report.values()) < 1e-4, report


def test_two_conv_toy_net():
    layers = [
        LayerConfig("conv", 3, (3, 3)), LayerConfig("relu"),
        LayerConfig("conv", 2, (3, 1)), LayerConfig("relu"),
        LayerConfig("flatten"), LayerConfig("fc", 3), LayerConfig("softmax"),
    ]
    net = jitter_biases(isolated(layers, (6, 5, 1), seed=2))
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 6, 5, 1))
    report = check_network(net, x, cross_entropy, one_hot([0, 1, 2, 1], 3, F64))
    assert max(report.values()) < 1e-4, report


def test_identity_conv():
    net = isolated([LayerConfig("conv", 1, (1, 1))], (5, 4, 1))
    net.layers[0].params["W"][...] = 1.0
    x = np.random.default_rng(0).normal(size=(2, 5, 4, 1))
    assert np.array_equal(net.forward(x), x)


def test_zero_upstream_gradient():
    net = build_dern(seed=0, dtype=F64, widths=(2, 2, 2), fc=4)
    x = np.random.default_rng(0).normal(size=(2, 40, 15, 1))
    out = net.forward(x, train=True)
    net.backward(np.zeros_like(out))
    assert all(np.all(g == 0) for g in net.gradients())


def test_dense_gradient_is_outer_product():
    net = isolated([LayerConfig("fc", 3)], (4,))
    x = np.array([[1.0, -2.0, 0.5, 3.0]])
    net.forward(x, train=True)
    dy = np.array([[0.2, -1.0, 4.0]])
    net.backward(dy)
    assert np.allclose(net.layers[0].grads["W"], np.outer(x[0], dy[0]))
    assert np.allclose(net.layers[0].grads["b"], dy[0])


def test_backward_needs_training_pass():
    net = isolated([LayerConfig("relu")], (2, 2, 1))
    net.forward(np.ones((1, 2, 2, 1)))
    with pytest.raises(RuntimeError):
        net.backward(np.ones((1, 2, 2, 1)))


def test_input_shape_mismatch():
    net = build_dern(seed=0, widths=(2, 2, 2), fc=4)
    with pytest.raises(ValueError):
        net.forward(np.zeros((1, 40, 13, 1)))


def test_dern_shape_chain():
    net = build_dern(seed=0)
    spatial = [s for s in net.shapes if len(s) == 3]
    assert spatial == [
        (40, 15, 1), (40, 15, 32), (40, 15, 32), (20, 8, 32), (20, 8, 64), (20, 8, 64),
        (10, 4, 64), (10, 4, 128), (10, 4, 128), (5, 2, 128),
    ]
    flat = [s[0] for s in net.shapes if len(s) == 1]
    assert flat[0] == 1280 and 256 in flat and net.output_shape == (7,)


def test_dsrn_shape_chain():
    net = build_dsrn(seed=0)
    convs = [net.shapes[i + 1] for i, c in enumerate(net.configs) if c.kind in ("conv", "maxpool")]
    assert convs == [
        (40, 15, 32), (20, 15, 32), (20, 15, 64), (10, 15, 64),
        (10, 15, 128), (5, 15, 128), (5, 15, 128), (3, 15, 128),
    ]
    flat = [s[0] for s in net.shapes if len(s) == 1]
    assert flat[:1] == [5760] and 1024 in flat and 500 in flat
    assert net.output_shape == (90,)
    out = net.forward(np.zeros((2, 40, 15, 1)))
    assert out.shape == (2, 90)


def test_dsrn_is_frequency_only():
    for c in dsrn_layers():
        if c.kind in ("conv", "maxpool"):
            assert c.filter[1] == 1
        if c.kind == "maxpool":
            assert c.stride[1] == 1


def test_dropout_only_after_fc():
    for layers in (dern_layers(), dsrn_layers()):
        kinds = [c.kind for c in layers]
        for i, k in enumerate(kinds):
            if k == "dropout":
                assert kinds[i - 1] == "relu" and kinds[i - 2] == "fc"
        assert all(c.rate == 0.5 for c in layers if c.kind == "dropout")
    assert [c.kind for c in dern_layers()].count("dropout") == 1


def test_dropout_statistics():
    net = isolated([LayerConfig("dropout", rate=0.5)], (20000,), seed=3)
    x = np.full((5, 20000), 1.5)
    assert np.array_equal(net.forward(x), x)
    out = net.forward(x, train=True)
    n = out.size
    # each unit is 0 or 3 with equal odds, so std per draw is 1.5
    assert abs(out.mean() - 1.5) < 3 * 1.5 / math.sqrt(n)
    assert set(np.unique(out)) <= {0.0, 3.0}


def test_softmax_and_uniform_cross_entropy():
    net = isolated([LayerConfig("softmax")], (7,))
    p = net.forward(np.zeros((1, 7)))
    assert np.allclose(p, 1 / 7)
    loss, _ = cross_entropy(p, one_hot([4], 7, F64))
    assert abs(loss - math.log(7)) < 1e-12
    z = np.random.default_rng(0).normal(size=(50, 7)) * 30
    q = net.forward(z)
    assert np.all(q > 0) and np.allclose(q.sum(axis=1), 1, atol=1e-9)


def test_mse_loss():
    y = np.random.default_rng(0).normal(size=(4, 6))
    loss, grad = mse(y, y)
    assert loss == 0 and np.all(grad == 0)
    pred = np.random.default_rng(1).normal(size=(4, 6))
    _, grad = mse(pred, y)
    num = numerical_gradient(lambda: mse(pred, y)[0], pred)
    assert relative_error(grad, num).max() < 1e-8


def test_adam_zero_gradient():
    w = np.array([1.0, -2.0, 3.0])
    opt = Adam([w])
    for _ in range(100):
        opt.step([np.zeros(3)])
    assert np.array_equal(w, [1.0, -2.0, 3.0])


def test_adam_bowl():
    c = np.array([1.5, -0.7, 3.0, 0.2])
    w = np.zeros(4)
    opt = Adam([w], lr=0.05)
    for _ in range(2000):
        opt.step([2 * (w - c)])
    assert np.linalg.norm(w - c) < 1e-3


def test_adam_first_step():
    w = np.zeros(5)
    g = np.array([3.0, -0.01, 100.0, -7.0, 0.5])
    Adam([w], lr=0.01).step([g])
    assert np.allclose(w, -0.01 * np.sign(g), rtol=1e-5)


def test_adam_shape_check():
    opt = Adam([np.zeros(3)])
    with pytest.raises(ValueError):
        opt.step([np.zeros(4)])


def _tiny_dsrn(seed):
    return build_dsrn(seed=seed, n_params=2, kv=3, widths=(2, 2, 2, 2), fc=(8, 8))


def test_training_is_bit_reproducible(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 40, 15, 1)).astype(np.float32)
    y = rng.normal(size=(40, 6)).astype(np.float32)
    paths = []
    for k in range(2):
        net = _tiny_dsrn(7)
        fit(net, x, y, "regress", TrainConfig(epochs=3, batch_size=16, seed=5))
        paths.append(tmp_path / f"m{k}.model")
        net.save(paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_model_file_roundtrip(tmp_path):
    net = _tiny_dsrn(3)
    net.save(tmp_path / "a.model")
    back = Network.load(tmp_path / "a.model")
    x = np.random.default_rng(0).normal(size=(3, 40, 15, 1))
    assert np.array_equal(back.forward(x), net.forward(x))
    raw = bytearray((tmp_path / "a.model").read_bytes())
    raw[-1] ^= 0xFF
    (tmp_path / "b.model").write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        Network.load(tmp_path / "b.model")
    (tmp_path / "c.model").write_bytes(b"junk")
    with pytest.raises(ValueError):
        Network.load(tmp_path / "c.model")


def test_fit_reduces_loss():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(256, 40, 15, 1)).astype(np.float32)
    w = rng.normal(size=(40 * 15, 6)) / 25
    y = np.tanh(x.reshape(256, -1) @ w).astype(np.float32)
    net = build_dsrn(seed=1, n_params=2, kv=3, widths=(4, 4, 4, 4), fc=(32, 16))
    hist = fit(net, x, y, "regress", TrainConfig(epochs=5, batch_size=32, lr=3e-3))
    losses = [h["train_loss"] for h in hist]
    assert losses[-1] < losses[0]


def test_layer_config_validation():
    with pytest.raises(ValueError):
        LayerConfig("conv", 0, (3, 3))
    with pytest.raises(ValueError):
        LayerConfig("dropout", rate=1.0)
    with pytest.raises(ValueError):
        LayerConfig("lstm")
    cfg = LayerConfig("maxpool", filter=(3, 1), stride=(2, 1))
    assert LayerConfig.from_dict(cfg.to_dict()) == cfg

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etvd import gradcheck
from etvd.layers import BatchNorm, Conv
from etvd.network import (
    CheckpointError,
    NetworkConfig,
    ResidualDenoiser,
    count_conv_layers,
    denoise,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)


def small(seed=0, **kw):
    return ResidualDenoiser(NetworkConfig(**{"blocks": 2, "channels": 4, "seed": seed, "zero_tail": False, **kw}))


def zero_out(net):
    for p in net.parameters().values():
        p[...] = 0
    return net


def test_default_topology():
    net = ResidualDenoiser(NetworkConfig(blocks=15, channels=64, in_channels=1))
    assert count_conv_layers(net) == 2 + 2 * 15 == 32
    kinds = [type(layer).__name__ for layer in net.body[0].layers]
    assert kinds == ["Conv", "Elu", "Conv", "BatchNorm"]
    for block in net.body:
        first, second = block.layers[0], block.layers[2]
        assert first.filter.size == 3 and second.filter.size == 1
    assert net.head.layers[0].filter.weights.shape == (64, 1, 3, 3)
    assert net.tail.layers[0].filter.weights.shape == (1, 64, 3, 3)
    assert not any(isinstance(layer, BatchNorm) for layer in net.head.layers + net.tail.layers)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 3), c=st.sampled_from([1, 3]), h=st.integers(3, 12), w=st.integers(3, 12))
def test_output_shape(n, c, h, w):
    net = small(in_channels=c)
    y = np.random.default_rng(0).random((n, c, h, w)).astype(np.float32)
    assert net.forward(y, "eval").shape == y.shape
    assert net.forward(y, "train").shape == y.shape


def test_input_channel_mismatch():
    with pytest.raises(ValueError):
        small().forward(np.zeros((1, 3, 5, 5), np.float32))


def test_config_validation():
    for bad in ({"blocks": 0}, {"channels": 0}, {"in_channels": 2}, {"alpha": 0}):
        with pytest.raises(ValueError):
            NetworkConfig(**bad)


def test_zero_network():
    net = zero_out(small())
    y = np.random.default_rng(1).random((2, 1, 6, 6)).astype(np.float32) * 1.4 - 0.2
    for mode in ("train", "eval"):
        assert not net.forward(y, mode).any()
    np.testing.assert_array_equal(denoise(net, y), np.clip(y, 0, 1))


def test_backward_requires_train_forward():
    net = small()
    with pytest.raises(RuntimeError):
        net.backward(np.zeros((1, 1, 4, 4), np.float32))
    net.forward(np.zeros((1, 1, 4, 4), np.float32), "eval")
    with pytest.raises(RuntimeError):
        net.backward(np.zeros((1, 1, 4, 4), np.float32))


def test_zero_grad_and_shapes():
    net = small()
    y = np.random.default_rng(4).random((2, 1, 5, 5)).astype(np.float32)
    net.forward(y, "train")
    grads = net.backward(np.zeros_like(y))
    params = net.parameters()
    assert set(grads) == set(params)
    for name, p in params.items():
        assert grads[name].shape == p.shape
        assert not grads[name].any()


@pytest.mark.parametrize("seed", range(3))
def test_single_block_finite_differences(seed):
    assert gradcheck.check_network(seed, blocks=1, channels=3) <= 1e-4


def test_two_block_color_finite_differences():
    assert gradcheck.check_network(0, blocks=2, channels=2, shape=(2, 3, 5, 5)) <= 1e-4


def test_weight_decay_targets_conv_weights():
    net = small()
    decayed = net.decayed()
    assert decayed == {layer.name + ".weight" for layer in net.layers() if isinstance(layer, Conv)}


def test_checkpoint_round_trip(tmp_path):
    net = small(seed=5)
    y = np.random.default_rng(5).random((2, 1, 9, 7)).astype(np.float32)
    for _ in range(3):
        net.forward(y, "train")  # move running stats off their defaults
    path = tmp_path / "m.etvd"
    save_checkpoint(path, net, extra={"epoch": 3})
    loaded, header, extra = load_checkpoint(path)
    assert header["extra"] == {"epoch": 3}
    assert extra == {}
    assert loaded.cfg == net.cfg
    save_checkpoint(tmp_path / "again.etvd", loaded, extra={"epoch": 3})
    assert (tmp_path / "again.etvd").read_bytes() == path.read_bytes()
    for mode in ("eval", "train"):
        np.testing.assert_array_equal(loaded.forward(y, mode), net.forward(y, mode))


def test_checkpoint_layout(tmp_path):
    net = small()
    save_checkpoint(tmp_path / "m.etvd", net, records={"velocity/x": np.ones((2, 3), np.float32)})
    raw = (tmp_path / "m.etvd").read_bytes()
    assert raw[:4] == b"ETVD"
    assert int.from_bytes(raw[4:8], "little") == 1
    _, arrays = read_checkpoint(tmp_path / "m.etvd")
    assert arrays["velocity/x"].shape == (2, 3)
    assert set(net.state_dict()) <= set(arrays)


def test_checkpoint_errors(tmp_path):
    bad = tmp_path / "bad"
    bad.write_bytes(b"NOPE")
    with pytest.raises(CheckpointError):
        read_checkpoint(bad)
    net = small()
    save_checkpoint(tmp_path / "m.etvd", net)
    raw = (tmp_path / "m.etvd").read_bytes()
    (tmp_path / "cut").write_bytes(raw[:-10])
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "cut")
    (tmp_path / "ver").write_bytes(raw[:4] + (7).to_bytes(4, "little") + raw[8:])
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "ver")


def test_eval_independent_of_batch_composition():
    net = small(seed=6, channels=8)
    y = np.random.default_rng(6).random((4, 1, 10, 10)).astype(np.float32)
    net.forward(y, "train")
    batched = net.forward(y, "eval")
    for k in range(4):
        single = net.forward(y[k : k + 1], "eval")
        assert np.max(np.abs(single - batched[k : k + 1])) <= 1e-6


def test_train_eval_converge_after_warmup():
    net = ResidualDenoiser(NetworkConfig(blocks=3, channels=6, seed=7, bn_gamma_init=1.0, zero_tail=False))
    y = np.random.default_rng(7).random((4, 1, 12, 12)).astype(np.float32)
    for _ in range(150):
        train_out = net.forward(y, "train")
    eval_out = net.forward(y, "eval")
    assert np.sqrt(np.mean((train_out - eval_out) ** 2)) <= 1e-3


def test_default_starts_as_identity_denoiser():
    net = ResidualDenoiser(NetworkConfig(blocks=2, channels=4))
    assert not net.tail.layers[0].filter.weights.any()
    y = np.random.default_rng(8).random((2, 1, 7, 7)).astype(np.float32)
    assert not net.forward(y, "train").any()
    grads = net.backward(np.ones_like(y))
    assert grads["tail.conv.weight"].any() and not grads["head.conv.weight"].any()


def test_initialization_is_seeded():
    a, b, c = small(seed=1), small(seed=1), small(seed=2)
    for name, p in a.parameters().items():
        np.testing.assert_array_equal(p, b.parameters()[name])
    assert any(not np.array_equal(p, c.parameters()[n]) for n, p in a.parameters().items())

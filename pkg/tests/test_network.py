import numpy as np
import pytest

from dalif.network import (
    LayerSpec, Network, layer_forward, loss_and_grad, network_forward, readout_rate,
    reference_network, softmax_cross_entropy,
)
from dalif.neuron import DecayParams, NeuronConfig
from dalif.tensor import ShapeError


def chain_net():
    """Two single-neuron dense layers and a 2-class readout."""
    layers = [LayerSpec("dense", [[3.0]]), LayerSpec("dense", [[2.0]])]
    return Network(layers, np.array([[1.0], [-1.0]]), input_shape=(1,), T=2)


def test_layer_forward_examples():
    layer = LayerSpec("dense", [[1.0]])
    s, v, h, x = layer_forward(layer, np.zeros((1, 1)), np.zeros((1, 1)))
    assert s.tolist() == v.tolist() == h.tolist() == [[0.0]]
    s, v, h, x = layer_forward(layer, np.ones((1, 1)), np.zeros((1, 1)), alpha=1.0, beta=0.0)
    assert (x.item(), v.item(), s.item(), h.item()) == (1.0, 1.0, 1.0, 0.0)
    s, v, h, x = layer_forward(layer, np.zeros((1, 1)), np.zeros((1, 1)), alpha=1.0, beta=0.0)
    assert (v.item(), s.item()) == (0.0, 0.0)
    with pytest.raises(ShapeError):
        layer_forward(layer, np.ones((1, 1)), np.zeros((1, 2)))


def test_chain_golden_tape():
    # hand trace with (alpha, beta) = (0.5, 0.5) then (0.6, 0.9):
    # layer 1: t1 X=3.0 V=1.5 S=1 H=0 | t2 X=1.2 V=0.6 S=0 H=0.6
    # layer 2: t1 X=2.0 V=1.2 S=1 H=0 | t2 X=0.0 V=0.0 S=0 H=0.0
    net = chain_net()
    x = np.array([1.0, 0.4]).reshape(2, 1, 1)
    logits, tape = network_forward(net, x, decays=[(0.5, 0.5), (0.6, 0.9)])
    l1, l2 = tape.layers
    np.testing.assert_allclose(l1.x.ravel(), [3.0, 1.2], atol=1e-15)
    np.testing.assert_allclose(l1.v.ravel(), [1.5, 0.6], atol=1e-15)
    np.testing.assert_array_equal(l1.s.ravel(), [1.0, 0.0])
    np.testing.assert_allclose(l1.h.ravel(), [0.0, 0.6], atol=1e-15)
    np.testing.assert_allclose(l2.v.ravel(), [1.2, 0.0], atol=1e-15)
    np.testing.assert_array_equal(l2.s.ravel(), [1.0, 0.0])
    np.testing.assert_array_equal(logits[:, 0], [[1.0, -1.0], [0.0, 0.0]])
    np.testing.assert_array_equal(readout_rate(logits)[0], [0.5, -0.5])


def test_t1_equals_single_layer_applications(desk_net):
    net = reference_network(seed=3, T=1)
    x = np.random.default_rng(0).random((1, 2, 1, 8, 8))
    logits, _ = network_forward(net, x)
    s = x[0]
    for layer in net.layers:
        s, *_ = layer_forward(layer, s, np.zeros(layer.synapse(s).shape))
    np.testing.assert_array_equal(logits[0], s.reshape(2, -1) @ net.readout.T)


def test_zero_input_zero_logits(desk_net):
    logits, tape = network_forward(desk_net, np.zeros((4, 3, 1, 8, 8)))
    assert np.all(logits == 0.0)
    assert all(np.all(lt.s == 0.0) for lt in tape.layers)


def test_temporal_causality_with_beta_zero(desk_net):
    rng = np.random.default_rng(1)
    x = rng.random((4, 2, 1, 8, 8)) * 2
    decays = [(0.9, 0.0)] * len(desk_net.layers)
    base, _ = network_forward(desk_net, x, decays=decays)
    for t in range(1, 4):
        y = x.copy()
        y[:t] = rng.random(y[:t].shape) * 5
        other, _ = network_forward(desk_net, y, decays=decays)
        np.testing.assert_array_equal(other[t:], base[t:])


def test_alpha_zero_never_fires(desk_net):
    x = np.random.default_rng(2).random((4, 2, 1, 8, 8)) * 10
    logits, tape = network_forward(desk_net, x, decays=[(0.0, 0.9)] * 2)
    assert np.all(logits == 0.0)
    assert all(np.all(lt.s == 0.0) for lt in tape.layers)


def test_tape_completeness(desk_net):
    x = np.random.default_rng(3).random((4, 2, 1, 8, 8)) * 3
    logits, tape = network_forward(desk_net, x)
    assert len(tape.layers) == 2 and tape.T == 4
    for lt in tape.layers:
        assert set(np.unique(lt.s)) <= {0.0, 1.0}
        np.testing.assert_array_equal(lt.h, lt.v * (1.0 - lt.s))
        assert lt.s.any()
    np.testing.assert_array_equal(logits, tape.readout_in @ desk_net.readout.T)


def test_batch_is_elementwise(desk_net):
    x = np.random.default_rng(4).random((4, 3, 1, 8, 8)) * 3
    logits, _ = network_forward(desk_net, x)
    for b in range(3):
        single, _ = network_forward(desk_net, x[:, b:b + 1])
        np.testing.assert_allclose(single[:, 0], logits[:, b], atol=1e-12)


def test_decays_shared_across_time(desk_net):
    _, tape = network_forward(desk_net, np.zeros((4, 1, 1, 8, 8)))
    for layer, lt in zip(desk_net.layers, tape.layers):
        a, b = layer.effective_decays()
        assert np.all(lt.alpha == a) and np.all(lt.beta == b)
        assert a == b == pytest.approx(np.tanh(1.0))


def test_vanilla_layer_uses_tau():
    layer = LayerSpec("dense", [[1.0]], neuron=NeuronConfig(tau_m=4.0), neuron_model="vanilla")
    assert layer.effective_decays() == (0.25, 0.75)
    _, v, _, _ = layer_forward(layer, np.array([[2.0]]), np.array([[0.4]]))
    assert v.item() == pytest.approx(0.75 * 0.4 + 0.25 * 2.0)


def test_network_shape_errors():
    with pytest.raises(ShapeError):
        Network([LayerSpec("dense", np.ones((2, 3)))], np.ones((2, 2)), input_shape=(4,))
    with pytest.raises(ShapeError):
        Network([LayerSpec("dense", np.ones((2, 3)))], np.ones((2, 5)), input_shape=(3,))
    with pytest.raises(ValueError):
        Network([LayerSpec("dense", np.ones((2, 3)))], np.ones((2, 2)), input_shape=(3,), T=0)
    net = reference_network()
    with pytest.raises(ShapeError):
        network_forward(net, np.zeros((4, 1, 1, 7, 8)))


def test_readout_rate():
    x = np.array([[1.0, 2.0]])
    np.testing.assert_array_equal(readout_rate(x), [1.0, 2.0])
    np.testing.assert_array_equal(readout_rate(np.full((5, 3), 2.5)), [2.5, 2.5, 2.5])
    np.testing.assert_array_equal(readout_rate(np.array([[1.0, 3.0], [3.0, 1.0]])), [2.0, 2.0])


def test_softmax_cross_entropy():
    loss, g = softmax_cross_entropy(np.zeros(5), 2)
    assert loss == pytest.approx(np.log(5))
    loss, g = softmax_cross_entropy(np.array([1000.0, 0.0]), 0)
    assert loss == pytest.approx(0.0, abs=1e-300) and np.all(np.isfinite(g))
    _, g = softmax_cross_entropy(np.array([0.0, 0.0]), 1)
    np.testing.assert_allclose(g, [0.5, -0.5])
    with pytest.raises(IndexError):
        softmax_cross_entropy(np.zeros(2), 2)


def test_softmax_cross_entropy_grad_finite_difference():
    rng = np.random.default_rng(5)
    z = rng.normal(size=(3, 4))
    y = np.array([0, 3, 1])
    _, g = softmax_cross_entropy(z, y)
    h = 1e-6
    for idx in np.ndindex(z.shape):
        d = np.zeros_like(z)
        d[idx] = h
        num = (softmax_cross_entropy(z + d, y)[0] - softmax_cross_entropy(z - d, y)[0]) / (2 * h)
        assert g[idx] == pytest.approx(num, abs=1e-8)


def test_loss_and_grad_spreads_over_time(desk_net):
    x = np.random.default_rng(6).random((4, 2, 1, 8, 8))
    loss, g_t, tape = loss_and_grad(desk_net, x, [0, 1])
    _, g = softmax_cross_entropy(readout_rate(tape.logits), [0, 1])
    np.testing.assert_allclose(g_t.sum(axis=0), g)


def test_layer_decay_params_are_distinct_objects(desk_net):
    d0, d1 = desk_net.layers[0].decays, desk_net.layers[1].decays
    assert d0 is not d1 and isinstance(d0, DecayParams)

import numpy as np
import pytest

from dafl import nncore as nn


def tiny_spec(input_length=64, num_classes=3, seed=7, last_filters=None):
    """Small net used across tests; ~270 params, cheap to gradient-check."""
    blocks = (
        nn.conv1d(5, 4, stride=2),
        nn.relu(),
        nn.maxpool(2),
        nn.conv1d(3, last_filters if last_filters else 5 * num_classes),
        nn.relu(),
        nn.global_avg_pool(),
        nn.dense(num_classes),
        nn.softmax_layer(),
    )
    return nn.NetworkSpec(
        input_length=input_length, num_classes=num_classes, blocks=blocks, seed=seed
    )


@pytest.fixture
def tiny_net():
    return nn.build_network(tiny_spec())


def random_spec(rng, max_params=2000):
    """Random small architecture for gradient sweeps."""
    c = int(rng.integers(2, 5))
    length = int(rng.integers(32, 80))
    blocks = [
        nn.conv1d(int(rng.integers(3, 8)), int(rng.integers(2, 5)), stride=int(rng.integers(1, 3))),
        nn.relu(),
    ]
    if rng.random() < 0.7:
        blocks.append(nn.maxpool(int(rng.integers(2, 4))))
    blocks += [
        nn.conv1d(int(rng.integers(2, 5)), int(rng.integers(3, 8))),
        nn.relu(),
        nn.global_avg_pool(),
        nn.dense(c),
        nn.softmax_layer(),
    ]
    spec = nn.NetworkSpec(
        input_length=length, num_classes=c, blocks=tuple(blocks), seed=int(rng.integers(1 << 31))
    )
    net = nn.build_network(spec)
    assert net.num_params() <= max_params
    return spec


def general_position(net, rng, scale=0.05):
    """Randomize biases so no pre-activation sits exactly on a ReLU kink.

    Zero-initialized biases let a fully ReLU-zeroed conv window produce an
    activation of exactly 0.0, where central differences straddle the kink
    and disagree with the (valid) subgradient.
    """
    for i in net.param_layer_indices():
        p = net.params[i]
        p.bias[...] = rng.normal(0.0, scale, p.bias.shape)
    return net


def fd_gradient_check(net, x, targets, loss, h=1e-5):
    """Central finite differences over every parameter; returns worst rel error."""
    grads = nn.backprop(net, x, targets, loss)
    worst = 0.0
    for i in net.param_layer_indices():
        p = net.params[i]
        g = grads.layers[i]
        for arr, garr in ((p.weight, g.weight), (p.bias, g.bias)):
            flat, gflat = arr.ravel(), garr.ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                lp, _ = nn.loss_and_grad(nn.forward(net, x)[0], targets, loss)
                flat[j] = orig - h
                lm, _ = nn.loss_and_grad(nn.forward(net, x)[0], targets, loss)
                flat[j] = orig
                fd = (lp - lm) / (2 * h)
                denom = max(abs(fd), abs(gflat[j]), 1e-8)
                worst = max(worst, abs(fd - gflat[j]) / denom)
    return worst


def separable_tone_set(n_per_class=40, length=64, seed=0):
    """Two near-fixed-phase tone classes; linearly separable by construction.

    Phases jitter only slightly, so the class means stay far apart and a
    linear model on the raw waveform separates them (fully random phases
    would make each class sign-symmetric and linearly inseparable).
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length) / length
    xs, ys = [], []
    for c, freq in enumerate((3.0, 11.0)):
        for _ in range(n_per_class):
            phase = rng.uniform(-0.3, 0.3)
            amp = rng.uniform(0.7, 1.0)
            w = amp * np.sin(2 * np.pi * freq * t + phase)
            w = w + 0.05 * rng.standard_normal(length)
            xs.append(w / np.abs(w).max())
            ys.append(c)
    order = rng.permutation(len(xs))
    return np.asarray(xs)[order], np.asarray(ys)[order]

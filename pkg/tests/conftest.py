import numpy as np
import pytest

from canet.channel import ScmConfig, generate_dataset
from canet.frameworks import Kind, TrainConfig, build_framework, fit
from canet.harness import adopt_phase1

# (name, passed, detail) lines from the acceptance module, printed at the end of the run
ACCEPTANCE_LINES = []


def central_difference(loss_fn, arrays, h=1e-6):
    """Central finite differences of ``loss_fn()`` w.r.t. every entry of ``arrays`` (perturbed in place)."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        err = np.abs(a - n) / np.maximum(1.0, np.abs(a))
        worst = max(worst, float(err.max()) if err.size else 0.0)
    return worst


@pytest.fixture(scope="session")
def small_dataset():
    """A 2000-sample, 8-antenna dataset for fast training-path tests."""
    return generate_dataset(ScmConfig(n_ant=8, seed=11), 2000)


@pytest.fixture(scope="session")
def desk_dataset():
    """The desk-scale 50k-sample, 32-antenna dataset."""
    return generate_dataset(ScmConfig(n_ant=32, seed=1), 50_000)


def framework_fd_error(kind, rng):
    """Worst relative error between backprop and central differences for a tiny ``kind`` graph.

    sigma is held fixed and the quantizer bypassed so the loss is smooth in
    every parameter.
    """
    fw = build_framework(kind, 4, 2, 8, seed=int(rng.integers(1 << 30)))
    b = 3
    h = rng.normal(size=(b, 8)) * 0.3
    mag = np.abs(rng.normal(size=(b, 4)))
    noise = rng.normal(size=(b, 4))
    target = rng.normal(size=(b, 8)) * 0.3

    def loss():
        out = fw.forward(h, mag, sigma=0.2, noise=noise, quantize=False, record=False)
        return 0.5 * np.sum((out - target) ** 2)

    fw.zero_grad()
    out = fw.forward(h, mag, sigma=0.2, noise=noise, quantize=False)
    fw.backward(out - target)
    params, grads = [], []
    for layer in fw.unique_layers():
        if not layer.trainable:
            continue
        params.append(layer.weight)
        grads.append(layer.grad_weight)
        if layer.use_bias:
            params.append(layer.bias)
            grads.append(layer.grad_bias)
    return max_rel_error(grads, central_difference(loss, params))


_TRAINED = {}


def trained_model(ds, kind, m=1, n_bits=32, seed=0, *, epochs=200, snr_db=10.0):
    """Train ``kind`` on ``ds`` once per session; ``seed`` seeds both the init and the training.

    A CAnet-S takes the matching UpAid-PEnet as its phase 1, which is what
    training phase 1 from the same seed would produce.
    """
    kind = Kind(kind)
    if kind in (Kind.UPAID_PENET, Kind.PENET, Kind.GAUSSIAN):
        n_bits = 0
    if kind in (Kind.UPAID_FBNET, Kind.FC_BASELINE):
        m = 1
    key = (id(ds), kind, m, n_bits, seed, epochs, snr_db)
    if key not in _TRAINED:
        fw = build_framework(kind, ds.n_ant, m, max(n_bits, 4), seed=seed)
        cfg = TrainConfig(epochs=epochs, snr_db=snr_db, seed=seed)
        if kind is Kind.CANET_S:
            adopt_phase1(fw, trained_model(ds, Kind.UPAID_PENET, m, seed=seed, epochs=epochs, snr_db=snr_db))
            fit(fw, ds, cfg, stage="feedback")
        else:
            fit(fw, ds, cfg)
        _TRAINED[key] = fw
    return _TRAINED[key]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, passed, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")

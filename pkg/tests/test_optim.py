import numpy as np
import pytest

from relsql.nn.optim import Adam, linear_warmup_decay


def test_schedule_endpoints():
    assert linear_warmup_decay(200, 1e-3, 200, 3000) == pytest.approx(1e-3)
    assert linear_warmup_decay(3000, 1e-3, 200, 3000) == 0.0
    assert linear_warmup_decay(100, 1e-3, 200, 3000) == pytest.approx(5e-4)
    assert linear_warmup_decay(1600, 1e-3, 200, 3000) == pytest.approx(5e-4)


def test_schedule_shape():
    lrs = [linear_warmup_decay(s, 1.0, 10, 50) for s in range(1, 51)]
    assert all(a < b for a, b in zip(lrs[:9], lrs[1:10]))
    assert all(a > b for a, b in zip(lrs[9:-1], lrs[10:]))
    assert linear_warmup_decay(5, 1.0, 0, 10) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        linear_warmup_decay(1, 1.0, 20, 10)


def test_adam_first_step_is_lr_sized():
    p = {"w": np.array([1.0, -2.0, 3.0])}
    Adam(p).update(p, {"w": np.array([0.5, -4.0, 1e-3])}, 0.1)
    # bias-corrected first step moves each coordinate by ~lr against the gradient sign
    np.testing.assert_allclose(p["w"], [0.9, -1.9, 2.9], atol=1e-4)


def test_adam_minimises_quadratic():
    p = {"w": np.array([5.0, -3.0])}
    opt = Adam(p)
    for _ in range(2000):
        opt.update(p, {"w": 2 * p["w"]}, 0.05)
    np.testing.assert_allclose(p["w"], 0.0, atol=1e-2)


def test_adam_matches_reference_formula():
    rng = np.random.default_rng(0)
    w0 = rng.normal(size=4)
    grads = [rng.normal(size=4) for _ in range(3)]
    p = {"w": w0.copy()}
    opt = Adam(p)
    for g in grads:
        opt.update(p, {"w": g}, 0.01)
    w, m, v = w0.copy(), np.zeros(4), np.zeros(4)
    for t, g in enumerate(grads, 1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p["w"], w, atol=1e-12)

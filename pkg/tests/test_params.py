"""ParameterStore, Adam, and checkpoint round-trips."""

import numpy as np
import pytest

from memrl import autodiff as ad
from memrl.params import ParameterStore, load_arrays, save_arrays


def test_duplicate_name_rejected():
    s = ParameterStore()
    s.parameter("w", np.zeros(3))
    with pytest.raises(ValueError):
        s.parameter("w", np.zeros(3))


def test_adam_sign_and_zero_grad():
    s = ParameterStore()
    p = s.parameter("p", np.array([1.0]))
    p.grad = np.array([1.0])
    s.adam_step(lr=0.0005)
    assert p.data[0] < 1.0  # one positive-gradient step decreases the value
    assert p.grad is None
    q = s.parameter("q", np.array([2.0]))
    before = q.data.copy()
    s.adam_step(lr=0.0005)  # fresh zero-gradient step: moments stay zero
    assert np.array_equal(q.data, before)


def test_adam_rejects_non_finite_gradient():
    s = ParameterStore()
    p = s.parameter("bad/param", np.zeros(2))
    p.grad = np.array([np.nan, 0.0])
    with pytest.raises(FloatingPointError, match="bad/param"):
        s.adam_step(lr=1e-3)


def test_adam_converges_on_quadratic():
    # f(p) = 2(p0 - 1.5)^2 + 0.5(p1 + 0.75)^2, optimum (1.5, -0.75)
    target = np.array([1.5, -0.75])
    coef = np.array([2.0, 0.5])
    s = ParameterStore()
    p = s.parameter("p", np.zeros(2))
    for step in range(5000):
        p.grad = 2.0 * coef * (p.data - target)
        s.adam_step(lr=0.01)
        if np.abs(p.data - target).max() < 1e-3:
            break
    assert np.abs(p.data - target).max() < 1e-3
    assert step < 4999


def test_gradient_clipping_scales_norm():
    s = ParameterStore()
    a = s.parameter("a", np.zeros(3))
    a.grad = np.full(3, 100.0)
    norm = s.clip_gradients(1.0)
    assert norm == pytest.approx(np.sqrt(3) * 100.0)
    assert s.global_grad_norm() == pytest.approx(1.0)


def test_snapshot_and_gradient_merge():
    master = ParameterStore()
    master.parameter("w", np.array([1.0, 2.0]))
    w1 = master.snapshot()
    w2 = master.snapshot()
    w1["w"].grad = np.array([1.0, 0.0])
    w2["w"].grad = np.array([3.0, 2.0])
    master.accumulate_gradients([w1, w2])
    assert np.allclose(master["w"].grad, [2.0, 1.0])
    # snapshots hold copies, not views
    w1["w"].data[0] = 99.0
    assert master["w"].data[0] == 1.0


def test_checkpoint_roundtrip(tmp_path):
    s = ParameterStore()
    rng = np.random.default_rng(0)
    s.parameter("enc/w", rng.standard_normal((3, 4)))
    s.parameter("pol/b", rng.standard_normal(5))
    path = tmp_path / "ck.bin"
    s.save(path, meta={"note": "x", "n": 3})
    s2 = ParameterStore()
    s2.parameter("enc/w", np.zeros((3, 4)))
    s2.parameter("pol/b", np.zeros(5))
    meta = s2.load(path)
    assert meta == {"note": "x", "n": 3}
    for n in s.names():
        assert np.array_equal(s[n].data, s2[n].data)


def test_checkpoint_verifies_names_and_shapes(tmp_path):
    s = ParameterStore()
    s.parameter("w", np.zeros((2, 2)))
    path = tmp_path / "ck.bin"
    s.save(path)
    other = ParameterStore()
    other.parameter("w2", np.zeros((2, 2)))
    with pytest.raises(ValueError, match="missing"):
        other.load(path)
    wrong = ParameterStore()
    wrong.parameter("w", np.zeros((2, 3)))
    with pytest.raises(ValueError, match="shape"):
        wrong.load(path)


def test_blob_format_is_little_endian_with_offsets(tmp_path):
    path = tmp_path / "arr.bin"
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([7.0])}
    save_arrays(path, arrays, meta={"k": 1})
    meta, back = load_arrays(path)
    assert meta == {"k": 1}
    assert np.array_equal(back["a"], arrays["a"])
    assert np.array_equal(back["b"], arrays["b"])
    raw = path.read_bytes()
    assert raw[:8] == b"MEMRLCK1"


def test_update_flows_from_backward():
    s = ParameterStore()
    w = s.parameter("w", np.array([2.0]))
    loss = ad.square(w)
    ad.backward(loss)
    assert w.grad[0] == pytest.approx(4.0)
    s.adam_step(lr=0.1)
    assert w.data[0] < 2.0

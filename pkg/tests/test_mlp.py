import numpy as np
import pytest

from cpcf.core_math import Optimizer, cross_entropy, make_rng, softmax_rows
from cpcf.data import make_blobs
from cpcf.errors import ContractError, ParseError
from cpcf.mlp import (
    accuracy,
    backward,
    evaluation_loss,
    forward,
    init_model,
    load_checkpoint,
    loss_and_grads,
    predict_proba,
    save_checkpoint,
    train_epoch,
)
from oracles import grad_rel_error, loop_logits


def small_model(seed=0, dim=12, hidden=(7, 5)):
    return init_model(dim, make_rng(seed), hidden, allow_override=True)


def test_init_is_deterministic_per_seed():
    a = init_model(784, make_rng(3))
    b = init_model(784, make_rng(3))
    assert a.param_hash() == b.param_hash()
    assert a.param_hash() != init_model(784, make_rng(4)).param_hash()


@pytest.mark.parametrize("dim", [784, 1024])
def test_benchmark_input_dims(dim):
    m = init_model(dim, make_rng(0))
    assert m.params["W1"].shape == (dim, 256)
    assert m.params["W2"].shape == (256, 128)
    assert m.params["W3"].shape == (128, 10)
    assert not m.overridden


def test_glorot_bounds_and_zero_biases():
    m = init_model(784, make_rng(0))
    assert np.abs(m.params["W1"]).max() <= np.sqrt(6 / (784 + 256))
    assert all(np.all(m.params[b] == 0) for b in ("b1", "b2", "b3"))


def test_other_shapes_need_override_flag():
    with pytest.raises(ContractError):
        init_model(30, make_rng(0))
    with pytest.raises(ContractError):
        init_model(784, make_rng(0), hidden=(64, 32))
    assert init_model(30, make_rng(0), allow_override=True).overridden


def test_zero_model_gives_uniform_probs():
    m = small_model()
    for k in m.params:
        m.params[k][...] = 0.0
    np.testing.assert_allclose(predict_proba(m, np.ones((3, 12))), 0.1, atol=1e-15)


def test_hand_computed_single_path():
    m = small_model(dim=2, hidden=(1, 1))
    for k in m.params:
        m.params[k][...] = 0.0
    m.params["W1"][:, 0] = [2.0, -1.0]
    m.params["b1"][0] = 0.5
    m.params["W2"][0, 0] = 3.0
    m.params["b2"][0] = -1.0
    m.params["W3"][0, 4] = 0.25
    logits, _ = forward(m, np.array([[1.0, 1.0], [0.0, 2.0]]))
    # row 0: relu(2 - 1 + 0.5) = 1.5 -> relu(4.5 - 1) = 3.5 -> 0.875
    # row 1: relu(-2 + 0.5) = 0   -> relu(-1) = 0            -> 0
    assert logits[0, 4] == pytest.approx(0.875)
    assert logits[1, 4] == 0.0


def test_forward_matches_per_neuron_loop():
    m = small_model(seed=2)
    x = make_rng(9).random((4, 12))
    logits, _ = forward(m, x)
    np.testing.assert_allclose(logits, loop_logits(m.params, x), rtol=0, atol=1e-12)


def test_forward_dimension_mismatch():
    with pytest.raises(ContractError):
        forward(small_model(), np.ones((2, 11)))


def test_backward_matches_finite_differences():
    rng = make_rng(11)
    m = small_model(seed=1)
    x, y = rng.random((8, 12)), rng.integers(0, 10, 8)
    _, grads = loss_and_grads(m, x, y)
    err = grad_rel_error(grads, lambda: evaluation_loss(m, x, y), m.params, rng)
    assert err <= 1e-4


def test_backward_matches_fd_on_full_size_model():
    rng = make_rng(12)
    m = init_model(784, make_rng(2))
    x, y = rng.random((8, 784)), rng.integers(0, 10, 8)
    _, grads = loss_and_grads(m, x, y)
    err = grad_rel_error(grads, lambda: evaluation_loss(m, x, y), m.params, rng, max_entries=40)
    assert err <= 1e-4


def test_b3_gradient_is_mean_residual():
    rng = make_rng(0)
    m = small_model()
    x, y = rng.random((6, 12)), rng.integers(0, 10, 6)
    logits, cache = forward(m, x)
    g = backward(m, cache, y)
    expected = (softmax_rows(logits) - np.eye(10)[y]).mean(axis=0)
    np.testing.assert_allclose(g["b3"], expected, atol=1e-15)


def test_zero_input_kills_w1_gradient():
    m = small_model()
    _, cache = forward(m, np.zeros((5, 12)))
    assert np.all(backward(m, cache, [1, 2, 3, 4, 5])["W1"] == 0)


def _blob_model(seed=0, lr=1e-2):
    data = make_blobs(2, 50, 8, 0.1, make_rng(seed))
    m = init_model(8, make_rng(seed + 1), allow_override=True)
    m.optimizer = Optimizer(lr)
    return data, m


def test_lr_zero_epoch_leaves_params_and_reports_eval_loss():
    data, m = _blob_model(lr=0.0)
    h = m.param_hash()
    loss = train_epoch(m, data.x, data.y, 16, make_rng(0))
    assert m.param_hash() == h
    assert loss == pytest.approx(evaluation_loss(m, data.x, data.y), abs=1e-12)


def test_blobs_are_learned():
    data, m = _blob_model()
    for _ in range(20):
        train_epoch(m, data.x, data.y, 16, make_rng(0))
    assert accuracy(m, data.x, data.y) >= 0.95


def test_epoch_is_deterministic():
    hashes = []
    for _ in range(2):
        data, m = _blob_model()
        train_epoch(m, data.x, data.y, 16, make_rng(5))
        hashes.append(m.param_hash())
    assert hashes[0] == hashes[1]


def test_full_batch_epoch_equals_one_gradient_step():
    data, m = _blob_model(lr=0.05)
    m.optimizer = Optimizer(0.05, "sgd")
    ref = {k: v.copy() for k, v in m.params.items()}
    _, grads = loss_and_grads(m, data.x, data.y)
    train_epoch(m, data.x, data.y, len(data), make_rng(0))
    for k in ref:
        np.testing.assert_allclose(m.params[k], ref[k] - 0.05 * grads[k], atol=1e-13)


def test_empty_data_rejected():
    _, m = _blob_model()
    with pytest.raises(ContractError):
        train_epoch(m, np.empty((0, 8)), np.empty(0, dtype=int), 4, make_rng(0))


def test_evaluation_never_mutates():
    data, m = _blob_model()
    h = m.param_hash()
    predict_proba(m, data.x)
    forward(m, data.x)
    accuracy(m, data.x, data.y)
    assert m.param_hash() == h


def test_accuracy_cases():
    m = small_model(dim=10, hidden=(10, 10))
    for k in m.params:
        m.params[k][...] = 0.0
    # constant predictor: uniform probabilities, argmax tie -> class 0
    y = np.repeat(np.arange(10), 3)
    assert accuracy(m, np.zeros((30, 10)), y) == pytest.approx(0.1)
    # identity network on one-hot inputs predicts the label perfectly
    for k in ("W1", "W2", "W3"):
        m.params[k][...] = np.eye(10) * 10
    x = np.eye(10)[y]
    assert accuracy(m, x, y) == 1.0
    probs = predict_proba(m, x)
    loop = sum(int(max(range(10), key=lambda c: (probs[i, c], -c)) == y[i]) for i in range(30)) / 30
    assert accuracy(m, x, y) == loop


def test_ewc_style_penalty_enters_loss_and_grads():
    rng = make_rng(4)
    m = small_model()
    x, y = rng.random((8, 12)), rng.integers(0, 10, 8)
    anchor = {k: v + 0.1 for k, v in m.params.items()}

    def pen(model):
        val = sum(0.5 * np.sum((model.params[k] - anchor[k]) ** 2) for k in anchor)
        return val, {k: model.params[k] - anchor[k] for k in anchor}

    loss, grads = loss_and_grads(m, x, y, pen)
    assert loss == pytest.approx(cross_entropy(predict_proba(m, x), y) + pen(m)[0])
    err = grad_rel_error(grads, lambda: loss_and_grads(m, x, y, pen)[0], m.params, rng)
    assert err <= 1e-4


def test_checkpoint_round_trip():
    m = init_model(1024, make_rng(1))
    blob = save_checkpoint(m)
    assert blob[:4] == b"CPCF"
    assert int.from_bytes(blob[4:8], "little") == 1
    assert int.from_bytes(blob[8:12], "little") == 1024
    back = load_checkpoint(blob)
    assert back.param_hash() == m.param_hash()
    with pytest.raises(ParseError):
        load_checkpoint(blob[:-1])
    with pytest.raises(ParseError):
        load_checkpoint(b"XXXX" + blob[4:])

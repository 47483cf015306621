import numpy as np
import pytest
from hypothesis import given, strategies as st

from nsrnn import tensor_core as tc
from nsrnn.controllers import (
    CheckpointError,
    ModelConfig,
    NsRnn,
    build_model,
    load_checkpoint,
    save_checkpoint,
)
from nsrnn.controllers.lstm import init_lstm, lstm_step, zero_state
from nsrnn.controllers.stacks import stratification_step, superposition_step
from nsrnn.tensor_core import Tensor
from nsrnn.tensor_core.gradcheck import check_gradients

KINDS = ("ns", "superposition", "stratification", "lstm")


def vec(*xs):
    return Tensor(np.array([xs], dtype=float))


# -- LSTM --------------------------------------------------------------------------

def test_zero_lstm_stays_zero():
    params = init_lstm(np.random.default_rng(0), 3, 4)
    for p in params.values():
        p.data[...] = 0.0
    state = zero_state(2, 4)
    for _ in range(3):
        state = lstm_step(params, state, Tensor(np.random.default_rng(1).normal(size=(2, 3))))
    assert not state.hidden.data.any() and not state.cell.data.any()


@given(seed=st.integers(0, 2**31 - 1))
def test_lstm_hidden_is_bounded_and_differentiable(seed):
    rng = np.random.default_rng(seed)
    params = init_lstm(rng, 3, 4)
    for p in params.values():
        p.data *= 20.0
    x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    state = lstm_step(params, zero_state(2, 4), x)
    assert (np.abs(state.hidden.data) < 1).all()
    weights = Tensor(rng.normal(size=(2, 4)))
    result = check_gradients(
        lambda: tc.sum(lstm_step(params, lstm_step(params, zero_state(2, 4), x), x).hidden * weights),
        list(params.values()) + [x],
        fd_dtype=np.longdouble,
    )
    assert result.fraction_below(1e-4) == 1.0


def test_lstm_rejects_wrong_input_size():
    params = init_lstm(np.random.default_rng(0), 3, 4)
    with pytest.raises(tc.TensorError):
        lstm_step(params, zero_state(1, 4), Tensor(np.zeros((1, 5))))


# -- superposition stack ------------------------------------------------------------

def test_superposition_push_push_pop():
    v1, v2 = vec(1.0, 0.0), vec(0.0, 1.0)
    cells = Tensor(np.zeros((1, 3, 2)))
    cells, r = superposition_step(cells, vec(1, 0, 0), v1)
    cells, r = superposition_step(cells, vec(1, 0, 0), v2)
    np.testing.assert_array_equal(cells.data[0, :2], [[0, 1], [1, 0]])
    np.testing.assert_array_equal(r.data, v2.data)
    cells, r = superposition_step(cells, vec(0, 1, 0), vec(5.0, 5.0))
    np.testing.assert_array_equal(r.data, v1.data)


def test_superposition_half_push_half_pop():
    a, b, v = [3.0, 1.0], [2.0, 4.0], [8.0, 0.0]
    cells = Tensor(np.array([[a, b, [0.0, 0.0]]]))
    _, r = superposition_step(cells, vec(0.5, 0.5, 0), vec(*v))
    np.testing.assert_allclose(r.data[0], 0.5 * np.array(v) + 0.5 * np.array(b))


@given(seed=st.integers(0, 2**31 - 1))
def test_superposition_preserves_constant_cells(seed):
    # when every cell and the pushed vector equal c, any convex blend keeps c (interior cells)
    rng = np.random.default_rng(seed)
    c = rng.normal(size=2)
    actions = rng.dirichlet(np.ones(3))[None]
    cells = Tensor(np.tile(c, (1, 4, 1)))
    new, _ = superposition_step(cells, Tensor(actions), Tensor(c[None]))
    np.testing.assert_allclose(new.data[0, :3], np.tile(c, (3, 1)), atol=1e-12)


# -- stratification stack ---------------------------------------------------------------

def empty_strat(m=2):
    return Tensor(np.zeros((1, 0, m))), Tensor(np.zeros((1, 0)))


def test_stratification_full_push_then_pop_reads_zero():
    values, strengths = empty_strat()
    values, strengths, _ = stratification_step(values, strengths, vec(1.0), vec(0.0), vec(1.0, 2.0))
    _, _, reading = stratification_step(values, strengths, vec(0.0), vec(1.0), vec(3.0, 3.0))
    np.testing.assert_array_equal(reading.data, [[0.0, 0.0]])


def test_stratification_partial_pop():
    values, strengths = empty_strat()
    values, strengths, _ = stratification_step(values, strengths, vec(0.6), vec(0.0), vec(1.0, 2.0))
    _, strengths, _ = stratification_step(values, strengths, vec(0.0), vec(0.3), vec(3.0, 3.0))
    np.testing.assert_allclose(strengths.data, [[0.3, 0.0]])


def test_stratification_reading_of_thin_layers():
    a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    values = Tensor(np.array([[b]]))
    strengths = Tensor(np.array([[0.4]]))
    _, _, reading = stratification_step(values, strengths, vec(0.5), vec(0.0), Tensor(a[None]))
    np.testing.assert_allclose(reading.data[0], 0.5 * a + 0.4 * b)


# -- models ---------------------------------------------------------------------------------

def small(kind, **kw):
    return ModelConfig(kind, "01", hidden_size=4, stack_embedding_size=3, **kw)


def test_first_ns_reading_is_bottom():
    model = build_model(small("ns"), np.random.default_rng(0))
    np.testing.assert_array_equal(model.initial_state(2, 3).reading.data, [[1, 0], [1, 0]])


@given(seed=st.integers(0, 2**31 - 1))
def test_ns_action_blocks_are_distributions(seed):
    model = build_model(small("ns", num_states=3, num_stack_symbols=2), np.random.default_rng(seed))
    h = Tensor(np.random.default_rng(seed + 1).normal(size=(2, 4)))
    delta = np.exp(model.action_log_weights(h).data)
    np.testing.assert_allclose(delta.sum(axis=(3, 4)), np.ones((2, 3, 2)), atol=1e-12)


def test_single_state_single_symbol_ns_runs():
    model = build_model(small("ns", num_states=1, num_stack_symbols=1), np.random.default_rng(0))
    logp = model.log_prob_strings(["0011"])
    assert np.isfinite(logp).all()


@pytest.mark.parametrize("kind", KINDS)
def test_string_log_probs_are_normalized_over_fixed_length(kind):
    # with no end-of-string prediction, probabilities of all strings of one length sum to 1
    model = build_model(small(kind), np.random.default_rng(2))
    strings = [format(i, "03b") for i in range(8)]
    assert np.exp(model.log_prob_strings(strings)).sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_step_interface(kind):
    model = build_model(small(kind), np.random.default_rng(0))
    state = model.initial_state(2, 3)
    x = Tensor(np.eye(3)[[2, 2]])
    state, out = model.step(state, x)
    assert out.hidden.shape == (2, 4)
    assert out.log_probs.shape == (2, 2)
    assert out.reading.shape == (2, model.config.reading_size)
    np.testing.assert_allclose(np.exp(out.log_probs.data).sum(axis=1), 1.0)


@pytest.mark.parametrize("kind", KINDS)
def test_model_gradients(kind):
    rng = np.random.default_rng(11)
    model = build_model(small(kind), rng)
    batch = rng.integers(0, 2, size=(2, 5))
    result = check_gradients(
        lambda: -tc.sum(model.string_log_probs(batch)), model.parameters(), max_coords=6, rng=rng,
        fd_dtype=np.longdouble,
    )
    assert result.fraction_below(1e-4) >= 0.99 and result.worst < 1e-2


def test_log_prob_floor_keeps_loss_finite():
    model = build_model(small("lstm"), np.random.default_rng(0))
    model.params["output.bias"].data[:] = [1e4, -1e4]
    assert np.isfinite(model.log_prob_strings(["11"])).all()


def test_float32_model():
    model = build_model(small("ns", dtype="float32"), np.random.default_rng(0))
    assert model.params["lstm.weight"].data.dtype == np.float32
    assert np.isfinite(model.log_prob_strings(["0101"])).all()


def test_unknown_kind_and_symbol():
    with pytest.raises(ValueError):
        ModelConfig("gru", "01")
    with pytest.raises(ValueError):
        build_model(small("lstm")).encode(["012"])


@pytest.mark.parametrize("kind", KINDS)
def test_checkpoint_round_trip(kind, tmp_path):
    model = build_model(small(kind), np.random.default_rng(5))
    path = tmp_path / "m.npz"
    save_checkpoint(model, path, {"note": 1})
    again, extra = load_checkpoint(path)
    assert extra == {"note": 1} and again.config == model.config
    strings = ["0110", "1"]
    np.testing.assert_array_equal(again.log_prob_strings(strings), model.log_prob_strings(strings))
    assert isinstance(again, type(model))


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, a=np.zeros(1))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_parameter_initialization_ranges():
    model = build_model(ModelConfig("ns", "01"), np.random.default_rng(0))
    assert isinstance(model, NsRnn)
    assert np.abs(model.params["lstm.weight"].data).max() <= 0.1
    assert np.abs(model.params["output.bias"].data).max() <= 0.1
    bound = np.sqrt(6 / (20 + 2))
    assert np.abs(model.params["output.weight"].data).max() <= bound

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor_core as tc
from ..tensor_core import Tensor


@dataclass
class LstmState:
    hidden: Tensor
    cell: Tensor


def init_lstm(rng: np.random.Generator, input_size: int, hidden_size: int, dtype=np.float64) -> dict[str, Tensor]:
    """Gate-stacked weights (input, forget, candidate, output), uniform in [-0.1, 0.1]."""
    def u(*shape):
        return Tensor(rng.uniform(-0.1, 0.1, size=shape).astype(dtype), requires_grad=True)

    return {
        "lstm.weight": u(4 * hidden_size, input_size + hidden_size),
        "lstm.bias": u(4 * hidden_size),
    }


def zero_state(batch_size: int, hidden_size: int, dtype=np.float64) -> LstmState:
    return LstmState(Tensor(np.zeros((batch_size, hidden_size), dtype)), Tensor(np.zeros((batch_size, hidden_size), dtype)))


def lstm_step(params: dict[str, Tensor], state: LstmState, x: Tensor) -> LstmState:
    weight = params["lstm.weight"]
    d = state.hidden.shape[-1]
    if x.shape[-1] + d != weight.shape[1]:
        raise tc.TensorError(f"LSTM expects input size {weight.shape[1] - d}, got {x.shape[-1]}")
    gates = tc.affine(tc.concatenate([x, state.hidden], axis=-1), weight, params["lstm.bias"])
    i = tc.sigmoid(gates[:, :d])
    f = tc.sigmoid(gates[:, d : 2 * d])
    g = tc.tanh(gates[:, 2 * d : 3 * d])
    o = tc.sigmoid(gates[:, 3 * d :])
    cell = f * state.cell + i * g
    return LstmState(o * tc.tanh(cell), cell)

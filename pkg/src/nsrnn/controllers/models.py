"""LSTM language models with and without a stack.

All four models share one step interface: given the one-hot input symbol
and the previous stack reading, the LSTM controller produces a hidden state,
a next-symbol distribution, and (for stack models) actions that update the
stack and yield the reading for the next step.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .. import tensor_core as tc
from ..ns_stack import LOG, NondeterministicStack, num_actions
from ..tensor_core import Tensor
from .lstm import LstmState, init_lstm, lstm_step, zero_state
from .stacks import stratification_step, superposition_step

MODEL_KINDS = ("ns", "superposition", "stratification", "lstm")
LOG_PROB_FLOOR = math.log(1e-45)


@dataclass
class ModelConfig:
    kind: str
    alphabet: tuple[str, ...]
    hidden_size: int = 20
    num_states: int = 2
    num_stack_symbols: int = 2
    stack_embedding_size: int = 20
    dtype: str = "float64"
    block_size: int = 4096

    def __post_init__(self):
        self.alphabet = tuple(self.alphabet)
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if not self.alphabet:
            raise ValueError("alphabet must not be empty")
        if min(self.hidden_size, self.num_states, self.num_stack_symbols, self.stack_embedding_size) < 1:
            raise ValueError("model sizes must be positive")

    @property
    def vocab_size(self) -> int:
        """Input vocabulary: the alphabet plus a beginning-of-string symbol."""
        return len(self.alphabet) + 1

    @property
    def bos(self) -> int:
        return len(self.alphabet)

    @property
    def reading_size(self) -> int:
        if self.kind == "ns":
            return self.num_stack_symbols
        if self.kind == "lstm":
            return 0
        return self.stack_embedding_size

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["alphabet"] = list(self.alphabet)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelConfig":
        return cls(**d)


def xavier_uniform(rng: np.random.Generator, fan_out: int, fan_in: int, dtype) -> Tensor:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype), requires_grad=True)


def small_uniform(rng: np.random.Generator, *shape, dtype) -> Tensor:
    return Tensor(rng.uniform(-0.1, 0.1, size=shape).astype(dtype), requires_grad=True)


@dataclass
class ModelState:
    lstm: LstmState
    reading: Tensor
    stack: Any = None
    extra: dict = field(default_factory=dict)


@dataclass
class StepOutput:
    hidden: Tensor
    reading: Tensor
    log_probs: Tensor  # (B, |Σ|) log next-symbol distribution


class LanguageModel:
    """Base class: LSTM controller plus an output softmax over the alphabet."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.dtype = np.dtype(config.dtype)
        rng = rng if rng is not None else np.random.default_rng(0)
        d = config.hidden_size
        self.params: dict[str, Tensor] = {}
        self.params.update(init_lstm(rng, config.vocab_size + config.reading_size, d, self.dtype))
        self.params["output.weight"] = xavier_uniform(rng, len(config.alphabet), d, self.dtype)
        self.params["output.bias"] = small_uniform(rng, len(config.alphabet), dtype=self.dtype)
        self._init_stack_params(rng)
        for name, p in self.params.items():
            p.name = name

    def _init_stack_params(self, rng: np.random.Generator) -> None:
        pass

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- stack hooks --------------------------------------------------------------
    def _initial_stack(self, batch_size: int, length: int):
        return None

    def _initial_reading(self, batch_size: int) -> Tensor:
        return Tensor(np.zeros((batch_size, self.config.reading_size), self.dtype))

    def _update_stack(self, state: ModelState, hidden: Tensor) -> tuple[Any, Tensor]:
        return state.stack, state.reading

    # -- public interface -------------------------------------------------------------
    def initial_state(self, batch_size: int, length: int) -> ModelState:
        return ModelState(
            zero_state(batch_size, self.config.hidden_size, self.dtype),
            self._initial_reading(batch_size),
            self._initial_stack(batch_size, length),
        )

    def step(self, state: ModelState, x: Tensor, update_stack: bool = True) -> tuple[ModelState, StepOutput]:
        """Advance one symbol: ``x`` is (B, |Σ|+1) one-hot."""
        inp = tc.concatenate([x, state.reading], axis=-1) if self.config.reading_size else x
        lstm = lstm_step(self.params, state.lstm, inp)
        logits = tc.affine(lstm.hidden, self.params["output.weight"], self.params["output.bias"])
        log_probs = tc.log_softmax(logits, axis=-1)
        new_state = ModelState(lstm, state.reading, state.stack, state.extra)
        if update_stack and self.config.reading_size:
            new_state.stack, new_state.reading = self._update_stack(new_state, lstm.hidden)
        return new_state, StepOutput(lstm.hidden, new_state.reading, log_probs)

    def encode(self, strings) -> np.ndarray:
        index = {a: i for i, a in enumerate(self.config.alphabet)}
        try:
            return np.array([[index[a] for a in s] for s in strings], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"symbol {exc} not in model alphabet {self.config.alphabet}") from None

    def string_log_probs(self, batch: np.ndarray) -> Tensor:
        """Log-probability of each string in a same-length batch, shape (B,).

        Step ``j`` reads the previous symbol (BOS first) and predicts ``w_j``;
        the end of the string is not predicted.
        """
        batch = np.asarray(batch)
        b, n = batch.shape
        eye = np.eye(self.config.vocab_size, dtype=self.dtype)
        targets = np.eye(len(self.config.alphabet), dtype=self.dtype)
        state = self.initial_state(b, n)
        total = Tensor(np.zeros(b, self.dtype))
        prev = np.full(b, self.config.bos)
        for j in range(n):
            state, out = self.step(state, Tensor(eye[prev]), update_stack=j < n - 1)
            floored = tc.clamp_min(out.log_probs, LOG_PROB_FLOOR)
            total = total + tc.sum(floored * Tensor(targets[batch[:, j]]), axis=-1)
            prev = batch[:, j]
        return total

    def log_prob_strings(self, strings) -> np.ndarray:
        """Per-string log-probabilities without recording gradients (any lengths)."""
        strings = list(strings)
        out = np.zeros(len(strings))
        by_len: dict[int, list[int]] = {}
        for i, s in enumerate(strings):
            by_len.setdefault(len(s), []).append(i)
        with tc.no_grad():
            for n, idx in sorted(by_len.items()):
                if n == 0:
                    continue
                out[idx] = self.string_log_probs(self.encode([strings[i] for i in idx])).data
        return out


class LstmLanguageModel(LanguageModel):
    """Plain LSTM; its stack reading is the empty vector."""


class NsRnn(LanguageModel):
    """LSTM controller driving a nondeterministic stack."""

    def _init_stack_params(self, rng):
        c = self.config
        n_out = c.num_states * c.num_stack_symbols * c.num_states * num_actions(c.num_stack_symbols)
        self.params["actions.weight"] = xavier_uniform(rng, n_out, c.hidden_size, self.dtype)
        self.params["actions.bias"] = small_uniform(rng, n_out, dtype=self.dtype)

    def _initial_stack(self, batch_size, length):
        c = self.config
        return NondeterministicStack(
            c.num_states, c.num_stack_symbols, batch_size, semiring=LOG, block_size=c.block_size, dtype=self.dtype
        )

    def _initial_reading(self, batch_size):
        reading = np.zeros((batch_size, self.config.num_stack_symbols), self.dtype)
        reading[:, 0] = 1.0  # symbol 0 is the bottom symbol
        return Tensor(reading)

    def action_log_weights(self, hidden: Tensor) -> Tensor:
        """Log Δ for one step: softmax over (target state, action) per (state, top symbol)."""
        c = self.config
        nq, ng, na = c.num_states, c.num_stack_symbols, num_actions(c.num_stack_symbols)
        z = tc.affine(hidden, self.params["actions.weight"], self.params["actions.bias"])
        b = hidden.shape[0]
        z = tc.log_softmax(tc.reshape(z, (b, nq * ng, nq * na)), axis=-1)
        return tc.reshape(z, (b, nq, ng, nq, na))

    def _update_stack(self, state, hidden):
        stack: NondeterministicStack = state.stack
        return stack, stack.step(self.action_log_weights(hidden))


class SuperpositionStackRnn(LanguageModel):
    """Stack whose cells blend push, pop and no-op outcomes."""

    def _init_stack_params(self, rng):
        c = self.config
        self.params["actions.weight"] = xavier_uniform(rng, 3, c.hidden_size, self.dtype)
        self.params["actions.bias"] = small_uniform(rng, 3, dtype=self.dtype)
        self.params["push.weight"] = xavier_uniform(rng, c.stack_embedding_size, c.hidden_size, self.dtype)
        self.params["push.bias"] = small_uniform(rng, c.stack_embedding_size, dtype=self.dtype)

    def _initial_stack(self, batch_size, length):
        # depth never needs to exceed the number of pushes
        return Tensor(np.zeros((batch_size, max(length, 1), self.config.stack_embedding_size), self.dtype))

    def _update_stack(self, state, hidden):
        actions = tc.softmax(tc.affine(hidden, self.params["actions.weight"], self.params["actions.bias"]), axis=-1)
        pushed = tc.sigmoid(tc.affine(hidden, self.params["push.weight"], self.params["push.bias"]))
        return superposition_step(state.stack, actions, pushed)


class StratificationStackRnn(LanguageModel):
    """Stack of vectors with fractional strengths."""

    def _init_stack_params(self, rng):
        c = self.config
        for name in ("push_strength", "pop_strength"):
            self.params[f"{name}.weight"] = xavier_uniform(rng, 1, c.hidden_size, self.dtype)
            self.params[f"{name}.bias"] = small_uniform(rng, 1, dtype=self.dtype)
        self.params["push.weight"] = xavier_uniform(rng, c.stack_embedding_size, c.hidden_size, self.dtype)
        self.params["push.bias"] = small_uniform(rng, c.stack_embedding_size, dtype=self.dtype)

    def _initial_stack(self, batch_size, length):
        m = self.config.stack_embedding_size
        return (Tensor(np.zeros((batch_size, 0, m), self.dtype)), Tensor(np.zeros((batch_size, 0), self.dtype)))

    def _update_stack(self, state, hidden):
        p = self.params
        values, strengths = state.stack
        d = tc.sigmoid(tc.affine(hidden, p["push_strength.weight"], p["push_strength.bias"]))
        u = tc.sigmoid(tc.affine(hidden, p["pop_strength.weight"], p["pop_strength.bias"]))
        v = tc.tanh(tc.affine(hidden, p["push.weight"], p["push.bias"]))
        values, strengths, reading = stratification_step(values, strengths, d, u, v)
        return (values, strengths), reading


MODEL_CLASSES = {
    "ns": NsRnn,
    "superposition": SuperpositionStackRnn,
    "stratification": StratificationStackRnn,
    "lstm": LstmLanguageModel,
}


def build_model(config: ModelConfig, rng: np.random.Generator | None = None) -> LanguageModel:
    return MODEL_CLASSES[config.kind](config, rng)

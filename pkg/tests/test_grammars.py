import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nsrnn.grammars import (
    TASKS,
    Dataset,
    GrammarError,
    MissingSidecarError,
    Pcfg,
    Rule,
    SizedSampler,
    TaskSource,
    UnachievableLengthError,
    build_task_grammar,
    compositions,
    compute_table,
    f,
    inside,
    inside_many,
    nullable_weights,
    p_sample,
    read_dataset,
    refactor_remove_epsilon_unary,
    sample_dataset,
    sample_sized,
    task_params,
    write_dataset,
)

from oracles import chart_recognize, derivation_weights, length_totals

MAX_LEN = 8


@pytest.fixture(scope="module")
def refactored():
    return {t: refactor_remove_epsilon_unary(build_task_grammar(t)) for t in TASKS}


@pytest.fixture(scope="module")
def exhaustive():
    return {t: derivation_weights(build_task_grammar(t), MAX_LEN) for t in TASKS}


# -- task grammars -------------------------------------------------------------------

def test_f_values():
    assert f(60) == pytest.approx(60 / 61)
    assert f(60) == pytest.approx(0.983607, abs=1e-6)


@pytest.mark.parametrize("task", TASKS)
def test_task_grammars_are_probabilistic(task):
    assert build_task_grammar(task).is_probabilistic()


def test_marked_reversal_rules():
    g = build_task_grammar("marked-reversal")
    rules = {(r.lhs, r.rhs): r.weight for r in g.rules}
    assert rules == {
        ("S", ("0", "S", "0")): 0.5 * f(60),
        ("S", ("1", "S", "1")): 0.5 * f(60),
        ("S", ("#",)): pytest.approx(1 - f(60)),
    }


def test_hardest_cfl_rule_inventory():
    g = build_task_grammar("hardest-cfl")
    assert len(g.rules) == 24
    assert set(g.nonterminals) == {"S'", "L", "L'", "R", "R'", "U", "V", "W", "Q", "S", "T"}
    assert g.start == "S'"


def test_bad_task_parameters():
    with pytest.raises(ValueError):
        build_task_grammar("palindromes")
    with pytest.raises(ValueError):
        task_params("marked-reversal", {"mu": -1})
    with pytest.raises(ValueError):
        task_params("marked-reversal", {"nu": 3})


# -- refactoring ------------------------------------------------------------------------

@pytest.mark.parametrize("task", TASKS)
def test_refactored_shape(task, refactored):
    g = refactored[task]
    assert not g.has_epsilon_rules() and not g.has_unary_rules()


@pytest.mark.parametrize("task", TASKS)
def test_refactoring_preserves_string_weights(task, refactored, exhaustive):
    weights = exhaustive[task]
    strings = [w for w in weights if w]
    got = inside_many(refactored[task], strings)
    np.testing.assert_allclose(got, [weights[w] for w in strings], rtol=0, atol=1e-12)
    assert refactored[task].empty_weight == pytest.approx(weights.get("", 0.0), abs=1e-12)


def test_unmarked_reversal_weights():
    g = refactor_remove_epsilon_unary(build_task_grammar("unmarked-reversal"))
    assert inside(g, "00") == pytest.approx(0.5 * f(60) * (1 - f(60)), abs=1e-15)
    assert g.empty_weight == pytest.approx(1 / 61, abs=1e-15)


def test_shaped_grammar_is_fixed_point():
    g = build_task_grammar("marked-reversal")
    again = refactor_remove_epsilon_unary(g)
    assert sorted(map(str, again.rules)) == sorted(map(str, g.rules))


def test_all_mass_on_empty_string_is_an_error():
    g = Pcfg("S", [Rule("S", (), 1.0)])
    with pytest.raises(GrammarError):
        refactor_remove_epsilon_unary(g)


def test_unary_cycle_with_unit_weight_rejected():
    g = Pcfg("S", [Rule("S", ("A",), 1.0), Rule("A", ("S",), 0.5), Rule("A", ("a",), 0.5)])
    with pytest.raises(GrammarError):
        refactor_remove_epsilon_unary(Pcfg("S", [Rule("S", ("A",), 1.0), Rule("A", ("S",), 1.0)]))
    # a convergent cycle is collapsed by the geometric series: G(a) = 1
    h = refactor_remove_epsilon_unary(g)
    assert inside(h, "a") == pytest.approx(1.0)


def test_nullable_weights():
    g = build_task_grammar("hardest-cfl")
    null = nullable_weights(g)
    assert null["U"] == pytest.approx(2 / 3)
    assert null["Q"] == pytest.approx(0.75)
    assert null["S"] == 0.0


# -- length tables ------------------------------------------------------------------------

def test_compositions():
    assert list(compositions(4, 2)) == [(1, 3), (2, 2), (3, 1)]
    assert list(compositions(2, 3)) == []
    assert list(compositions(0, 0)) == [()]


def test_marked_reversal_table(refactored):
    t = compute_table(refactored["marked-reversal"], 5)
    assert t["S", 1] == pytest.approx(1 / 61)
    assert t["S", 2] == 0.0
    assert t["S", 3] == pytest.approx(60 / 61 / 61)


@pytest.mark.parametrize("task", TASKS)
def test_table_matches_exhaustive_derivations(task, refactored, exhaustive):
    g = refactored[task]
    totals = length_totals(exhaustive[task], MAX_LEN)
    for method in ("compositions", "convolution"):
        t = compute_table(g, MAX_LEN, method)
        got = np.array([t[g.start, n] for n in range(1, MAX_LEN + 1)])
        np.testing.assert_allclose(got, totals[1:], rtol=0, atol=1e-12)


def test_table_bound_must_be_positive(refactored):
    with pytest.raises(ValueError):
        compute_table(refactored["dyck"], 0)


@pytest.mark.parametrize("task", TASKS)
def test_table_entries_are_probabilities(task, refactored):
    t = compute_table(refactored[task], 20)
    assert (t.values >= 0).all() and (t.values <= 1 + 1e-12).all()
    assert not t.values[:, 0].any()


# -- sampling -------------------------------------------------------------------------------

@pytest.mark.parametrize("task", TASKS)
@given(seed=st.integers(0, 2**31 - 1), length=st.integers(1, 14))
def test_sampled_strings_have_requested_length_and_parse(task, refactored, seed, length):
    g = refactored[task]
    t = compute_table(g, 14)
    rng = np.random.default_rng(seed)
    if t[g.start, length] == 0:
        with pytest.raises(UnachievableLengthError):
            sample_sized(g, t, g.start, length, rng)
        return
    w = sample_sized(g, t, g.start, length, rng)
    assert len(w) == length and inside(g, w) > 0


def test_unachievable_length(refactored):
    g = refactored["marked-reversal"]
    with pytest.raises(UnachievableLengthError):
        sample_sized(g, compute_table(g, 4), "S", 2, np.random.default_rng(0))
    with pytest.raises(UnachievableLengthError):
        sample_dataset(g, 2, 2, 5, np.random.default_rng(0))


def test_dyck_length_six_sampling_distribution(refactored, exhaustive):
    g = refactored["dyck"]
    t = compute_table(g, 6)
    exact = {w: p for w, p in exhaustive["dyck"].items() if len(w) == 6}
    total = sum(exact.values())
    sampler = SizedSampler(g, t)
    rng = np.random.default_rng(123)
    draws = 100_000
    counts: dict[str, int] = {}
    for _ in range(draws):
        w = sampler.sample(g.start, 6, rng)
        counts[w] = counts.get(w, 0) + 1
    assert set(counts) <= set(exact)
    tv = 0.5 * sum(abs(counts.get(w, 0) / draws - p / total) for w, p in exact.items())
    assert tv < 0.02


def test_length_frequencies_with_restarts(refactored):
    g = refactored["marked-reversal"]
    out = sample_dataset(g, 1, 3, 10_000, np.random.default_rng(4))
    ones = sum(len(w) == 1 for w in out)
    assert {len(w) for w in out} == {1, 3}
    assert abs(ones - 5_000) <= 3 * math.sqrt(10_000 * 0.25)
    assert sample_dataset(g, 1, 3, 0, np.random.default_rng(4)) == []


def test_sampling_is_reproducible(refactored):
    g = refactored["hardest-cfl"]
    a = sample_dataset(g, 10, 20, 30, np.random.default_rng(9))
    b = sample_dataset(g, 10, 20, 30, np.random.default_rng(9))
    assert a == b


# -- inside and p_sample -------------------------------------------------------------------------

def test_marked_reversal_inside_values(refactored):
    g = refactored["marked-reversal"]
    assert inside(g, "#") == 1 / 61
    assert inside(g, "0#0") == 30 / 3721
    assert inside(g, "01") == 0.0
    assert inside(g, "0x0") == 0.0


def test_p_sample_on_short_range(refactored):
    g = refactored["marked-reversal"]
    t = compute_table(g, 3)
    assert p_sample(g, t, (1, 3), "#") == 0.5
    with pytest.raises(ValueError):
        p_sample(g, t, (1, 3), "00")
    with pytest.raises(ValueError):
        p_sample(g, t, (1, 3), "0000")


@pytest.mark.parametrize("task,lo,hi", [("marked-reversal", 1, 5), ("dyck", 2, 6), ("unmarked-reversal", 1, 6)])
def test_p_sample_sums_to_one(task, lo, hi, refactored, exhaustive):
    g = refactored[task]
    t = compute_table(g, hi)
    strings = [w for w in exhaustive[task] if lo <= len(w) <= hi]
    assert sum(p_sample(g, t, (lo, hi), w) for w in strings) == pytest.approx(1.0, abs=1e-12)


def test_single_symbol_cross_entropy():
    ds = Dataset(["#"], np.array([math.log(1 / 61)]))
    assert abs(ds.true_cross_entropy() - math.log(61)) <= 1e-12


@pytest.mark.parametrize("task", TASKS)
def test_inside_positive_iff_recognized(task, refactored):
    g = refactored[task]
    alphabet = sorted(g.terminals)
    for n in range(1, 6 if len(alphabet) <= 4 else 4):
        for w in map("".join, itertools.product(alphabet, repeat=n)):
            assert (inside(g, w) > 0) == chart_recognize(g, w), w


# -- text formats and datasets ------------------------------------------------------------------------

def test_grammar_text_round_trip(tmp_path):
    g = build_task_grammar("hardest-cfl")
    path = tmp_path / "g.pcfg"
    g.save(path)
    again = Pcfg.load(path)
    assert again.start == g.start
    assert sorted(map(str, again.rules)) == sorted(map(str, g.rules))
    with pytest.raises(GrammarError):
        Pcfg.from_text("S -> a")


def test_dataset_sidecar_round_trip(tmp_path):
    ds = TaskSource.build("dyck", None, 12).sample(4, 12, 25, seed=3)
    path = tmp_path / "train.txt"
    write_dataset(ds, path)
    again = read_dataset(path)
    assert again.strings == ds.strings and again.seed == 3 and again.task == "dyck"
    np.testing.assert_array_equal(again.log_p_sample, ds.log_p_sample)
    (tmp_path / "train.txt.json").unlink()
    with pytest.raises(MissingSidecarError):
        read_dataset(path)


@pytest.mark.parametrize("task", TASKS)
def test_inside_agrees_with_recognizer_on_samples_and_mutations(task, refactored):
    g = refactored[task]
    rng = np.random.default_rng(8)
    alphabet = sorted(g.terminals)
    samples = sample_dataset(g, 6, 10, 15, rng, compute_table(g, 10))
    for w in samples:
        assert chart_recognize(g, w) and inside(g, w) > 0
        i = int(rng.integers(len(w)))
        mutated = w[:i] + alphabet[int(rng.integers(len(alphabet)))] + w[i + 1 :]
        assert (inside(g, mutated) > 0) == chart_recognize(g, mutated)

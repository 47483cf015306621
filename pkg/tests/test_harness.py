import logging
import math
import random

import numpy as np
import pytest

from nsrnn import tensor_core as tc
from nsrnn.controllers import load_checkpoint
from nsrnn.grammars import Dataset, TaskSource, log_p_sample_many
from nsrnn.harness import (
    METRICS_HEADER,
    CellResult,
    DataConfig,
    EpochRecord,
    Job,
    JobResult,
    Metrics,
    TrainConfig,
    TrainingError,
    cross_entropy_diff,
    differences_from_strings_csv,
    evaluate_on,
    generate_splits,
    generate_test_set,
    grid_cells,
    grid_search_restarts,
    length_batches,
    model_config_for,
    run_job,
    save_report,
    select_best,
    test_seed as seed_for_task,
    train,
)
from nsrnn.tensor_core import Tensor


class ConstantModel:
    """Validation likelihood never changes; training still takes gradient steps."""

    def __init__(self, value=-1.0, nan=False):
        self.params = {"theta": Tensor(np.array([0.5]), requires_grad=True)}
        self.value, self.nan = value, nan

    def parameters(self):
        return list(self.params.values())

    def encode(self, strings):
        return np.zeros((len(strings), len(strings[0])), dtype=np.int64)

    def string_log_probs(self, batch):
        b, n = batch.shape
        theta = self.params["theta"]
        per = -(theta * theta + (math.nan if self.nan else 1.0)) * float(n)
        return tc.reshape(per, (1,)) * Tensor(np.ones(b))

    def log_prob_strings(self, strings):
        return np.array([self.value * len(s) for s in strings])


class TableModel(ConstantModel):
    def __init__(self, table):
        super().__init__()
        self.table = table

    def log_prob_strings(self, strings):
        return np.array([self.table[s] for s in strings])


@pytest.fixture(scope="module")
def small_splits():
    return generate_splits(DataConfig(task="marked-reversal", train_size=60, valid_size=20), seed=0)


# -- configs and metrics ---------------------------------------------------------------

def test_train_config_validation():
    assert TrainConfig().learning_rate_grid == (0.01, 0.005, 0.001, 0.0005)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate_grid=())
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(dtype="float16")
    assert TrainConfig.from_dict(TrainConfig(seed=4).to_dict()) == TrainConfig(seed=4)


def test_metrics_csv_round_trip():
    m = Metrics()
    m.add(EpochRecord(1, 0.5, 0.4, 0.1, 0.01))
    m.add(EpochRecord(2, 0.25, 1 / 3, -0.02, 0.009))
    text = m.to_csv()
    assert text.splitlines()[0] == ",".join(METRICS_HEADER)
    assert Metrics.from_csv(text).epochs == m.epochs
    with pytest.raises(ValueError):
        m.add(EpochRecord(2, 0, 0, 0, 0))


# -- cross-entropy ---------------------------------------------------------------------------

def test_cross_entropy_diff_examples():
    ds = Dataset(["#"], np.array([-math.log(61)]))
    assert ds.true_cross_entropy() == pytest.approx(math.log(61), abs=1e-12)
    uniform = ConstantModel(value=-math.log(3))
    assert cross_entropy_diff(uniform, ds) == pytest.approx(math.log(3) - math.log(61), abs=1e-12)
    assert cross_entropy_diff(TableModel({"#": -math.log(61)}), ds) == 0.0


def test_true_distribution_scores_zero_at_every_length():
    test_set = generate_test_set(DataConfig(task="dyck", test_min_length=4, test_max_length=10, test_per_length=5))
    model = TableModel(dict(zip(test_set.strings, test_set.log_p_sample)))
    report = evaluate_on(model, test_set)
    assert [n for n, _ in report.rows] == [4, 6, 8, 10]
    assert all(abs(d) < 1e-12 for _, d in report.rows)


def test_unachievable_lengths_are_skipped_with_notice(caplog):
    config = DataConfig(task="marked-reversal", test_min_length=10, test_max_length=14, test_per_length=3)
    with caplog.at_level(logging.INFO):
        test_set = generate_test_set(config)
    assert sorted({len(s) for s in test_set.strings}) == [11, 13]
    assert "skipping length 12" in caplog.text
    report = evaluate_on(ConstantModel(), test_set)
    assert report.skipped == [10, 12, 14]


def test_persisted_per_string_values_reproduce_table(tmp_path):
    test_set = generate_test_set(DataConfig(task="marked-reversal", test_min_length=5, test_max_length=9,
                                            test_per_length=4))
    rng = np.random.default_rng(0)
    model = TableModel({s: -rng.uniform(3, 9) for s in test_set.strings})
    report = evaluate_on(model, test_set)
    path = tmp_path / "eval.csv"
    save_report(report, path)
    assert path.read_text().splitlines()[0] == "length,ce_diff"
    recomputed = differences_from_strings_csv((tmp_path / "eval.csv.strings.csv").read_text())
    assert recomputed == report.rows


# -- data protocol ---------------------------------------------------------------------------------

def test_test_set_is_fixed_per_task_and_splits_vary_with_seed():
    assert seed_for_task("dyck") == seed_for_task("dyck") != seed_for_task("marked-reversal")
    config = DataConfig(task="dyck", train_size=20, valid_size=20, test_min_length=4, test_max_length=8,
                        test_per_length=3)
    a_train, a_valid = generate_splits(config, seed=1)
    b_train, b_valid = generate_splits(config, seed=2)
    assert a_valid.strings != b_valid.strings and a_train.strings != b_train.strings
    assert generate_test_set(config).strings == generate_test_set(config).strings
    assert generate_test_set(config).seed == seed_for_task("dyck")


def test_full_scale_config():
    c = DataConfig.full_scale("dyck")
    assert (c.min_length, c.max_length, c.train_size, c.valid_size) == (40, 80, 10_000, 1_000)
    assert (c.test_min_length, c.test_max_length, c.test_per_length) == (40, 100, 100)


def test_length_batches(small_splits):
    train_set, _ = small_splits
    batches = length_batches(train_set, 10, np.random.default_rng(0))
    assert len(batches) == len(train_set) // 10
    for b in batches:
        assert len(b) == 10 and len({len(train_set.strings[i]) for i in b}) == 1


def test_batch_lengths_follow_empirical_distribution():
    strings = ["0"] * 90 + ["000"] * 10
    ds = Dataset(strings, np.zeros(100))
    rng = np.random.default_rng(0)
    lengths = [len(ds.strings[b[0]]) for _ in range(200) for b in length_batches(ds, 10, rng)]
    assert abs(np.mean(np.array(lengths) == 1) - 0.9) < 0.03


# -- training ------------------------------------------------------------------------------------------

def test_schedule_decays_once_then_stops(small_splits):
    train_set, valid_set = small_splits
    result = train(ConstantModel(), train_set, valid_set, TrainConfig(learning_rate=0.01, max_epochs=50))
    trace = result.metrics.lr_trace
    assert result.best_epoch == 1 and len(trace) == 11 and result.stopped_early
    assert trace[:6] == [0.01] * 6 and trace[6:] == [pytest.approx(0.009)] * 5


def test_nan_loss_aborts_with_batch(small_splits):
    train_set, valid_set = small_splits
    with pytest.raises(TrainingError) as info:
        train(ConstantModel(nan=True), train_set, valid_set, TrainConfig())
    assert len(info.value.batch) == 10 and info.value.epoch == 1


def test_ns_rnn_first_epoch_is_finite(small_splits, tmp_path):
    train_set, valid_set = small_splits
    job = Job(model_config_for("ns", "marked-reversal"), TrainConfig(max_epochs=1), str(tmp_path))
    result = run_job(job, train_set, valid_set)
    record = result.metrics.epochs[0]
    assert np.isfinite([record.train_ce, record.valid_ce, record.valid_ce_diff]).all()
    model, extra = load_checkpoint(tmp_path / f"{job.name}.npz")
    assert extra["task"] == "marked-reversal"
    # the checkpoint holds the best-validation parameters
    logp = model.log_prob_strings(valid_set.strings)
    assert -logp.sum() / valid_set.num_symbols - valid_set.true_cross_entropy() == pytest.approx(
        record.valid_ce_diff, abs=1e-12)


def test_best_parameters_are_restored(small_splits):
    train_set, valid_set = small_splits
    model_cfg = model_config_for("lstm", "marked-reversal")
    from nsrnn.controllers import build_model
    model = build_model(model_cfg, np.random.default_rng(0))
    result = train(model, train_set, valid_set, TrainConfig(max_epochs=3, learning_rate=0.01))
    assert cross_entropy_diff(model, valid_set) == pytest.approx(result.best_valid_ce_diff, abs=1e-12)


def test_training_is_deterministic(small_splits, tmp_path):
    train_set, valid_set = small_splits
    config = TrainConfig(max_epochs=2, seed=7)
    model = model_config_for("stratification", "marked-reversal", embedding_size=2)
    run_job(Job(model, config, str(tmp_path / "a")), train_set, valid_set)
    run_job(Job(model, config, str(tmp_path / "b")), train_set, valid_set)
    name = Job(model, config).name + ".csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_target_stops_training(small_splits):
    train_set, valid_set = small_splits
    result = train(ConstantModel(value=-0.1), train_set, valid_set, TrainConfig(target_ce_diff=10.0))
    assert len(result.metrics.epochs) == 1 and result.stopped_early


# -- grid --------------------------------------------------------------------------------------------------

def test_grid_sizes():
    config = TrainConfig()
    assert len(grid_cells("superposition", "dyck", config)) == 12
    assert len(grid_cells("stratification", "dyck", config)) == 12
    assert len(grid_cells("lstm", "dyck", config)) == 4
    cells = grid_cells("ns", "hardest-cfl", config)
    assert len(cells) == 4
    assert {(m.num_states, m.num_stack_symbols) for _, m in cells} == {(3, 3)}
    assert model_config_for("ns", "padded-reversal").num_states == 3


def fake_cell(lr, diffs):
    model = model_config_for("lstm", "dyck")
    runs = [JobResult(f"r{i}", model, TrainConfig(), Metrics(), d) for i, d in enumerate(diffs)]
    return CellResult(lr, model, runs)


def test_selection_uses_mean_and_ignores_order():
    cells = [fake_cell(0.01, [0.1, 0.9]), fake_cell(0.005, [0.4, 0.4]), fake_cell(0.001, [0.0, 1.0])]
    assert select_best(cells).learning_rate == 0.005
    for seed in range(5):
        shuffled = cells[:]
        random.Random(seed).shuffle(shuffled)
        assert select_best(shuffled) is cells[1]


def test_grid_search_runs_and_persists(small_splits, tmp_path):
    train_set, valid_set = small_splits
    config = TrainConfig(learning_rate_grid=(0.01, 0.001), restarts=2, max_epochs=1, seed=3)
    grid = grid_search_restarts("lstm", train_set, valid_set, config, out_dir=str(tmp_path))
    assert len(grid.cells) == 2 and all(len(c.runs) == 2 for c in grid.cells)
    assert {r.train.seed for r in grid.cells[0].runs} == {3, 4}
    assert len(list(tmp_path.glob("*.csv"))) == 4
    assert (tmp_path / "lstm-grid.json").exists()
    assert grid.best_cell in grid.cells


def test_atomic_write_respects_umask(tmp_path):
    import os
    from nsrnn.harness.train import write_atomic
    old = os.umask(0o022)
    try:
        write_atomic(tmp_path / "m.csv", "x\n")
    finally:
        os.umask(old)
    assert (tmp_path / "m.csv").stat().st_mode & 0o777 == 0o644

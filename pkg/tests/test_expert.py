"""Deterministic expert tests: the four step rules and their guards."""

import numpy as np

from cot2.bundle import ModelRecord, TaskKind
from cot2.context import TabularContext
from cot2.expert import (
    run_expert,
    step_a_select_well_performing,
    step_b_identify_outliers,
    step_c_select_suitable,
    step_d_final,
)

BIN = TaskKind("binclass", class_count=2)
MULTI = TaskKind("multiclass", class_count=4)
REG = TaskKind("regression")


def records_from(vals, trains=None):
    trains = trains or [v for v in vals]
    return [
        ModelRecord(f"m{i}", f"Model {chr(65 + i)}", t, v)
        for i, (v, t) in enumerate(zip(vals, trains))
    ]


# --------------------------------------------------------------------- step a


def test_step_a_band_membership():
    records = records_from([0.95, 0.94, 0.80])
    assert step_a_select_well_performing(records, BIN) == [0, 1]


def test_step_a_overfit_screen():
    records = records_from([0.70, 0.94, 0.80], trains=[1.00, 0.95, 0.82])
    # model 0 has gap 0.30 > 0.10: screened; band re-anchors on model 1
    assert step_a_select_well_performing(records, BIN) == [1]


def test_step_a_all_screened_keeps_best_val():
    records = records_from([0.70, 0.60], trains=[1.00, 0.99])
    assert step_a_select_well_performing(records, BIN) == [0]


def test_step_a_regression_relative_band():
    records = records_from([1.00, 1.04, 1.20], trains=[1.00, 1.04, 1.20])
    assert step_a_select_well_performing(records, REG) == [0, 1]  # within 5% of best RMSE


def test_step_a_no_train_metric_never_screened():
    records = records_from([0.95, 0.94], trains=[None, None])
    assert step_a_select_well_performing(records, BIN) == [0, 1]


# --------------------------------------------------------------------- step b


def test_step_b_outlier_rules():
    labels = np.array([1, 1, 1])
    preds_wp = np.array([
        [0, 0, 0, 0],   # 0/4 correct -> outlier
        [1, 1, 0, 0],   # 2/4 correct -> kept (not strictly fewer than half)
        [1, 1, 1, 0],   # 3/4 -> kept
    ])
    assert step_b_identify_outliers(labels, preds_wp, BIN) == [1, 2]


def test_step_b_all_outliers_guard():
    labels = np.array([1, 1])
    preds_wp = np.zeros((2, 4), dtype=int)
    assert step_b_identify_outliers(labels, preds_wp, BIN) == [0, 1]


def test_step_b_regression_tolerance():
    labels = np.array([0.0, 0.0])
    preds_wp = np.array([[0.05, -0.05], [0.9, 0.9]])
    kept = step_b_identify_outliers(labels, preds_wp, REG, label_range=(0.0, 1.0))
    assert kept == [0]  # tolerance 0.1 * span keeps only the close neighbor


# --------------------------------------------------------------------- step c


def test_step_c_local_accuracy_orders():
    records = records_from([0.9, 0.9])
    labels = np.array([1, 1, 0, 0])
    preds = np.column_stack([labels, [1, 0, 1, 0]])  # model 0 perfect, model 1 at 50%
    assert step_c_select_suitable(labels, preds, records, BIN) == [0, 1]


def test_step_c_tie_broken_by_val_metric():
    records = records_from([0.8, 0.9])
    labels = np.array([1, 0])
    preds = np.column_stack([labels, labels])  # both perfect locally
    assert step_c_select_suitable(labels, preds, records, BIN) == [1, 0]


def test_step_c_caps_at_m():
    records = records_from([0.9, 0.8])
    labels = np.array([1, 0])
    preds = np.column_stack([labels, labels])
    assert len(step_c_select_suitable(labels, preds, records, BIN)) == 2


def test_step_c_takes_top_three():
    records = records_from([0.9, 0.8, 0.7, 0.6, 0.5])
    labels = np.array([1, 1, 0, 0])
    preds = np.column_stack([labels, labels, labels, labels, labels])
    assert step_c_select_suitable(labels, preds, records, BIN) == [0, 1, 2]


# --------------------------------------------------------------------- step d


def test_step_d_suitable_votes_count_twice():
    # suitable {0, 1} vote label 1 -> 2*2 = 4; well-performing extras
    # {2, 3, 4} vote label 0 -> 3. Hand-enumerated: 4 > 3.
    target = np.array([1, 1, 0, 0, 0])
    votes = {1: 2 * 2, 0: 3}
    assert max(votes, key=votes.get) == 1
    result = step_d_final(
        kept_labels=np.array([0, 0]),
        target_predictions=target,
        suitable=[0, 1],
        well_performing=[2, 3, 4],
        frequencies=np.array([0.9, 0.1]),
        task=BIN,
    )
    assert result == 1


def test_step_d_tie_breaks_on_neighbor_majority():
    target = np.array([1, 0])
    result = step_d_final(
        kept_labels=np.array([0, 0, 1]),
        target_predictions=target,
        suitable=[0, 1],
        well_performing=[],
        frequencies=np.array([0.5, 0.5]),
        task=BIN,
    )
    assert result == 0  # 2-2 vote tie; neighbors favor 0


def test_step_d_tie_then_frequency_then_index():
    target = np.array([2, 3])
    result = step_d_final(
        kept_labels=np.array([0]),  # neighbor majority helps neither candidate
        target_predictions=target,
        suitable=[0, 1],
        well_performing=[],
        frequencies=np.array([0.1, 0.1, 0.2, 0.6]),
        task=MULTI,
    )
    assert result == 3  # tied votes and neighbor counts; label 3 more frequent
    result = step_d_final(
        kept_labels=np.array([0]),
        target_predictions=target,
        suitable=[0, 1],
        well_performing=[],
        frequencies=np.array([0.25, 0.25, 0.25, 0.25]),
        task=MULTI,
    )
    assert result == 2  # full tie -> lower class index


def test_step_d_regression_mean_clipped():
    result = step_d_final(
        kept_labels=np.array([1.0]),
        target_predictions=np.array([1.0, 3.0]),
        suitable=[0, 1],
        well_performing=[0],
        frequencies=None,
        task=REG,
        label_range=(0.0, 2.0),
    )
    assert result == 2.0  # mean 2.0 clipped into [0, 2]


# ------------------------------------------------------------------ run_expert


def _context(records, neighbor_labels, neighbor_preds, target_preds, task=BIN, freqs=None):
    return TabularContext(
        task=task,
        model_records=records,
        neighbor_labels=np.asarray(neighbor_labels),
        neighbor_predictions=np.asarray(neighbor_preds),
        target_predictions=np.asarray(target_preds),
        frequencies=np.asarray(freqs) if freqs is not None else (np.array([0.5, 0.5]) if task.is_classification else None),
        label_range=None if task.is_classification else (0.0, 1.0),
    )


def test_run_expert_deterministic():
    rng = np.random.default_rng(0)
    records = records_from(list(rng.uniform(0.6, 0.99, 5)))
    ctx = _context(
        records,
        rng.integers(0, 2, 6),
        rng.integers(0, 2, (6, 5)),
        rng.integers(0, 2, 5),
    )
    a, b = run_expert(ctx), run_expert(ctx)
    assert a.final == b.final
    assert a.well_performing == b.well_performing
    assert a.suitable == b.suitable
    assert a.outlier_neighbors == b.outlier_neighbors


def test_run_expert_alias_invariance_under_permutation():
    rng = np.random.default_rng(1)
    vals = [0.91, 0.84, 0.77, 0.95, 0.60]  # all distinct: no positional ties
    neighbor_labels = rng.integers(0, 2, 8)
    neighbor_preds = rng.integers(0, 2, (8, 5))
    target = rng.integers(0, 2, 5)

    def build(order):
        # model_id carries the original identity; aliases stay positional
        records = [
            ModelRecord(f"orig{p}", f"Model {chr(65 + pos)}", vals[p], vals[p])
            for pos, p in enumerate(order)
        ]
        ctx = _context(records, neighbor_labels, neighbor_preds[:, order], target[order])
        trace = run_expert(ctx)
        to_id = {r.alias: r.model_id for r in records}
        return trace, {to_id[a] for a in trace.well_performing}, {to_id[a] for a in trace.suitable}

    base, base_wp, base_suitable = build(list(range(5)))
    permuted, perm_wp, perm_suitable = build([3, 0, 4, 1, 2])
    assert permuted.final == base.final
    assert perm_wp == base_wp
    assert perm_suitable == base_suitable


def test_run_expert_oracle_dominance():
    # one perfect model among constant-noise models that never share a wrong
    # label: with label-pure neighborhoods the expert must match the oracle
    # on every class (vote ties resolve through the neighbor majority)
    task = TaskKind("multiclass", class_count=6)
    n_models = 6
    records = records_from([1.0, 0.21, 0.18, 0.22, 0.19, 0.20])
    freqs = np.full(6, 1 / 6)
    for target_label in range(6):
        neighbor_labels = np.full(10, target_label)
        neighbor_preds = np.column_stack(
            [neighbor_labels] + [np.full(10, m) for m in range(1, n_models)]
        )
        target = np.array([target_label] + list(range(1, n_models)))
        ctx = _context(records, neighbor_labels, neighbor_preds, target, task=task, freqs=freqs)
        assert run_expert(ctx).final == target_label


def test_trace_fields_populated(tmp_path):
    records = records_from([0.9, 0.8])
    ctx = _context(records, [0, 1], [[0, 1], [1, 1]], [0, 1])
    trace = run_expert(ctx)
    assert set(trace.well_performing) <= {"Model A", "Model B"}
    assert len(trace.suitable) >= 1
    assert len(trace.rationale) == 4
    trace.dump(tmp_path / "trace.json")
    assert (tmp_path / "trace.json").exists()
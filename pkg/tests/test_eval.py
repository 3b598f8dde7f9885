import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pfcl.errors import ConfigError, DomainError
from pfcl.evaluation import (
    EvalMatrix,
    accuracy,
    avg_accuracy,
    evaluate_all,
    forgetting,
    load_matrix_csv,
    save_matrix_csv,
)
from pfcl.linalg import make_rng
from pfcl.nn import Layer, MlpModel
from pfcl.tasks import Dataset, make_gaussian_dataset, split_class_stream

from oracles import avg_accuracy_direct, forgetting_direct

unit_matrix = st.integers(2, 6).flatmap(
    lambda t: st.lists(
        st.lists(st.floats(0, 1), min_size=t, max_size=t),
        min_size=t, max_size=t,
    )
).map(lambda rows: EvalMatrix(a=np.array(rows)))


def random_model(dims, seed):
    return MlpModel.init(dims, make_rng(seed))


def test_accuracy_perfect_on_separable_data():
    # one-layer model reading off the dominant coordinate
    model = MlpModel([Layer(w=np.eye(3), b=np.zeros((1, 3)))])
    x = np.eye(3)[np.array([0, 1, 2, 1])] * 5.0
    ds = Dataset(x=x, y=np.array([0, 1, 2, 1]), class_count=3)
    assert accuracy(model, ds) == 1.0


def test_accuracy_mask_of_all_classes_matches_unmasked():
    model = random_model((4, 8, 5), seed=31)
    ds = Dataset(x=make_rng(32).normal(size=(50, 4)),
                 y=make_rng(33).integers(0, 5, size=50), class_count=5)
    assert accuracy(model, ds) == accuracy(model, ds, mask=range(5))


def test_accuracy_random_model_two_masked_classes_near_half():
    model = random_model((6, 10, 8), seed=34)
    n = 1000
    ds = Dataset(x=make_rng(35).normal(size=(n, 6)) * 3.0,
                 y=make_rng(36).integers(0, 2, size=n), class_count=8)
    acc = accuracy(model, ds, mask={0, 1})
    assert abs(acc - 0.5) <= 0.05


def test_accuracy_tie_breaks_to_lowest_class():
    # all-zero logits: unmasked argmax is class 0, masked argmax is the
    # smallest class inside the mask
    model = MlpModel([Layer(w=np.zeros((2, 3)), b=np.zeros((1, 3)))])
    ds = Dataset(x=np.ones((4, 2)), y=np.array([0, 0, 1, 2]), class_count=3)
    assert accuracy(model, ds) == pytest.approx(0.5)
    masked = Dataset(x=np.ones((4, 2)), y=np.array([1, 1, 2, 2]), class_count=3)
    assert accuracy(model, masked, mask={1, 2}) == pytest.approx(0.5)


def test_accuracy_rejects_empty_test_and_stray_labels():
    model = random_model((2, 3), seed=37)
    empty = Dataset(x=np.zeros((0, 2)), y=np.zeros(0, dtype=int), class_count=3)
    with pytest.raises(DomainError):
        accuracy(model, empty)
    ds = Dataset(x=np.zeros((2, 2)), y=np.array([0, 2]), class_count=3)
    with pytest.raises(DomainError):
        accuracy(model, ds, mask={0, 1})


def test_avg_accuracy_hand_cases():
    assert avg_accuracy(EvalMatrix(a=np.array([[0.9, 0.0], [0.8, 0.6]]))) == pytest.approx(0.7)
    assert avg_accuracy(EvalMatrix(a=np.array([[0.42]]))) == pytest.approx(0.42)
    assert avg_accuracy(EvalMatrix(a=np.full((3, 3), 0.25))) == pytest.approx(0.25)


def test_forgetting_hand_case_exact():
    m = EvalMatrix(a=np.array([[0.9, 0.0], [0.5, 0.7]]))
    assert forgetting(m) == 0.4


def test_forgetting_nonpositive_when_accuracy_never_drops():
    m = EvalMatrix(a=np.array([[0.5, 0.1, 0.0],
                               [0.6, 0.55, 0.2],
                               [0.7, 0.6, 0.9]]))
    assert forgetting(m) <= 0.0


def test_forgetting_requires_two_tasks():
    with pytest.raises(DomainError):
        forgetting(EvalMatrix(a=np.array([[0.5]])))


@settings(max_examples=60, deadline=None)
@given(unit_matrix)
def test_metrics_match_bruteforce(m):
    assert abs(avg_accuracy(m) - avg_accuracy_direct(m.a.tolist())) <= 1e-12
    assert abs(forgetting(m) - forgetting_direct(m.a.tolist())) <= 1e-12


def test_metrics_ignore_diagnostic_upper_triangle():
    rng = make_rng(38)
    base = rng.uniform(0, 1, size=(4, 4))
    altered = base.copy()
    altered[np.triu_indices(4, k=1)] = rng.uniform(0, 1, size=6)
    a, b = EvalMatrix(a=base), EvalMatrix(a=altered)
    assert avg_accuracy(a) == avg_accuracy(b) or np.allclose(
        base[-1], altered[-1])  # last row unchanged by construction above
    # forgetting reads only columns < T-1 and the lower rows
    base2 = base.copy()
    base2[0, 3] = 0.123
    assert forgetting(EvalMatrix(a=base2)) == forgetting(a)


def test_evaluate_all_protocol_checks_and_dominance():
    ds = make_gaussian_dataset(6, 5, 3.0, 30, make_rng(39))
    stream = split_class_stream(ds, 3)
    model = random_model((5, 12, 6), seed=40)
    class_row = evaluate_all(model, stream, "class_il")
    task_row = evaluate_all(model, stream, "task_il")
    assert all(t >= c for t, c in zip(task_row, class_row))
    with pytest.raises(ConfigError):
        evaluate_all(model, stream, "domain_il")
    with pytest.raises(ConfigError):
        evaluate_all(model, stream, "nonsense")


def test_untrained_task_il_near_chance_over_subset():
    ds = make_gaussian_dataset(10, 8, 0.0, 200, make_rng(41))
    stream = split_class_stream(ds, 5)
    accs = []
    for seed in range(5):
        model = random_model((8, 10, 10), seed=100 + seed)
        accs.extend(evaluate_all(model, stream, "task_il"))
    assert abs(np.mean(accs) - 0.5) <= 0.1


def test_matrix_csv_round_trip(tmp_path):
    m = EvalMatrix(a=make_rng(42).uniform(0, 1, size=(4, 4)))
    path = tmp_path / "m.csv"
    save_matrix_csv(m, path)
    back = load_matrix_csv(path)
    assert np.array_equal(m.a, back.a)
    header = path.read_text().splitlines()[0]
    assert header == "trained_through,task_0,task_1,task_2,task_3"


def test_matrix_validation():
    with pytest.raises(DomainError):
        EvalMatrix(a=np.array([[0.5, 1.5], [0.1, 0.2]]))
    with pytest.raises(DomainError):
        EvalMatrix(a=np.zeros((2, 3)))

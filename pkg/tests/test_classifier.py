import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse
from scipy.special import expit

from ltsample.classifier import (
    Metrics,
    ModelWeights,
    NonFiniteLossError,
    SearchGrid,
    TrainConfig,
    evaluate,
    grid_search,
    logistic_grad,
    logistic_loss,
    predict,
    stack_pairs,
    train,
)
from ltsample.dataset import Label
from ltsample.features import FeatureVector

DIM = 16


def onehot(idx, dim=DIM, weight=1.0):
    return FeatureVector(entries={idx: weight}, dim=dim)


def separable_pairs(n_per_class=12, dim=DIM):
    # class 1 lives on index 0, class 0 on index 1: linearly separable
    pairs = [(onehot(0, dim), Label.RELEVANT) for _ in range(n_per_class)]
    pairs += [(onehot(1, dim), Label.IRRELEVANT) for _ in range(n_per_class)]
    return pairs


def random_fixture(rng):
    n = int(rng.integers(3, 13))
    dim = int(rng.integers(4, 24))
    x = sparse.csr_matrix(rng.normal(size=(n, dim)) * rng.random((n, dim)))
    y = rng.integers(0, 2, size=n).astype(float)
    w = rng.normal(size=dim)
    b = float(rng.normal())
    wd = float(rng.choice([0.0, 1e-4, 1e-2, 0.3]))
    return x, y, w, b, wd


def numeric_grad(w, b, x, y, wd, eps=1e-6):
    gw = np.zeros_like(w)
    for i in range(len(w)):
        up, down = w.copy(), w.copy()
        up[i] += eps
        down[i] -= eps
        gw[i] = (logistic_loss(up, b, x, y, wd) - logistic_loss(down, b, x, y, wd)) / (2 * eps)
    gb = (logistic_loss(w, b + eps, x, y, wd) - logistic_loss(w, b - eps, x, y, wd)) / (2 * eps)
    return gw, gb


class TestGradient:
    def test_matches_central_differences_over_50_fixtures(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            x, y, w, b, wd = random_fixture(rng)
            gw, gb = logistic_grad(w, b, x, y, wd)
            nw, nb = numeric_grad(w, b, x, y, wd)
            ga = np.append(gw, gb)
            gn = np.append(nw, nb)
            rel = np.linalg.norm(ga - gn) / max(np.linalg.norm(gn), 1e-12)
            assert rel < 1e-4

    def test_zero_residual_gives_decay_only_gradient(self):
        # perfectly confident correct predictions: BCE gradient ~ 0
        x = sparse.csr_matrix(np.array([[50.0], [-50.0]]))
        y = np.array([1.0, 0.0])
        w = np.array([1.0])
        gw, gb = logistic_grad(w, 0.0, x, y, weight_decay=0.5)
        assert gw[0] == pytest.approx(0.5, abs=1e-10)
        assert gb == pytest.approx(0.0, abs=1e-10)

    def test_loss_is_stable_for_extreme_scores(self):
        x = sparse.csr_matrix(np.array([[1.0], [-1.0]]))
        y = np.array([0.0, 1.0])
        loss = logistic_loss(np.array([800.0]), 0.0, x, y, 0.0)
        assert np.isfinite(loss)
        assert loss == pytest.approx(800.0, rel=1e-9)


class TestMetrics:
    def test_hand_computed_confusion(self):
        m = Metrics.from_confusion(tp=3, fp=1, fn=1, tn=5)
        assert m.f1_pos == 0.75
        assert m.precision_pos == 0.75
        assert m.recall_pos == 0.75
        assert m.precision_neg == pytest.approx(5 / 6)
        assert m.recall_neg == pytest.approx(5 / 6)
        assert m.accuracy == 0.8
        assert m.macro_f1 == pytest.approx((0.75 + 5 / 6) / 2)

    def test_zero_division_paths(self):
        empty = Metrics.from_confusion(0, 0, 0, 0)
        assert empty.f1_pos == 0.0 and empty.f1_neg == 0.0 and empty.accuracy == 0.0
        no_pred_pos = Metrics.from_confusion(tp=0, fp=0, fn=2, tn=3)
        assert no_pred_pos.precision_pos == 0.0
        assert no_pred_pos.f1_pos == 0.0

    def test_as_dict_round_trip(self):
        m = Metrics.from_confusion(2, 1, 1, 4)
        d = m.as_dict()
        assert d["tp"] == 2 and d["f1_pos"] == m.f1_pos
        assert set(d) == {"tp", "fp", "fn", "tn", "precision_pos", "recall_pos", "f1_pos",
                          "precision_neg", "recall_neg", "f1_neg", "accuracy", "macro_f1"}


@settings(max_examples=200, deadline=None)
@given(st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(0, 40), st.integers(0, 40)))
def test_metric_values_bounded(counts):
    m = Metrics.from_confusion(*counts)
    for value in (m.precision_pos, m.recall_pos, m.f1_pos, m.precision_neg,
                  m.recall_neg, m.f1_neg, m.accuracy, m.macro_f1):
        assert 0.0 <= value <= 1.0


class TestEvaluate:
    def test_crafted_confusion_through_the_model(self):
        w = np.zeros(DIM)
        w[0], w[1] = 1.0, -1.0
        weights = ModelWeights(w=w, b=0.0)
        pairs = (
            [(onehot(0), Label.RELEVANT)] * 3      # predicted 1, gold 1: TP
            + [(onehot(0), Label.IRRELEVANT)] * 1  # predicted 1, gold 0: FP
            + [(onehot(1), Label.RELEVANT)] * 1    # predicted 0, gold 1: FN
            + [(onehot(1), Label.IRRELEVANT)] * 5  # predicted 0, gold 0: TN
        )
        m = evaluate(weights, pairs)
        assert (m.tp, m.fp, m.fn, m.tn) == (3, 1, 1, 5)
        assert m.f1_pos == 0.75

    def test_zero_score_counts_positive(self):
        weights = ModelWeights.zeros(DIM)
        pairs = [(onehot(0), Label.RELEVANT), (onehot(1), Label.IRRELEVANT)]
        m = evaluate(weights, pairs)
        assert (m.tp, m.fp, m.fn, m.tn) == (1, 1, 0, 0)

    def test_empty_validation_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            evaluate(ModelWeights.zeros(DIM), [])


class TestStackPairs:
    def test_row_order(self):
        pairs = [(onehot(2), Label.RELEVANT), (onehot(5), Label.IRRELEVANT)]
        x, y = stack_pairs(pairs, DIM)
        assert x.shape == (2, DIM)
        assert x[0, 2] == 1.0 and x[1, 5] == 1.0
        assert y.tolist() == [1.0, 0.0]

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            stack_pairs([(onehot(0, dim=8), Label.RELEVANT)], DIM)


class TestPredict:
    def test_zero_weights_give_half(self):
        assert predict(ModelWeights.zeros(DIM), onehot(3)) == 0.5

    def test_matches_expit(self):
        w = np.zeros(DIM)
        w[3] = 2.0
        weights = ModelWeights(w=w, b=-0.5)
        assert predict(weights, onehot(3, weight=0.8)) == pytest.approx(expit(2.0 * 0.8 - 0.5))

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            predict(ModelWeights.zeros(8), onehot(0, dim=DIM))


class TestSaveLoad:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        w = np.zeros(64)
        w[rng.choice(64, size=10, replace=False)] = rng.normal(size=10)
        weights = ModelWeights(w=w, b=-0.1234567890123456, version=7)
        path = tmp_path / "weights.txt"
        weights.save(path)
        loaded = ModelWeights.load(path)
        assert loaded.version == 7
        assert loaded.b == weights.b
        assert np.array_equal(loaded.w, weights.w)

    def test_zeros_round_trip(self, tmp_path):
        path = tmp_path / "weights.txt"
        ModelWeights.zeros(32).save(path)
        loaded = ModelWeights.load(path)
        assert loaded.dim == 32 and loaded.b == 0.0 and loaded.version == 0
        assert not loaded.w.any()


class TestTrainConfig:
    @pytest.mark.parametrize("kwargs", [
        {"learning_rate": 0.0},
        {"learning_rate": -1.0},
        {"weight_decay": -1e-9},
        {"batch": 0},
        {"max_epochs": -1},
        {"patience": -1},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestTrain:
    CFG = TrainConfig(learning_rate=1.0, max_epochs=50, patience=10, batch=8, seed=0)

    def test_learns_separable_problem(self):
        pairs = separable_pairs()
        weights = train(ModelWeights.zeros(DIM), pairs, self.CFG, validation=pairs)
        assert evaluate(weights, pairs).f1_pos == 1.0

    def test_version_always_advances(self):
        pairs = separable_pairs(2)
        init = ModelWeights(w=np.zeros(DIM), b=0.0, version=4)
        out = train(init, pairs, TrainConfig(max_epochs=0), validation=pairs)
        assert out.version == 5
        assert np.array_equal(out.w, init.w) and out.b == init.b

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            train(ModelWeights.zeros(DIM), [], self.CFG, validation=separable_pairs(1))

    def test_deterministic(self):
        pairs = separable_pairs()
        a = train(ModelWeights.zeros(DIM), pairs, self.CFG, validation=pairs)
        b = train(ModelWeights.zeros(DIM), pairs, self.CFG, validation=pairs)
        assert np.array_equal(a.w, b.w) and a.b == b.b

    def test_returns_best_epoch_not_last(self):
        pairs = separable_pairs()
        trajectory = []

        def watch(epoch, w, b, f1):
            trajectory.append((f1, w.copy(), b))

        weights = train(ModelWeights.zeros(DIM), pairs, self.CFG, validation=pairs,
                        on_epoch=watch)
        assert trajectory, "training ran at least one epoch"
        init_f1 = 0.5  # zero weights predict everything positive on a balanced set: F1 = 2/3
        best_f1 = max(f1 for f1, _, _ in trajectory)
        winners = [(w, b) for f1, w, b in trajectory if f1 == best_f1]
        if best_f1 > init_f1:
            assert any(np.array_equal(weights.w, w) and weights.b == b for w, b in winners)

    def test_early_stop_keeps_init_when_nothing_improves(self):
        # all-positive training data on an all-positive validation slice:
        # the init already scores F1 1.0, so no epoch can strictly improve it
        pairs = [(onehot(0), Label.RELEVANT)] * 6
        epochs = []
        weights = train(
            ModelWeights.zeros(DIM), pairs,
            TrainConfig(max_epochs=30, patience=3, seed=0),
            validation=pairs,
            on_epoch=lambda e, w, b, f1: epochs.append(e),
        )
        assert len(epochs) == 3  # stopped by patience, not max_epochs
        assert np.array_equal(weights.w, np.zeros(DIM)) and weights.b == 0.0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self):
        pairs = separable_pairs(4)
        cfg = TrainConfig(learning_rate=1e200, weight_decay=10.0, max_epochs=5, patience=5)
        with pytest.raises(NonFiniteLossError):
            train(ModelWeights.zeros(DIM), pairs, cfg, validation=pairs)

    def test_warm_start_preserves_good_model(self):
        pairs = separable_pairs()
        first = train(ModelWeights.zeros(DIM), pairs, self.CFG, validation=pairs)
        again = train(first, pairs, self.CFG, validation=pairs)
        assert again.version == first.version + 1
        assert evaluate(again, pairs).f1_pos == 1.0


class TestGridSearch:
    def test_ties_break_to_smallest_lr_then_wd(self):
        pairs = separable_pairs(2)
        base = TrainConfig(max_epochs=0)  # every cell returns init: all F1s equal
        grid = SearchGrid(learning_rates=(1.0, 0.3), weight_decays=(1e-4, 0.0))
        cfg, _ = grid_search(ModelWeights.zeros(DIM), pairs, grid, pairs, base)
        assert cfg.learning_rate == 0.3
        assert cfg.weight_decay == 0.0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_skips_diverging_cells(self):
        pairs = separable_pairs()
        base = TrainConfig(max_epochs=20, patience=5, batch=8, seed=0)
        grid = SearchGrid(learning_rates=(1e200, 1.0), weight_decays=(10.0,))
        cfg, weights = grid_search(ModelWeights.zeros(DIM), pairs, grid, pairs, base)
        assert cfg.learning_rate == 1.0
        assert np.all(np.isfinite(weights.w))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_all_cells_failing_raises(self):
        pairs = separable_pairs()
        base = TrainConfig(max_epochs=5, patience=5)
        grid = SearchGrid(learning_rates=(1e200,), weight_decays=(10.0,))
        with pytest.raises(NonFiniteLossError, match="every grid cell"):
            grid_search(ModelWeights.zeros(DIM), pairs, grid, pairs, base)

    def test_picks_cell_that_learns(self):
        pairs = separable_pairs()
        base = TrainConfig(max_epochs=50, patience=10, batch=8, seed=0)
        # from a strongly negative bias, 1e-9 steps go nowhere (stuck at F1 0)
        # while the workable rate recovers fully
        init = ModelWeights(w=np.zeros(DIM), b=-5.0)
        grid = SearchGrid(learning_rates=(1e-9, 1.0), weight_decays=(0.0,))
        cfg, weights = grid_search(init, pairs, grid, pairs, base)
        assert cfg.learning_rate == 1.0
        assert evaluate(weights, pairs).f1_pos == 1.0

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            SearchGrid(learning_rates=(), weight_decays=(0.0,))

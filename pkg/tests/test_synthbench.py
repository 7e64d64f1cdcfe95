import re

import pytest

from ltsample.bandit import BanditConfig
from ltsample.classifier import SearchGrid, TrainConfig
from ltsample.features import FeaturizerConfig
from ltsample.lts import LtsConfig
from ltsample.synthbench import (
    _ANIMALS,
    _PRODUCTS,
    _topic_markers,
    CompareRow,
    CompareTable,
    SynthSpec,
    benchmark_lts_config,
    benchmark_rules,
    default_spec,
    diffuse_spec,
    generate,
    gold_split_ids,
    paired_compare,
)

_FILLER = re.compile(r"^topic(\d+)term\d+$")


def title_topics(title):
    return {int(m.group(1)) for m in map(_FILLER.match, title.split()) if m}


def title_markers(title):
    words = set(title.split())
    return words & set(_ANIMALS), words & set(_PRODUCTS)


SMALL = SynthSpec(n_items=400, positive_rate=0.05, n_topics=4,
                  positive_topics=(0, 2), vocab_size=10, seed=0)


class TestSynthSpec:
    @pytest.mark.parametrize("kwargs", [
        {"n_items": 0},
        {"positive_rate": 0.0},
        {"positive_rate": 1.0},
        {"n_topics": 0},
        {"positive_topics": ()},
        {"positive_topics": (1, 1)},
        {"positive_topics": (20,)},
        {"positive_topics": (-1,)},
        {"vocab_size": 0},
        {"title_len": (0, 5)},
        {"title_len": (5, 4)},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SynthSpec(**kwargs)

    def test_default_and_diffuse(self):
        spec = default_spec(3)
        assert spec.n_items == 20000 and spec.positive_rate == 0.05
        assert spec.positive_topics == (0, 7, 14)
        assert spec.seed == 3
        assert diffuse_spec().positive_topics == tuple(range(20))


class TestTopicMarkers:
    def test_single_slot_keeps_everything(self):
        assert _topic_markers(_ANIMALS, 0, 1) == _ANIMALS

    def test_each_slot_drops_one_stride(self):
        for slot in range(3):
            subset = _topic_markers(_ANIMALS, slot, 3)
            excluded = (slot - 1) % 3
            dropped = {tok for j, tok in enumerate(_ANIMALS) if j % 3 == excluded}
            assert set(subset) == set(_ANIMALS) - dropped
            assert dropped.isdisjoint(subset)

    def test_subsets_overlap_pairwise_and_cover(self):
        subsets = [set(_topic_markers(_PRODUCTS, s, 3)) for s in range(3)]
        assert subsets[0] != subsets[1] != subsets[2]
        for a in range(3):
            for b in range(a + 1, 3):
                assert subsets[a] & subsets[b]
                assert subsets[a] | subsets[b] == set(_PRODUCTS)


class TestGenerate:
    def test_deterministic(self):
        a, b = generate(SMALL), generate(SMALL)
        assert [(x.id, x.title, x.gold_label) for x in a] == \
               [(x.id, x.title, x.gold_label) for x in b]

    def test_exact_positive_count_and_ids(self):
        corpus = generate(SMALL)
        assert len(corpus) == 400
        stats = corpus.stats
        assert stats is not None
        assert stats.n_pos == round(0.05 * 400) == 20
        assert corpus.items[0].id == "s000000"
        assert len(corpus.ids) == 400

    def test_infeasible_rate_rejected(self):
        with pytest.raises(ValueError, match="infeasible"):
            generate(SynthSpec(n_items=10, positive_rate=0.05))

    def test_positives_confined_to_positive_topics(self):
        corpus = generate(SMALL)
        for item in corpus:
            topics = title_topics(item.title)
            assert len(topics) == 1, "filler vocabularies are topic-disjoint"
            if item.gold_label == 1:
                assert topics <= {0, 2}

    def test_markers_appear_in_every_positive_and_no_negative(self):
        corpus = generate(SMALL)
        for item in corpus:
            animals, products = title_markers(item.title)
            if item.gold_label == 1:
                assert len(animals) == 1 and len(products) == 1
            else:
                assert not animals and not products

    def test_positive_markers_respect_topic_subsets(self):
        corpus = generate(SMALL)
        slots = {0: 0, 2: 1}  # sorted positive topics -> slot index
        for item in corpus:
            if item.gold_label != 1:
                continue
            (topic,) = title_topics(item.title)
            slot = slots[topic]
            animals, products = title_markers(item.title)
            assert animals <= set(_topic_markers(_ANIMALS, slot, 2))
            assert products <= set(_topic_markers(_PRODUCTS, slot, 2))

    def test_title_lengths(self):
        corpus = generate(SMALL)
        lo, hi = SMALL.title_len
        for item in corpus:
            n_words = len(item.title.split())
            if item.gold_label == 1:
                assert lo + 2 <= n_words <= hi + 2
            else:
                assert lo <= n_words <= hi

    def test_single_topic_spec(self):
        spec = SynthSpec(n_items=50, positive_rate=0.1, n_topics=1,
                         positive_topics=(0,), vocab_size=5)
        corpus = generate(spec)
        assert corpus.stats.n_pos == 5
        assert all(title_topics(x.title) == {0} for x in corpus)


class TestBenchmarkRules:
    def test_rules_know_a_fraction_of_each_vocabulary(self):
        rules = benchmark_rules()
        assert set(rules.animal_names) < set(_ANIMALS)
        assert set(rules.product_terms) < set(_PRODUCTS)
        assert len(rules.animal_names) == 6
        assert len(rules.product_terms) == 3


class TestGoldSplit:
    def test_stratified_and_sorted(self):
        corpus = generate(SMALL)
        ids = gold_split_ids(corpus, fraction=0.1, seed=0)
        assert ids == sorted(ids)
        assert len(ids) == len(set(ids))
        labels = {item.id: item.gold_label for item in corpus}
        n_pos = sum(1 for i in ids if labels[i] == 1)
        assert n_pos == round(0.1 * 20) == 2
        assert len(ids) - n_pos == round(0.1 * 380) == 38

    def test_deterministic_per_seed(self):
        corpus = generate(SMALL)
        assert gold_split_ids(corpus, 0.1, seed=0) == gold_split_ids(corpus, 0.1, seed=0)
        assert gold_split_ids(corpus, 0.1, seed=0) != gold_split_ids(corpus, 0.1, seed=1)

    def test_fraction_bounds(self):
        corpus = generate(SMALL)
        with pytest.raises(ValueError, match="fraction"):
            gold_split_ids(corpus, fraction=0.0)
        with pytest.raises(ValueError, match="fraction"):
            gold_split_ids(corpus, fraction=1.0)


class TestBenchmarkConfig:
    def test_seed_plumbs_through(self):
        cfg = benchmark_lts_config(seed=11)
        assert cfg.seed == 11
        assert cfg.train.seed == 11
        assert cfg.k >= 1 and cfg.n_per_iter >= 1


def row(strategy="lts", budget=100, seed=0, f1=0.5, **over):
    base = dict(strategy=strategy, budget=budget, seed=seed, f1=f1,
                precision=0.5, recall=0.5, s_pos=10, s_neg=20, ratio=0.5,
                calls=100, cost=2.0, wall_s=1.0, truncated=False, no_data=False)
    base.update(over)
    return CompareRow(**base)


class TestCompareTable:
    def test_median_over_seeds(self):
        table = CompareTable(rows=(
            row(seed=0, f1=0.2), row(seed=1, f1=0.8), row(seed=2, f1=0.5),
            row(strategy="random", seed=0, f1=0.9),
        ))
        assert table.median("lts", "f1") == 0.5
        assert table.median("random", "f1") == 0.9

    def test_rows_for_budget_filter(self):
        table = CompareTable(rows=(row(budget=100), row(budget=200)))
        assert len(table.rows_for("lts")) == 2
        assert len(table.rows_for("lts", budget=200)) == 1

    def test_median_missing_strategy(self):
        with pytest.raises(ValueError, match="no rows"):
            CompareTable(rows=()).median("lts", "f1")

    def test_csv_layout(self, tmp_path):
        table = CompareTable(rows=(row(f1=0.25, ratio=0.125, cost=2.0),))
        lines = table.to_csv_lines()
        assert lines[0].startswith("strategy,budget,seed,f1,")
        assert lines[1] == "lts,100,0,0.25,0.5,0.5,10,20,0.125,100,2.0,1.0,0,0"
        path = tmp_path / "table.csv"
        table.write_csv(path)
        assert path.read_text() == "\n".join(lines) + "\n"


QUICK_CFG = LtsConfig(
    k=3, n_per_iter=20, max_pos=14, baseline_init=0.0, max_iterations=10,
    bandit=BanditConfig(alpha=1.0, beta=3.0, delta=0.99),
    train=TrainConfig(learning_rate=10.0, max_epochs=20, patience=5, batch=16),
    grid=SearchGrid((10.0,), (0.0,)),
    parallel_labels=1,
)
QUICK_FCFG = FeaturizerConfig(dim=2**12)


class TestPairedCompare:
    def test_full_grid_of_rows(self):
        corpus = generate(SMALL)
        split = gold_split_ids(corpus, 0.2, seed=0)
        table = paired_compare(corpus, split, ["lts", "random", "kbs"],
                               budgets=[60], seeds=[0, 1],
                               base_cfg=QUICK_CFG, fcfg=QUICK_FCFG)
        assert len(table.rows) == 6
        assert {(r.strategy, r.seed) for r in table.rows} == {
            (s, i) for s in ("lts", "random", "kbs") for i in (0, 1)
        }
        for r in table.rows:
            assert r.budget == 60
            assert r.calls <= 60
            assert r.cost == r.calls * 0.02
            assert r.s_pos + r.s_neg == r.calls  # oracle spends one call per label
            assert 0.0 <= r.f1 <= 1.0

    def test_deterministic_apart_from_walltime(self):
        corpus = generate(SMALL)
        split = gold_split_ids(corpus, 0.2, seed=0)
        kwargs = dict(budgets=[40], seeds=[0], base_cfg=QUICK_CFG, fcfg=QUICK_FCFG)
        a = paired_compare(corpus, split, ["lts", "random"], **kwargs)
        b = paired_compare(corpus, split, ["lts", "random"], **kwargs)
        strip = lambda r: (r.strategy, r.budget, r.seed, r.f1, r.precision, r.recall,
                           r.s_pos, r.s_neg, r.ratio, r.calls, r.cost,
                           r.truncated, r.no_data)
        assert [strip(r) for r in a.rows] == [strip(r) for r in b.rows]

    def test_zero_budget_reports_no_data(self):
        corpus = generate(SMALL)
        split = gold_split_ids(corpus, 0.2, seed=0)
        table = paired_compare(corpus, split, ["random"], budgets=[0], seeds=[0],
                               base_cfg=QUICK_CFG, fcfg=QUICK_FCFG)
        (r,) = table.rows
        assert r.no_data and not r.truncated
        assert r.calls == 0 and r.cost == 0.0

    def test_unknown_strategy_rejected(self):
        corpus = generate(SMALL)
        split = gold_split_ids(corpus, 0.2, seed=0)
        with pytest.raises(ValueError, match="unknown strategy"):
            paired_compare(corpus, split, ["dowsing"], budgets=[10], seeds=[0],
                           base_cfg=QUICK_CFG, fcfg=QUICK_FCFG)

    def test_empty_strategies_rejected(self):
        corpus = generate(SMALL)
        with pytest.raises(ValueError, match="strategies"):
            paired_compare(corpus, gold_split_ids(corpus, 0.2), [], budgets=[10],
                           seeds=[0])

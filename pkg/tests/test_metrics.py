import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import accuracy_score, f1_score

from mereval.errors import EmptyEvaluation, InvariantViolation, MissingDataset, OutOfRange
from mereval.extraction import Sentiment
from mereval.metrics import (
    BasicInstance,
    FineGrainedInstance,
    MetricReport,
    SentimentInstance,
    Task,
    acc_waf,
    dataset_mean,
    hit_rate,
    hits,
    sentiment_binarize,
    set_metrics,
)
from mereval.taxonomy import EmotionWheel, GroupingPipeline, LemmaMap, Sector, SynonymMap
from conftest import ALPHABET, random_wheels
from oracles import confusion_oracle, set_metrics_oracle

POS, NEG, NEU = Sentiment.POSITIVE, Sentiment.NEGATIVE, Sentiment.NEUTRAL


def fg(truth, pred, sid="s"):
    return FineGrainedInstance(sid, frozenset(truth), frozenset(pred))


class TestSetMetrics:
    def test_worked_example(self, identity):
        r = set_metrics([fg({"happy", "angry"}, {"happy", "sad", "excited"})], identity)
        assert r.exact == {"Precision_s": Fraction(1, 3), "Recall_s": Fraction(1, 2), "F_s": Fraction(2, 5)}
        assert r.primary == pytest.approx(0.4, abs=1e-15)
        assert r.primary_name == "F_s"

    def test_perfect(self, pipeline):
        insts = [fg({"happy", "angry"}, {"happy", "angry"}, "a"), fg({"sad"}, {"sad"}, "b")]
        r = set_metrics(insts, pipeline)
        assert r.exact["F_s"] == r.exact["Precision_s"] == r.exact["Recall_s"] == 1

    def test_all_empty_predictions(self, pipeline):
        r = set_metrics([fg({"happy"}, set(), "a"), fg({"sad"}, set(), "b")], pipeline)
        assert r.primary == r.secondary["Precision_s"] == r.secondary["Recall_s"] == 0

    def test_empty_prediction_skip_option(self, identity):
        insts = [fg({"happy"}, {"happy"}, "a"), fg({"sad"}, set(), "b")]
        counted = set_metrics(insts, identity)
        skipped = set_metrics(insts, identity, skip_empty_predictions=True)
        assert counted.exact["Precision_s"] == Fraction(1, 2)
        assert skipped.exact["Precision_s"] == 1
        assert counted.exact["Recall_s"] == skipped.exact["Recall_s"] == Fraction(1, 2)

    def test_grouping_applied(self, small_pipeline):
        r = set_metrics([fg({"happiness", "delight"}, {"joyful", "bliss"})], small_pipeline)
        assert r.primary == 1

    def test_errors(self, identity):
        with pytest.raises(EmptyEvaluation):
            set_metrics([], identity)
        with pytest.raises(InvariantViolation):
            fg(set(), {"happy"})

    def test_per_wheel_reported(self, pipeline):
        r = set_metrics([fg({"happy"}, {"joyful"})], pipeline)
        assert set(r.per_wheel) == set(pipeline.wheel_names)


def _random_instances(rng, n, max_labels=5, alphabet=ALPHABET):
    insts = []
    for i in range(n):
        truth = rng.sample(alphabet, rng.randint(1, max_labels))
        pred = rng.sample(alphabet, rng.randint(0, max_labels))
        insts.append(fg(truth, pred, f"s{i}"))
    return insts


def test_set_metrics_matches_bruteforce_oracle():
    rng = random.Random(11)
    for trial in range(200):
        wheels = random_wheels(rng, rng.randint(1, 3))
        p = GroupingPipeline(LemmaMap(), SynonymMap(), [w for w, _ in wheels])
        insts = _random_instances(rng, rng.randint(1, 8))
        report = set_metrics(insts, p)
        prec, rec, f = set_metrics_oracle([(i.truth, i.prediction) for i in insts], [m for _, m in wheels])
        assert abs(report.secondary["Precision_s"] - prec) <= 1e-12
        assert abs(report.secondary["Recall_s"] - rec) <= 1e-12
        assert abs(report.primary - f) <= 1e-12


@settings(max_examples=200)
@given(st.randoms(use_true_random=False))
def test_set_metrics_bounds_and_order(rnd):
    wheels = random_wheels(rnd, rnd.randint(1, 3))
    p = GroupingPipeline(LemmaMap(), SynonymMap(), [w for w, _ in wheels])
    insts = _random_instances(rnd, rnd.randint(1, 6))
    r = set_metrics(insts, p)
    for vals in r.per_wheel.values():
        pr, rc, f = vals["Precision_s"], vals["Recall_s"], vals["F_s"]
        assert 0 <= pr <= 1 and 0 <= rc <= 1
        assert min(pr, rc) - 1e-15 <= f <= max(pr, rc) + 1e-15
        assert (f == 0) == (pr * rc == 0)
    shuffled = list(insts)
    rnd.shuffle(shuffled)
    assert set_metrics(shuffled, p).exact == r.exact


def test_synonym_relabel_invariance(pipeline):
    base = [fg({"happy", "sad"}, {"happy", "worried"}, "a"), fg({"angry"}, {"angry", "sad"}, "b")]
    relabeled = [fg({"happy", "sad"}, {"joyful", "worried"}, "a"), fg({"angry"}, {"angry", "sad"}, "b")]
    assert set_metrics(base, pipeline).exact == set_metrics(relabeled, pipeline).exact
    bases = [BasicInstance("a", "happy", frozenset({"happy"}))]
    variants = [BasicInstance("a", "happy", frozenset({"glad"}))]
    assert hit_rate(bases, pipeline).exact == hit_rate(variants, pipeline).exact


class TestHitRate:
    def test_lemma_example(self):
        p = GroupingPipeline(LemmaMap({"happier": "happy"}), SynonymMap(),
                             [EmotionWheel("id", (Sector("neutral", frozenset()),))])
        assert hits([BasicInstance("a", "happy", frozenset({"happier", "nervous"}))], p, 1) == [1]

    def test_empty_prediction(self, pipeline):
        assert hits([BasicInstance("a", "happy", frozenset())], pipeline, 1) == [0]

    def test_perfect(self, pipeline):
        insts = [BasicInstance(str(i), t, frozenset({t})) for i, t in enumerate(["happy", "sad", "angry"])]
        r = hit_rate(insts, pipeline)
        assert r.primary == 1 and r.primary_name == "HIT"

    def test_mean_of_indicators(self, pipeline):
        insts = [
            BasicInstance("a", "happy", frozenset({"joyful"})),
            BasicInstance("b", "sad", frozenset({"angry"})),
            BasicInstance("c", "anger", frozenset({"furious"})),
            BasicInstance("d", "worry", frozenset()),
        ]
        per = hits(insts, pipeline, 1)
        assert set(per) <= {0, 1}
        assert hit_rate(insts, pipeline).exact["HIT"] == Fraction(sum(per), len(per))

    def test_empty(self, pipeline):
        with pytest.raises(EmptyEvaluation):
            hit_rate([], pipeline)

    def test_adding_correct_label_never_decreases(self):
        rng = random.Random(3)
        for _ in range(200):
            wheels = random_wheels(rng, rng.randint(1, 3))
            p = GroupingPipeline(LemmaMap(), SynonymMap(), [w for w, _ in wheels])
            insts = [BasicInstance(str(i), rng.choice(ALPHABET), frozenset(rng.sample(ALPHABET, rng.randint(0, 4))))
                     for i in range(rng.randint(1, 6))]
            before = hit_rate(insts, p).exact["HIT"]
            j = rng.randrange(len(insts))
            fixed = list(insts)
            fixed[j] = BasicInstance(insts[j].sample_id, insts[j].truth, insts[j].prediction | {insts[j].truth})
            assert hit_rate(fixed, p).exact["HIT"] >= before


class TestSentiment:
    @pytest.mark.parametrize("score, expected", [(-1.7, NEG), (0.2, POS), (0.0, None), (-0.0, None), (3.0, POS)])
    def test_binarize(self, score, expected):
        assert sentiment_binarize(score, (-3, 3)) is expected

    def test_binarize_range(self):
        with pytest.raises(OutOfRange):
            sentiment_binarize(1.5, (-1, 1))
        with pytest.raises(OutOfRange):
            sentiment_binarize(float("nan"))

    def test_worked_example(self):
        insts = [SentimentInstance("a", 1.0, POS), SentimentInstance("b", 2.0, NEG), SentimentInstance("c", -1.0, NEG)]
        r = acc_waf(insts)
        assert r.exact == {"ACC": Fraction(2, 3), "WAF": Fraction(2, 3)}
        assert r.primary_name == "WAF"

    def test_all_correct_and_all_neutral(self):
        right = [SentimentInstance("a", 1.0, POS), SentimentInstance("b", -1.0, NEG)]
        assert acc_waf(right).exact == {"ACC": 1, "WAF": 1}
        neutral = [SentimentInstance("a", 1.0, NEU), SentimentInstance("b", -1.0, NEU)]
        assert acc_waf(neutral).exact == {"ACC": 0, "WAF": 0}

    def test_zero_scores_excluded(self):
        insts = [SentimentInstance("a", 0.0, POS), SentimentInstance("b", 1.0, POS)]
        r = acc_waf(insts)
        assert r.excluded == 1 and r.n_samples == 1 and r.primary == 1
        with pytest.raises(EmptyEvaluation):
            acc_waf([SentimentInstance("a", 0.0, POS)])

    def test_random_against_oracles(self):
        rng = random.Random(5)
        for _ in range(300):
            n = rng.randint(1, 30)
            insts = [SentimentInstance(str(i), rng.choice([-2.0, -0.5, 0.0, 0.5, 2.0]), rng.choice([POS, NEG, NEU]))
                     for i in range(n)]
            kept = [i for i in insts if i.score != 0]
            if not kept:
                continue
            truth = ["positive" if i.score > 0 else "negative" for i in kept]
            pred = [i.predicted.value for i in kept]
            acc, waf = confusion_oracle(truth, pred)
            r = acc_waf(insts)
            assert abs(r.secondary["ACC"] - acc) <= 1e-12
            assert abs(r.primary - waf) <= 1e-12
            sk = f1_score(truth, pred, labels=["positive", "negative"], average="weighted", zero_division=0)
            assert abs(r.primary - sk) <= 1e-12
            assert abs(r.secondary["ACC"] - accuracy_score(truth, pred)) <= 1e-12
            rng.shuffle(insts)
            assert acc_waf(insts).exact == r.exact


def _report(v, task=Task.FINE_GRAINED):
    return MetricReport(task, v, exact={"F_s" if task == Task.FINE_GRAINED else "WAF": Fraction(str(v))})


class TestDatasetMean:
    def test_two_datasets(self):
        assert dataset_mean({"a": _report(0.7854), "b": _report(0.7880)}) == pytest.approx(0.7867, abs=1e-12)

    def test_table_row(self):
        row = [78.54, 78.80, 55.65, 60.54, 81.30, 80.90, 88.49, 86.18, 62.52]
        reports = {f"d{i}": _report(v / 100) for i, v in enumerate(row)}
        assert round(100 * dataset_mean(reports), 2) == 74.77

    def test_single_and_constant(self):
        assert dataset_mean({"a": _report(0.25)}) == 0.25
        assert dataset_mean({str(i): _report(0.3) for i in range(9)}) == pytest.approx(0.3, abs=1e-15)

    def test_missing(self):
        with pytest.raises(MissingDataset) as info:
            dataset_mean({"MER2023": _report(0.5)}, expected=["MER2023", "MELD"])
        assert "MELD" in str(info.value)
        with pytest.raises(EmptyEvaluation):
            dataset_mean({})

    def test_order_independent(self):
        vals = [0.1, 0.2, 0.7, 1 / 3, 2 / 7]
        a = {str(i): _report(v) for i, v in enumerate(vals)}
        b = {str(i): _report(v) for i, v in reversed(list(enumerate(vals)))}
        assert dataset_mean(a) == dataset_mean(b)
        assert math.isclose(dataset_mean(a), math.fsum(vals) / 5, abs_tol=1e-15)

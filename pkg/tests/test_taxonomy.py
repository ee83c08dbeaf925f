import random

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from mereval.errors import EmptyLabel, InvariantViolation, ParseError
from mereval.taxonomy import (
    EmotionWheel,
    GroupingPipeline,
    LemmaMap,
    Sector,
    SynonymMap,
    apply_lemma,
    apply_synonym,
    apply_wheel,
    group,
    load_lemma,
    load_synonyms,
    load_wheel,
    normalize_label,
    wheel_from_dict,
)
from oracles import group_oracle


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("  Happy! ", "happy"),
        ("caught  off guard", "caught off guard"),
        ("Caught off-guard.", "caught off-guard"),
        ("-tense-", "tense"),
        ("don't care", "dont care"),
        ("\t SAD\n", "sad"),
        ("快乐", "快乐"),
    ],
)
def test_normalize_label(raw, expected):
    assert normalize_label(raw) == expected


@pytest.mark.parametrize("raw", ["!!!", "", "   ", "123", "- -"])
def test_normalize_label_rejects_empty(raw):
    with pytest.raises(EmptyLabel):
        normalize_label(raw)


@given(st.text())
def test_normalize_label_output_is_well_formed(raw):
    try:
        out = normalize_label(raw)
    except EmptyLabel:
        return
    assert out == out.strip() and out
    assert "  " not in out
    assert not out.startswith("-") and not out.endswith("-")
    assert all(ch.isalnum() or ch in " -" for ch in out)
    assert normalize_label(out) == out


class TestLemma:
    def test_level_one_examples(self, pipeline):
        assert apply_lemma("happier", pipeline.lemma) == "happy"
        assert apply_lemma("happiness", pipeline.lemma) == "happy"

    def test_base_form_is_identity(self, pipeline):
        assert apply_lemma("calm", pipeline.lemma) == "calm"

    def test_suffix_rules_without_table(self):
        m = LemmaMap({}, (("iness", "y"), ("ier", "y"), ("ness", "")))
        assert m("happier") == "happy"
        assert m("happiness") == "happy"
        assert m("sadness") == "sad"
        # repeated suffixes are peeled until no rule matches
        assert m("calmnessness") == "calm"

    def test_min_stem_blocks_degenerate_rewrites(self):
        m = LemmaMap({}, (("ness", ""),))
        assert m("ness") == "ness"
        assert m("caught off-ness") == "caught off-ness"

    def test_rules_must_shorten(self):
        with pytest.raises(InvariantViolation):
            LemmaMap({}, (("y", "ier"),))

    def test_irregular_outputs_must_be_fixed_points(self):
        with pytest.raises(InvariantViolation):
            LemmaMap({"a1": "bb", "bb": "cc"})
        with pytest.raises(InvariantViolation):
            LemmaMap({"glee": "gladness"}, (("ness", ""),))

    def test_load_lemma(self, tmp_path):
        path = tmp_path / "lemma.yaml"
        path.write_text(yaml.safe_dump({"min_stem": 2, "irregular": {"Joy": "happy"}, "suffix_rules": [["ness", ""]]}))
        m = load_lemma(path)
        assert (m("joy"), m("sadness"), m("ness")) == ("happy", "sad", "ness")

    @given(st.text(alphabet="abcdeinrsy- ", min_size=1, max_size=20))
    def test_idempotent_on_arbitrary_words(self, word):
        m = LemmaMap({"happiness": "happy"}, (("iness", "y"), ("ier", "y"), ("ness", ""), ("edly", "ed")))
        try:
            w = normalize_label(word)
        except EmptyLabel:
            return
        assert m(m(w)) == m(w)


class TestSynonym:
    def test_level_two_example(self, pipeline):
        assert apply_synonym("joyful", pipeline.synonyms) == "happy"

    def test_canonical_and_unknown(self, pipeline):
        assert apply_synonym("happy", pipeline.synonyms) == "happy"
        assert apply_synonym("zymurgy", pipeline.synonyms) == "zymurgy"

    def test_one_step_closure_enforced(self):
        with pytest.raises(InvariantViolation):
            SynonymMap({"glad": "joyful", "joyful": "happy"})

    def test_load_rejects_conflicting_variant(self, tmp_path):
        path = tmp_path / "syn.yaml"
        path.write_text(yaml.safe_dump({"synonyms": {"happy": ["glad"], "sad": ["glad"]}}))
        with pytest.raises(InvariantViolation):
            load_synonyms(path)


class TestWheel:
    wheel = EmotionWheel("w", (Sector("joy", frozenset({"delight", "bliss"})),))

    def test_outer_maps_to_inner(self):
        assert apply_wheel("delight", self.wheel) == "joy"

    def test_inner_and_unknown_pass_through(self):
        assert apply_wheel("joy", self.wheel) == "joy"
        assert apply_wheel("anger", self.wheel) == "anger"

    def test_load_two_sectors(self, tmp_path):
        doc = {"name": "two", "sectors": [{"inner": "Joy", "outer": ["Delight"]}, {"inner": "anger", "outer": ["rage"]}]}
        path = tmp_path / "w.yaml"
        path.write_text(yaml.safe_dump(doc))
        w = load_wheel(path)
        assert len(w.sectors) == 2
        assert w("delight") == "joy"

    def test_duplicate_outer_names_label(self):
        doc = {"name": "bad", "sectors": [{"inner": "joy", "outer": ["calm"]}, {"inner": "peace", "outer": ["calm"]}]}
        with pytest.raises(InvariantViolation, match="calm"):
            wheel_from_dict(doc)

    def test_empty_sector_list(self):
        with pytest.raises(InvariantViolation):
            wheel_from_dict({"name": "empty", "sectors": []})

    def test_inner_as_outer_of_other_sector(self):
        doc = {"name": "bad", "sectors": [{"inner": "joy", "outer": ["anger"]}, {"inner": "anger", "outer": []}]}
        with pytest.raises(InvariantViolation, match="anger"):
            wheel_from_dict(doc)

    def test_duplicate_inner(self):
        doc = {"name": "bad", "sectors": [{"inner": "joy", "outer": ["a"]}, {"inner": "joy", "outer": ["b"]}]}
        with pytest.raises(InvariantViolation, match="joy"):
            wheel_from_dict(doc)

    def test_parse_errors(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("name: [unclosed")
        with pytest.raises(ParseError):
            load_wheel(path)
        with pytest.raises(ParseError):
            wheel_from_dict({"sectors": []})

    def test_bundled_wheel_valid(self, pipeline):
        w = pipeline.wheels[0]
        assert w.name == "plutchik_style"
        assert "caught off guard" in w.outer_labels


def _random_wheel_doc(rng: random.Random, labels):
    """A random wheel document; returns (doc, is_valid) using a direct invariant check."""
    n = rng.randint(0, 3)
    sectors = []
    for _ in range(n):
        sectors.append({"inner": rng.choice(labels), "outer": rng.sample(labels, rng.randint(0, 3))})
    inners = [s["inner"] for s in sectors]
    outers = [o for s in sectors for o in s["outer"]]
    own = {(s["inner"], o) for s in sectors for o in s["outer"]}
    valid = (
        n >= 1
        and len(set(inners)) == len(inners)
        and len(set(outers)) == len(outers)
        and not any(i == o and (i, o) not in own for i in inners for o in outers)
    )
    return {"name": "r", "sectors": sectors}, valid


def test_load_wheel_rejects_exactly_invalid_documents():
    rng = random.Random(7)
    labels = ["a", "b", "c", "d", "e", "f"]
    seen = {True: 0, False: 0}
    for _ in range(2000):
        doc, valid = _random_wheel_doc(rng, labels)
        seen[valid] += 1
        if valid:
            wheel_from_dict(doc)
        else:
            with pytest.raises(InvariantViolation):
                wheel_from_dict(doc)
    assert seen[True] > 100 and seen[False] > 100


class TestGrouping:
    def test_composed_chain(self, small_pipeline):
        assert group(["happier", "joyful"], small_pipeline, 1) == {"happy"}

    def test_matches_per_label_oracle(self, small_pipeline):
        labels = ["happier", "joyful", "delight", "bliss", "gladness", "sadness", "zymurgy", "joy"]
        expected = group_oracle(
            labels, {"happiness": "happy"}, [("ier", "y"), ("ness", "")], {"joyful": "happy", "glad": "happy"},
            [("joy", ["delight", "bliss"])],
        )
        assert group(labels, small_pipeline, 1) == expected

    def test_empty_and_duplicates(self, small_pipeline):
        assert group([], small_pipeline, 1) == frozenset()
        assert group(["happy", "happy"], small_pipeline, 1) == {"happy"}

    def test_wheel_index_bounds(self, small_pipeline):
        with pytest.raises(IndexError):
            group(["x"], small_pipeline, 0)
        with pytest.raises(IndexError):
            group(["x"], small_pipeline, 2)

    def test_pipeline_rejects_unstable_inner_label(self):
        wheel = EmotionWheel("w", (Sector("joyful", frozenset({"delight"})),))
        with pytest.raises(InvariantViolation):
            GroupingPipeline(LemmaMap(), SynonymMap({"joyful": "happy"}), [wheel])

    def test_pipeline_rejects_duplicate_wheel_names(self):
        wheel = EmotionWheel("w", (Sector("joy", frozenset()),))
        with pytest.raises(InvariantViolation):
            GroupingPipeline(LemmaMap(), SynonymMap(), [wheel, wheel])

    def test_fixed_points(self, pipeline):
        for k in range(1, pipeline.K + 1):
            for inner in pipeline.wheels[k - 1].inner_labels:
                assert pipeline.group_label(inner, k) == inner
            for target in pipeline.synonyms.canonical:
                assert pipeline.synonyms(pipeline.lemma(target)) == target
                if target not in pipeline.wheels[k - 1].outer_labels:
                    assert pipeline.group_label(target, k) == target

    def test_basic_dataset_labels_land_on_inner_labels(self, pipeline):
        inner = pipeline.wheels[0].inner_labels
        for label in ["worry", "happy", "neutral", "angry", "surprised", "sad", "anger", "joy", "sadness",
                      "disgust", "fear", "surprise", "happiness"]:
            assert pipeline.group_label(label, 1) in inner, label


_vocab_strategy = st.sampled_from(
    ["happier", "happiness", "joyful", "joy", "anxious", "anxiety", "calmness", "worries", "furious", "enraged",
     "caught off guard", "zymurgy", "sadnessness", "loneliness", "relief", "nervousness", "gladness", "blissful"]
)


@settings(max_examples=300)
@given(st.lists(st.one_of(_vocab_strategy, st.from_regex(r"[a-z]{1,12}( [a-z]{1,8})?", fullmatch=True)), max_size=8))
def test_group_properties(pipeline, labels):
    for k in range(1, pipeline.K + 1):
        g = pipeline.group(labels, k)
        assert pipeline.group(g, k) == g
        assert len(g) <= len(set(labels))
        assert pipeline.group(list(reversed(labels)), k) == g

import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mereval.taxonomy import EmotionWheel, GroupingPipeline, LemmaMap, Sector, SynonymMap, default_pipeline  # noqa: E402


@pytest.fixture(scope="session")
def pipeline():
    return default_pipeline()


@pytest.fixture
def identity():
    return GroupingPipeline.identity()


@pytest.fixture
def small_pipeline():
    lemma = LemmaMap({"happiness": "happy"}, (("ier", "y"), ("ness", "")))
    synonyms = SynonymMap({"joyful": "happy", "glad": "happy"})
    wheel = EmotionWheel("w", (Sector("joy", frozenset({"delight", "bliss"})),))
    return GroupingPipeline(lemma, synonyms, [wheel])


ALPHABET = ["a", "b", "c", "d", "e", "f", "g", "h"]


def random_wheels(rng: random.Random, k: int, alphabet=ALPHABET):
    """K random two-sector wheels over the alphabet, as (EmotionWheel, mapping dict) pairs."""
    wheels = []
    for i in range(k):
        pool = rng.sample(alphabet, rng.randint(2, len(alphabet)))
        inner = pool[:2]
        outer = pool[2:]
        cut = rng.randint(0, len(outer))
        sectors = [(inner[0], outer[:cut]), (inner[1], outer[cut:])]
        wheel = EmotionWheel(f"w{i}", tuple(Sector(a, frozenset(b)) for a, b in sectors))
        mapping = {o: a for a, outs in sectors for o in outs}
        wheels.append((wheel, mapping))
    return wheels


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(results):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})")

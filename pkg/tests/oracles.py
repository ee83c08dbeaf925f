"""Independent brute-force reference implementations used by the tests.

None of these import the library's scoring code; they work from plain dicts
and lists so a bug in the library cannot hide in its own oracle.
"""

from __future__ import annotations

import math
from itertools import product


def group_oracle(labels, lemma_irregular, lemma_rules, synonyms, wheel_sectors, min_stem=3):
    """Apply base form, synonym and wheel maps label by label, then dedupe.

    ``wheel_sectors`` is a list of (inner, [outer...]) pairs.
    """
    outer_to_inner = {}
    for inner, outer in wheel_sectors:
        for o in outer:
            outer_to_inner[o] = inner

    def lemma(word):
        for _ in range(100):
            if word in lemma_irregular:
                return lemma_irregular[word]
            for suffix, repl in lemma_rules:
                stem = word[: len(word) - len(suffix)]
                if word.endswith(suffix) and len(stem) >= min_stem and stem[-1].isalnum():
                    word = stem + repl
                    break
            else:
                return word
        raise AssertionError("lemma oracle did not converge")

    out = set()
    for label in labels:
        x = lemma(label)
        x = synonyms.get(x, x)
        x = outer_to_inner.get(x, x)
        out.add(x)
    return out


def set_metrics_oracle(samples, wheels):
    """samples: list of (truth_set, pred_set); wheels: list of dicts label->group.

    Returns (precision, recall, fscore) averaged over wheels, using floats.
    """
    ps, rs, fs = [], [], []
    for mapping in wheels:
        precisions, recalls = [], []
        for truth, pred in samples:
            t = {mapping.get(x, x) for x in truth}
            q = {mapping.get(x, x) for x in pred}
            common = [x for x in q if x in t]
            precisions.append(len(common) / len(q) if q else 0.0)
            recalls.append(len(common) / len(t))
        p = math.fsum(precisions) / len(samples)
        r = math.fsum(recalls) / len(samples)
        f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        ps.append(p)
        rs.append(r)
        fs.append(f)
    k = len(wheels)
    return math.fsum(ps) / k, math.fsum(rs) / k, math.fsum(fs) / k


def confusion_oracle(truth, pred):
    """ACC and support-weighted F1 over {positive, negative} by explicit counting.

    ``truth`` holds only positive/negative; ``pred`` may also hold neutral.
    """
    classes = ["positive", "negative", "neutral"]
    cm = {(a, b): 0 for a, b in product(classes, classes)}
    for t, p in zip(truth, pred):
        cm[(t, p)] += 1
    total = len(truth)
    acc = sum(cm[(c, c)] for c in classes) / total
    waf = 0.0
    for c in ("positive", "negative"):
        tp = cm[(c, c)]
        support = sum(cm[(c, b)] for b in classes)
        predicted = sum(cm[(a, c)] for a in classes)
        prec = tp / predicted if predicted else 0.0
        rec = tp / support if support else 0.0
        f1 = 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)
        waf += support / total * f1
    return acc, waf


def plurality_oracle(items):
    """Return the unique most frequent item, or None on a tie for first."""
    counts = {}
    for x in items:
        counts[x] = counts.get(x, 0) + 1
    best = max(counts.values())
    winners = [x for x, n in counts.items() if n == best]
    return winners[0] if len(winners) == 1 else None


def nearest_rank(values, pct):
    """Nearest-rank percentile: the ceil(pct/100 * n)-th smallest value (1-based), min at 0."""
    ordered = sorted(values)
    rank = math.ceil(pct / 100 * len(ordered))
    return ordered[max(rank, 1) - 1]


def longest_match_oracle(text_tokens, phrases):
    """Try every start position and every span length; keep greedy longest whole-word matches."""
    found = []
    i = 0
    while i < len(text_tokens):
        best = None
        for j in range(len(text_tokens), i, -1):
            cand = " ".join(text_tokens[i:j])
            if cand in phrases:
                best = (cand, j)
                break
        if best:
            found.append(best[0])
            i = best[1]
        else:
            i += 1
    return set(found)


def histogram_oracle(values, width):
    counts = {}
    for v in values:
        b = int(v // width)
        counts[b] = counts.get(b, 0) + 1
    return counts

"""Text-generation metrics and the bucketed evaluation report.

All corpus functions take equal-length lists of token sequences
(candidates and single references).  BLEU is corpus-level (aggregated
counts, geometric mean over orders, brevity penalty); the others average
per-sample scores.  Scores land in [0, 1] except CIDEr, which follows its
usual 0..10 scaling.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Dict, List, Optional, Sequence, Tuple

Tokens = Sequence[str]


class MetricError(ValueError):
    pass


def _check_pairs(candidates: Sequence[Tokens], references: Sequence[Tokens]) -> None:
    if len(candidates) != len(references):
        raise MetricError(f"{len(candidates)} candidates vs "
                          f"{len(references)} references")
    if not candidates:
        raise MetricError("empty corpus")


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


# -- BLEU ---------------------------------------------------------------------

def bleu_n(candidates: Sequence[Tokens], references: Sequence[Tokens],
           n: int = 4, smooth: bool = False) -> float:
    """Corpus BLEU-N: clipped modified precision per order, geometric mean,
    times the brevity penalty.  With ``smooth`` every order gets add-one
    counts (useful on tiny corpora where zeros otherwise dominate)."""
    if not 1 <= n <= 4:
        raise MetricError(f"BLEU order must be in 1..4, got {n}")
    _check_pairs(candidates, references)
    matched = [0] * n
    total = [0] * n
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for k in range(1, n + 1):
            cg = _ngrams(cand, k)
            rg = _ngrams(ref, k)
            matched[k - 1] += sum(min(c, rg[g]) for g, c in cg.items())
            total[k - 1] += max(len(cand) - k + 1, 0)
    log_sum = 0.0
    for k in range(n):
        num, den = matched[k], total[k]
        if smooth:
            num, den = num + 1, den + 1
        if num == 0 or den == 0:
            return 0.0
        log_sum += math.log(num / den)
    precision = math.exp(log_sum / n)
    if cand_len == 0:
        return 0.0
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return precision * bp


def sentence_bleu4(candidate: Tokens, reference: Tokens) -> float:
    """Add-one-smoothed BLEU-4 of a single pair, for diagnostics."""
    return bleu_n([candidate], [reference], n=4, smooth=True)


# -- ROUGE-L ------------------------------------------------------------------

ROUGE_BETA = 1.2


def _lcs_length(a: Tokens, b: Tokens) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(candidates: Sequence[Tokens], references: Sequence[Tokens],
            beta: float = ROUGE_BETA) -> float:
    """Mean per-sample LCS F-measure with recall weighted by beta."""
    _check_pairs(candidates, references)
    total = 0.0
    for cand, ref in zip(candidates, references):
        lcs = _lcs_length(cand, ref)
        if lcs == 0:
            continue
        p = lcs / len(cand)
        r = lcs / len(ref)
        total += (1 + beta * beta) * p * r / (r + beta * beta * p)
    return total / len(candidates)


# -- METEOR (exact-match unigrams) ---------------------------------------------

def _align(cand: Tokens, ref: Tokens) -> List[Tuple[int, int]]:
    """Greedy one-to-one alignment: each candidate token takes the first
    unused identical reference position, scanning left to right."""
    used = [False] * len(ref)
    pairs = []
    for i, tok in enumerate(cand):
        for j, rtok in enumerate(ref):
            if not used[j] and tok == rtok:
                used[j] = True
                pairs.append((i, j))
                break
    return pairs


def _chunk_count(pairs: List[Tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor(candidates: Sequence[Tokens], references: Sequence[Tokens]) -> float:
    """Mean per-sample score: harmonic mean weighted 9:1 toward recall,
    discounted by a fragmentation penalty of 0.5*(chunks/matches)^3."""
    _check_pairs(candidates, references)
    total = 0.0
    for cand, ref in zip(candidates, references):
        pairs = _align(cand, ref)
        m = len(pairs)
        if m == 0:
            continue
        p = m / len(cand)
        r = m / len(ref)
        f_mean = 10.0 * p * r / (r + 9.0 * p)
        penalty = 0.5 * (_chunk_count(pairs) / m) ** 3
        total += f_mean * (1.0 - penalty)
    return total / len(candidates)


# -- CIDEr ---------------------------------------------------------------------

CIDER_MAX_N = 4


def cider(candidates: Sequence[Tokens], references: Sequence[Tokens]) -> float:
    """Consensus score: tf-idf n-gram cosine (n=1..4) averaged over orders,
    scaled by 10; document frequencies come from the reference corpus."""
    _check_pairs(candidates, references)
    if len(references) < 2:
        raise MetricError("CIDEr needs at least 2 reference sentences for idf")
    n_docs = len(references)
    df: Counter = Counter()
    for ref in references:
        seen = set()
        for n in range(1, CIDER_MAX_N + 1):
            seen.update(_ngrams(ref, n))
        df.update(seen)

    def idf(gram) -> float:
        return math.log(n_docs / max(1.0, df[gram]))

    def tfidf(tokens: Tokens, n: int) -> Dict[tuple, float]:
        return {g: c * idf(g) for g, c in _ngrams(tokens, n).items()}

    total = 0.0
    for cand, ref in zip(candidates, references):
        per_n = 0.0
        for n in range(1, CIDER_MAX_N + 1):
            cv = tfidf(cand, n)
            rv = tfidf(ref, n)
            dot = sum(w * rv[g] for g, w in cv.items() if g in rv)
            cn = math.sqrt(sum(w * w for w in cv.values()))
            rn = math.sqrt(sum(w * w for w in rv.values()))
            if cn > 0 and rn > 0:
                per_n += dot / (cn * rn)
        total += per_n / CIDER_MAX_N
    return 10.0 * total / len(candidates)


# -- RIBES ---------------------------------------------------------------------

RIBES_PRECISION_POWER = 0.25
RIBES_BP_POWER = 0.10


def ribes(candidates: Sequence[Tokens], references: Sequence[Tokens]) -> float:
    """Rank-correlation score: normalized Kendall tau of aligned word
    positions, times unigram precision^0.25 and brevity penalty^0.10.
    Samples with fewer than two aligned words score 0."""
    _check_pairs(candidates, references)
    total = 0.0
    for cand, ref in zip(candidates, references):
        pairs = _align(cand, ref)
        k = len(pairs)
        if k < 2 or not cand:
            continue
        ref_positions = [j for _, j in pairs]
        ascending = sum(1 for a in range(k) for b in range(a + 1, k)
                        if ref_positions[a] < ref_positions[b])
        nkt = ascending / (k * (k - 1) / 2)  # (tau + 1) / 2
        precision = k / len(cand)
        bp = min(1.0, math.exp(1.0 - len(ref) / len(cand)))
        total += nkt * precision ** RIBES_PRECISION_POWER * bp ** RIBES_BP_POWER
    return total / len(candidates)


# -- full report -----------------------------------------------------------------

BUCKET_DIMENSIONS = ("comment_length", "node_count", "max_degree")


def bucket_report(candidates: Sequence[Tokens], references: Sequence[Tokens],
                  dimension_values: Sequence[int],
                  edges: Sequence[int]) -> List[dict]:
    """Corpus BLEU-4 inside each [edges[i], edges[i+1]) bucket.

    Buckets with no samples report a null score.  Scores equal an
    independent bleu_n run on the bucket's subset by construction.
    """
    if len(dimension_values) != len(candidates):
        raise MetricError("one dimension value per sample required")
    if len(edges) < 2 or list(edges) != sorted(edges):
        raise MetricError(f"bucket edges must be ascending, got {edges}")
    rows = []
    for lo, hi in zip(edges, edges[1:]):
        idx = [i for i, v in enumerate(dimension_values) if lo <= v < hi]
        if idx:
            score = bleu_n([candidates[i] for i in idx],
                           [references[i] for i in idx], n=4)
        else:
            score = None
        rows.append({"lo": lo, "hi": hi, "count": len(idx), "bleu_4": score})
    return rows


def evaluate_corpus(candidates: Sequence[Tokens], references: Sequence[Tokens],
                    sample_ids: Optional[Sequence[str]] = None,
                    stats: Optional[Sequence] = None,
                    bucket_edges: Optional[Dict[str, Sequence[int]]] = None) -> dict:
    """All five corpus metrics, per-sample diagnostics, and bucket tables."""
    _check_pairs(candidates, references)
    report = {
        "corpus": {
            "bleu_1": bleu_n(candidates, references, 1),
            "bleu_2": bleu_n(candidates, references, 2),
            "bleu_3": bleu_n(candidates, references, 3),
            "bleu_4": bleu_n(candidates, references, 4),
            "cider": cider(candidates, references) if len(candidates) > 1 else None,
            "meteor": meteor(candidates, references),
            "ribes": ribes(candidates, references),
            "rouge_l": rouge_l(candidates, references),
        },
        "samples": [],
    }
    for i, (cand, ref) in enumerate(zip(candidates, references)):
        entry = {
            "id": sample_ids[i] if sample_ids else str(i),
            "bleu_4_smoothed": sentence_bleu4(cand, ref),
            "rouge_l": rouge_l([cand], [ref]),
            "meteor": meteor([cand], [ref]),
            "ribes": ribes([cand], [ref]),
            "exact_match": list(cand) == list(ref),
        }
        report["samples"].append(entry)
    if bucket_edges is not None:
        if stats is None:
            raise MetricError("bucket edges given but no per-sample stats")
        dims = {
            "comment_length": [len(r) for r in references],
            "node_count": [s.node_count for s in stats],
            "max_degree": [s.max_degree for s in stats],
        }
        report["buckets"] = {
            dim: bucket_report(candidates, references, dims[dim], edges)
            for dim, edges in bucket_edges.items() if dim in dims
        }
    return report

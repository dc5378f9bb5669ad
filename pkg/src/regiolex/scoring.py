"""Region scoring: weighted frequencies, score tables, and aggregates.

A construct score for a region is the sum of weight * frequency over
the lexicon words found there. Scores aggregate county -> state by
unweighted mean (so big-city volume cannot dominate), and normalize by
min-max over whichever row set is being displayed. Aggregation always
happens on raw scores first; normalization comes after.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import RegionCounts, require_region_id
from .errors import InputError, NumericError

# The 15 American Communities Project county types.
ACP_COMMUNITIES = frozenset(
    {
        "Exurbs",
        "Graying America",
        "African American South",
        "Evangelical Hubs",
        "Working Class Country",
        "Military Posts",
        "Urban Suburbs",
        "College Towns",
        "Big Cities",
        "Hispanic Centers",
        "Rural Middle America",
        "Middle Suburbs",
        "Native American Lands",
        "LDS Enclaves",
        "Aging Farmlands",
    }
)


@dataclass
class RegionFrequencyMatrix:
    """regions x words matrix of weighted frequencies."""

    construct: str
    regions: list[str]
    words: list[str]
    values: np.ndarray           # (n_regions, n_words), finite, >= 0
    mode: str                    # "relative" | "raw"
    doc_counts: np.ndarray = field(default=None)  # per region, informational

    def __post_init__(self):
        if self.values.shape != (len(self.regions), len(self.words)):
            raise InputError("frequency matrix shape mismatch")
        if not np.all(np.isfinite(self.values)):
            raise NumericError("non-finite entries in frequency matrix")
        if self.doc_counts is None:
            self.doc_counts = np.zeros(len(self.regions), dtype=np.int64)


@dataclass
class ScoreTable:
    """Per-region scores for one construct, with optional 0-1 norms."""

    construct: str
    regions: list[str]
    scores: np.ndarray
    n_docs: np.ndarray
    norm: np.ndarray | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.n_docs = np.asarray(self.n_docs, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.regions)

    def score_of(self, region: str) -> float:
        return float(self.scores[self.regions.index(region)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.regions, self.scores.tolist()))


def weighted_frequency_matrix(
    lex,
    counts: RegionCounts,
    mode: str = "relative",
) -> RegionFrequencyMatrix:
    """Build the regions x lexicon-words weighted frequency matrix.

    "relative" divides counts by the region's total unigrams before
    weighting (volume-invariant); "raw" multiplies weights into absolute
    counts. A lexicon word absent from the corpus yields a zero column.
    """
    if mode not in ("relative", "raw"):
        raise InputError(f"unknown frequency mode: {mode!r}")
    regions = counts.regions()
    if not regions:
        raise InputError("no retained regions in counts")
    words = sorted(lex.words())
    weights = np.array([lex.weight(w) for w in words])
    values = np.zeros((len(regions), len(words)))
    for i, region in enumerate(regions):
        counter = counts.counts[region]
        total = counts.totals[region]
        for j, word in enumerate(words):
            c = counter.get(word, 0)
            if c:
                values[i, j] = c / total if mode == "relative" else c
    values *= weights
    doc_counts = np.array(
        [counts.doc_counts.get(r, 0) for r in regions], dtype=np.int64
    )
    return RegionFrequencyMatrix(
        construct=lex.construct,
        regions=regions,
        words=words,
        values=values,
        mode=mode,
        doc_counts=doc_counts,
    )


def region_scores(matrix: RegionFrequencyMatrix) -> ScoreTable:
    """Sum each region's weighted frequencies into a construct score."""
    return ScoreTable(
        construct=matrix.construct,
        regions=list(matrix.regions),
        scores=matrix.values.sum(axis=1),
        n_docs=matrix.doc_counts.copy(),
    )


def load_region_map(path) -> dict[str, str]:
    """Load a ``fips,code`` mapping CSV (county -> state or community)."""
    if not os.path.exists(path):
        raise InputError(f"mapping file not found: {path}")
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise InputError(f"{path}: expected header fips,code")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) < 2:
                raise InputError(f"{path}:{lineno}: expected 2 fields")
            fips = require_region_id(row[0].strip())
            if fips in mapping:
                raise InputError(f"{path}:{lineno}: duplicate fips {fips}")
            mapping[fips] = row[1].strip()
    return mapping


def load_community_map(path) -> dict[str, str]:
    """Load a county -> ACP community mapping, validating the label set."""
    mapping = load_region_map(path)
    bad = sorted({label for label in mapping.values()} - ACP_COMMUNITIES)
    if bad:
        raise InputError(f"unknown ACP community labels: {', '.join(bad)}")
    return mapping


def aggregate_to_state(
    scores: ScoreTable, county_to_state: dict[str, str]
) -> ScoreTable:
    """Unweighted mean of county scores per state.

    Every county weighs equally regardless of document volume; an
    unmapped county is an error naming its FIPS code.
    """
    by_state: dict[str, list[int]] = {}
    for i, county in enumerate(scores.regions):
        state = county_to_state.get(county)
        if state is None:
            raise InputError(f"county {county} has no state mapping")
        by_state.setdefault(state, []).append(i)
    states = sorted(by_state)
    means = np.array(
        [scores.scores[by_state[s]].mean() for s in states]
    )
    docs = np.array(
        [int(scores.n_docs[by_state[s]].sum()) for s in states], dtype=np.int64
    )
    return ScoreTable(
        construct=scores.construct, regions=states, scores=means, n_docs=docs
    )


def normalize01(scores: ScoreTable) -> ScoreTable:
    """Min-max normalize over the table's row set (fills ``norm``)."""
    lo, hi = float(scores.scores.min()), float(scores.scores.max())
    if hi == lo:
        raise NumericError(
            f"cannot 0-1 normalize {scores.construct}: all scores equal {lo}"
        )
    return replace(scores, norm=(scores.scores - lo) / (hi - lo))


@dataclass
class CommunityRow:
    community: str
    mean_indiv: float
    mean_coll: float
    n_counties: int


def community_summary(
    individualism: ScoreTable,
    collectivism: ScoreTable,
    communities: dict[str, str],
    min_counties: int = 40,
) -> list[CommunityRow]:
    """Mean normalized scores per community, largest-first by individualism.

    Communities with fewer than ``min_counties`` scored counties are
    excluded, and 0-1 normalization runs over exactly the displayed
    county set (members of included communities).
    """
    if min_counties < 1:
        raise InputError("min_counties must be >= 1")
    if set(individualism.regions) != set(collectivism.regions):
        raise InputError("individualism and collectivism cover different regions")
    members: dict[str, list[str]] = {}
    for county in individualism.regions:
        label = communities.get(county)
        if label is not None:
            members.setdefault(label, []).append(county)
    included = {c: m for c, m in members.items() if len(m) >= min_counties}
    if not included:
        return []
    displayed = sorted({c for m in included.values() for c in m})
    ind_norm = _normalized_subset(individualism, displayed)
    coll_norm = _normalized_subset(collectivism, displayed)
    rows = [
        CommunityRow(
            community=label,
            mean_indiv=float(np.mean([ind_norm[c] for c in counties])),
            mean_coll=float(np.mean([coll_norm[c] for c in counties])),
            n_counties=len(counties),
        )
        for label, counties in included.items()
    ]
    rows.sort(key=lambda r: (-r.mean_indiv, r.community))
    return rows


def _normalized_subset(scores: ScoreTable, regions: list[str]) -> dict[str, float]:
    order = {r: i for i, r in enumerate(scores.regions)}
    idx = [order[r] for r in regions]
    sub = ScoreTable(
        construct=scores.construct,
        regions=regions,
        scores=scores.scores[idx],
        n_docs=scores.n_docs[idx],
    )
    normed = normalize01(sub)
    return dict(zip(regions, normed.norm.tolist()))


def diff_score(
    individualism: ScoreTable,
    collectivism: ScoreTable,
    use_norm: bool = True,
) -> ScoreTable:
    """Per-region individualism minus collectivism.

    Defaults to the difference of 0-1 normalized scores (normalizing
    here if needed); ``use_norm=False`` differences the raw scores.
    """
    if set(individualism.regions) != set(collectivism.regions):
        raise InputError("score tables cover different region sets")
    if use_norm:
        a = individualism if individualism.norm is not None else normalize01(individualism)
        b = collectivism if collectivism.norm is not None else normalize01(collectivism)
        a_vals, b_vals = a.norm, b.norm
    else:
        a_vals, b_vals = individualism.scores, collectivism.scores
    b_index = {r: i for i, r in enumerate(collectivism.regions)}
    order = [b_index[r] for r in individualism.regions]
    return ScoreTable(
        construct="diff",
        regions=list(individualism.regions),
        scores=a_vals - np.asarray(b_vals)[order],
        n_docs=individualism.n_docs.copy(),
    )

"""Weighted lexicon construction: seeds -> expansion -> purification.

Expert seed words enter at weight 1. Expansion adds embedding-space
neighbors of each seed (synonym expansion) and of the seed centroid
(concept expansion), weighted by cosine similarity. Purification then
drops rare words and iteratively removes the word whose frequency
profile correlates worst with the rest of the lexicon until every
survivor clears the coherence threshold.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import embeddings as emb
from .corpus import RegionCounts
from .errors import InputError
from .scoring import weighted_frequency_matrix
from .stats import pearson_r

ORIGIN_SEED = "seed"
ORIGIN_SYNONYM = "synonym-expansion"
ORIGIN_CONCEPT = "concept-expansion"
_ORIGIN_PRECEDENCE = {ORIGIN_SEED: 2, ORIGIN_SYNONYM: 1, ORIGIN_CONCEPT: 0}

# keeps expansion weights strictly below the seed weight of 1
MAX_EXPANSION_WEIGHT = 1.0 - 1e-9


@dataclass
class SeedSet:
    construct: str
    entries: list[str]

    def __post_init__(self):
        if not self.construct:
            raise InputError("seed set needs a construct name")
        lowered = [e.strip().lower() for e in self.entries]
        if any(not e for e in lowered):
            raise InputError("empty seed entry")
        if len(set(lowered)) != len(lowered):
            dupes = sorted({e for e in lowered if lowered.count(e) > 1})
            raise InputError(f"duplicate seed entries: {', '.join(dupes)}")
        self.entries = lowered


def load_seed_file(path) -> SeedSet:
    """Parse a seed file: ``construct:<name>`` then one entry per line."""
    if not os.path.exists(path):
        raise InputError(f"seed file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        lines = [line.strip() for line in fh]
    lines = [line for line in lines if line]
    if not lines or not lines[0].startswith("construct:"):
        raise InputError(f"{path}: first line must be construct:<name>")
    name = lines[0].split(":", 1)[1].strip()
    return SeedSet(construct=name, entries=lines[1:])


@dataclass
class LexiconEntry:
    word: str
    weight: float
    origin: str
    source: str

    def __post_init__(self):
        if self.origin not in _ORIGIN_PRECEDENCE:
            raise InputError(f"unknown origin: {self.origin!r}")
        if self.origin == ORIGIN_SEED:
            if self.weight != 1.0:
                raise InputError(f"seed {self.word!r} must have weight 1")
        elif not 0.0 < self.weight < 1.0:
            raise InputError(
                f"expansion weight for {self.word!r} must be in (0, 1): "
                f"{self.weight}"
            )


@dataclass
class Lexicon:
    construct: str
    entries: dict[str, LexiconEntry]
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def words(self) -> list[str]:
        return list(self.entries)

    def weight(self, word: str) -> float:
        return self.entries[word].weight

    def phrases(self) -> list[str]:
        return [w for w in self.entries if " " in w]


def _storage_form(token: str) -> str:
    # expansion may return underscore-joined vocabulary tokens; store
    # them with spaces so corpus phrase counting matches
    return token.replace("_", " ")


def _exclusion_set(seeds: SeedSet) -> set[str]:
    excl = set()
    for entry in seeds.entries:
        excl.add(entry)
        excl.add(entry.replace(" ", "_"))
    return excl


def _expansion_entries(hits, origin, source, top_k, table, max_rank):
    out = []
    for token, sim in hits:
        if max_rank is not None and table.frequency_rank.get(token, 0) > max_rank:
            continue
        out.append(
            LexiconEntry(
                word=_storage_form(token),
                weight=min(sim, MAX_EXPANSION_WEIGHT),
                origin=origin,
                source=source,
            )
        )
        if top_k is not None and len(out) >= top_k:
            break
    return out


def synonym_expand(
    table: emb.EmbeddingTable,
    seeds: SeedSet,
    tau_syn: float,
    on_unresolvable: str = "error",
    top_k: int | None = None,
    max_rank: int | None = None,
) -> list[LexiconEntry]:
    """Neighbors of each seed word at cosine >= tau_syn.

    Each hit becomes an entry weighted by its cosine to the seed that
    found it. Seed words themselves never re-enter (they already hold
    weight 1). Unresolvable seeds raise, or are skipped when
    ``on_unresolvable="skip"``.
    """
    _check_threshold("tau_syn", tau_syn)
    exclude = _exclusion_set(seeds)
    entries: list[LexiconEntry] = []
    for seed in seeds.entries:
        try:
            vec = emb.phrase_vector(table, seed)
        except InputError:
            if on_unresolvable == "skip":
                continue
            raise
        hits = emb.neighbors_at_least(table, vec, tau_syn, exclude=exclude)
        entries.extend(
            _expansion_entries(hits, ORIGIN_SYNONYM, seed, top_k, table, max_rank)
        )
    return entries


def concept_expand(
    table: emb.EmbeddingTable,
    seeds: SeedSet,
    tau_con: float,
    on_unresolvable: str = "error",
    top_k: int | None = None,
    max_rank: int | None = None,
) -> list[LexiconEntry]:
    """Neighbors of the seed-set centroid at cosine >= tau_con."""
    _check_threshold("tau_con", tau_con)
    resolvable = []
    for seed in seeds.entries:
        try:
            emb.phrase_vector(table, seed)
        except InputError:
            if on_unresolvable == "skip":
                continue
            raise
        resolvable.append(seed)
    if not resolvable:
        raise InputError(f"no resolvable seeds for {seeds.construct}")
    center = emb.centroid(table, resolvable)
    hits = emb.neighbors_at_least(
        table, center, tau_con, exclude=_exclusion_set(seeds)
    )
    return _expansion_entries(hits, ORIGIN_CONCEPT, "centroid", top_k, table, max_rank)


def _check_threshold(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise InputError(f"{name} must be in (0, 1), got {value}")


def merge_entries(
    seed_entries: list[LexiconEntry],
    synonym_entries: list[LexiconEntry],
    concept_entries: list[LexiconEntry],
    construct: str,
) -> Lexicon:
    """Union of all entries keyed by word.

    Collisions keep the larger weight; exact weight ties resolve by
    origin precedence (seed > synonym > concept), then first-seen wins
    (seed-file order, then expansion order), which is deterministic.
    """
    merged: dict[str, LexiconEntry] = {}
    for entry in [*seed_entries, *synonym_entries, *concept_entries]:
        cur = merged.get(entry.word)
        if cur is None or _entry_rank(entry) > _entry_rank(cur):
            merged[entry.word] = entry
    ordered = sorted(merged.values(), key=lambda e: (-e.weight, e.word))
    return Lexicon(construct=construct, entries={e.word: e for e in ordered})


def _entry_rank(entry: LexiconEntry):
    return (entry.weight, _ORIGIN_PRECEDENCE[entry.origin])


def seed_entries(seeds: SeedSet) -> list[LexiconEntry]:
    return [
        LexiconEntry(word=s, weight=1.0, origin=ORIGIN_SEED, source=s)
        for s in seeds.entries
    ]


@dataclass
class Removal:
    word: str
    reason: str
    value: float | None = None


def frequency_prune(
    lex: Lexicon,
    counts: RegionCounts,
    min_regions: int = 10,
    min_rel_freq: float = 1e-7,
) -> tuple[Lexicon, list[Removal]]:
    """Drop rare and flat words before coherence checking.

    A word is removed if it occurs in no region (zero-occurrence), in
    fewer than ``min_regions`` regions, has corpus-wide relative
    frequency below ``min_rel_freq``, or shows zero variance across
    regions (its coherence correlation would be undefined).
    """
    if not counts.counts:
        raise InputError("empty region counts")
    regions = counts.regions()
    kept: dict[str, LexiconEntry] = {}
    removals: list[Removal] = []
    for word, entry in lex.entries.items():
        n_regions = counts.regions_with_word(word)
        if n_regions == 0:
            removals.append(Removal(word, "zero-occurrence", 0.0))
            continue
        if n_regions < min_regions:
            removals.append(Removal(word, "few-regions", float(n_regions)))
            continue
        corpus_freq = counts.corpus_relative_frequency(word)
        if corpus_freq < min_rel_freq:
            removals.append(Removal(word, "rare", corpus_freq))
            continue
        profile = np.array(
            [counts.relative_frequency(r, word) for r in regions]
        )
        if np.all(profile == profile[0]):
            removals.append(Removal(word, "zero-variance", float(profile[0])))
            continue
        kept[word] = entry
    return (
        Lexicon(construct=lex.construct, entries=kept,
                provenance=dict(lex.provenance)),
        removals,
    )


def purify(
    lex: Lexicon,
    counts: RegionCounts,
    theta: float,
    mode: str = "relative",
) -> tuple[Lexicon, list[Removal]]:
    """Iteratively enforce internal coherence.

    For each word w, correlate its per-region weighted frequency with
    the summed weighted frequencies of the rest of the lexicon. While
    the worst correlation is below ``theta``, remove that single word
    (ties: lower weight, then lexicographic) and recompute; removing a
    word changes everyone else's complement sum, so batch removal would
    over-prune. Stops when all words pass or only 2 remain. Words whose
    correlation is undefined (zero variance) are removed first.
    """
    if theta < 0:
        raise InputError(f"theta must be >= 0, got {theta}")
    if len(lex) < 2:
        raise InputError("purify needs >= 2 lexicon entries")
    if len(counts.counts) < 3:
        raise InputError("purify needs >= 3 retained regions")
    matrix = weighted_frequency_matrix(lex, counts, mode=mode)
    words = list(matrix.words)
    cols = {w: matrix.values[:, j].copy() for j, w in enumerate(words)}
    active = set(words)
    removals: list[Removal] = []
    while len(active) > 2:
        total = np.sum([cols[w] for w in active], axis=0)
        worst_word, worst_r = None, np.inf
        for w in sorted(active, key=lambda w: (lex.weight(w), w)):
            r = pearson_r(cols[w], total - cols[w])
            if np.isnan(r):
                r = -np.inf
            if r < worst_r:
                worst_word, worst_r = w, r
        if worst_r >= theta:
            break
        active.remove(worst_word)
        removals.append(
            Removal(
                worst_word,
                "coherence",
                None if worst_r == -np.inf else float(worst_r),
            )
        )
    kept = {w: e for w, e in lex.entries.items() if w in active}
    return (
        Lexicon(construct=lex.construct, entries=kept,
                provenance=dict(lex.provenance)),
        removals,
    )


@dataclass
class BuildReport:
    construct: str
    params: dict
    n_seeds: int
    skipped_seeds: list[str]
    n_synonym: int
    n_concept: int
    n_merged: int
    frequency_removals: list[Removal]
    purify_removals: list[Removal]
    n_final: int

    def as_dict(self) -> dict:
        return {
            "construct": self.construct,
            "params": self.params,
            "n_seeds": self.n_seeds,
            "skipped_seeds": self.skipped_seeds,
            "n_synonym": self.n_synonym,
            "n_concept": self.n_concept,
            "n_merged": self.n_merged,
            "frequency_removals": [
                {"word": r.word, "reason": r.reason, "value": r.value}
                for r in self.frequency_removals
            ],
            "purify_removals": [
                {"word": r.word, "reason": r.reason, "value": r.value}
                for r in self.purify_removals
            ],
            "n_final": self.n_final,
        }


def build_lexicon(
    table: emb.EmbeddingTable,
    seeds: SeedSet,
    counts: RegionCounts,
    tau_syn: float = 0.75,
    tau_con: float = 0.45,
    theta: float = 0.15,
    min_regions: int = 10,
    min_rel_freq: float = 1e-7,
    top_k: int | None = None,
    max_rank: int | None = None,
    on_unresolvable: str = "error",
    mode: str = "relative",
    embedding_digest: str = "",
) -> tuple[Lexicon, BuildReport]:
    """Full pipeline: expand, merge, frequency-prune, purify."""
    skipped = []
    if on_unresolvable == "skip":
        for seed in seeds.entries:
            try:
                emb.phrase_vector(table, seed)
            except InputError:
                skipped.append(seed)
    syn = synonym_expand(table, seeds, tau_syn, on_unresolvable, top_k, max_rank)
    con = concept_expand(table, seeds, tau_con, on_unresolvable, top_k, max_rank)
    base = seed_entries(seeds)
    merged = merge_entries(base, syn, con, seeds.construct)
    merged.provenance = {
        "tau_syn": tau_syn,
        "tau_con": tau_con,
        "theta": theta,
        "min_regions": min_regions,
        "min_rel_freq": min_rel_freq,
        "top_k": top_k,
        "max_rank": max_rank,
        "embedding_digest": embedding_digest,
    }
    pruned, freq_removals = frequency_prune(merged, counts, min_regions, min_rel_freq)
    if len(pruned) >= 2 and len(counts.counts) >= 3:
        final, purify_removals = purify(pruned, counts, theta, mode=mode)
    else:
        final, purify_removals = pruned, []
    report = BuildReport(
        construct=seeds.construct,
        params=dict(merged.provenance),
        n_seeds=len(seeds.entries),
        skipped_seeds=skipped,
        n_synonym=len(syn),
        n_concept=len(con),
        n_merged=len(merged),
        frequency_removals=freq_removals,
        purify_removals=purify_removals,
        n_final=len(final),
    )
    return final, report


def write_lexicon_csv(lex: Lexicon, path) -> None:
    """Lexicon CSV ``word,weight,origin,source``, heaviest first."""
    ordered = sorted(lex.entries.values(), key=lambda e: (-e.weight, e.word))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["word", "weight", "origin", "source"])
        for entry in ordered:
            writer.writerow([entry.word, repr(entry.weight), entry.origin, entry.source])


def load_lexicon_csv(path, construct: str | None = None) -> Lexicon:
    """Read a lexicon CSV written by write_lexicon_csv."""
    if not os.path.exists(path):
        raise InputError(f"lexicon file not found: {path}")
    entries: dict[str, LexiconEntry] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["word", "weight", "origin", "source"]:
            raise InputError(f"{path}: unexpected lexicon header {header!r}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 4:
                raise InputError(f"{path}:{lineno}: expected 4 fields")
            word, weight, origin, source = row
            if word in entries:
                raise InputError(f"{path}:{lineno}: duplicate word {word!r}")
            try:
                w = float(weight)
            except ValueError:
                raise InputError(f"{path}:{lineno}: bad weight {weight!r}") from None
            entries[word] = LexiconEntry(word=word, weight=w, origin=origin, source=source)
    if construct is None:
        construct = os.path.splitext(os.path.basename(path))[0]
    return Lexicon(construct=construct, entries=entries)

"""Tokenization and per-region token/phrase counting.

Documents are ``region_id<TAB>text`` lines; regions are 5-digit county
FIPS codes or 2-letter state codes. Counting is shard-mergeable: any
partition of a document stream, aggregated per shard and merged, gives
exactly the single-pass result.
"""

from __future__ import annotations

import csv
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Iterable, NamedTuple

from .errors import InputError

_COUNTY_RE = re.compile(r"\d{5}")
_STATE_RE = re.compile(r"[A-Z]{2}")
_PIECE_RE = re.compile(r"\S+")
_TRIM_RE = re.compile(r"^[\W_]+|[\W_]+$")

TOKENIZER_VERSION = "regiolex-tok-1"


class Document(NamedTuple):
    region: str
    text: str


class IngestError(NamedTuple):
    line_number: int
    reason: str


def is_valid_region_id(code: str) -> bool:
    """County FIPS (5 digits) or state code (2 uppercase letters)."""
    return bool(_COUNTY_RE.fullmatch(code) or _STATE_RE.fullmatch(code))


def require_region_id(code: str) -> str:
    if not is_valid_region_id(code):
        raise InputError(f"invalid region id: {code!r}")
    return code


def tokenize(text: str) -> list[str]:
    """Lowercase, whitespace-split, trim edge punctuation.

    URLs (http:// or https://) and @mentions are dropped whole; hashtags
    keep the bare word; internal apostrophes (and any other interior
    characters) survive because only leading/trailing non-alphanumerics
    are stripped. Total function: never raises.
    """
    out = []
    append = out.append
    for piece in _PIECE_RE.findall(text.lower()):
        if piece.isalnum():
            append(piece)
        elif not piece.startswith(("http://", "https://", "@")):
            piece = _TRIM_RE.sub("", piece)
            if piece:
                append(piece)
    return out


@dataclass
class RegionCounts:
    """Per-region token/phrase counts plus totals and document counts.

    ``mode`` is "count" (absolute counts; totals are unigram sums) or
    "freq" (precomputed relative frequencies; totals pinned to 1.0 so
    downstream normalization is a no-op). ``doc_counts`` is empty when
    the source was a precomputed table.
    """

    mode: str = "count"
    counts: dict[str, Counter] = field(default_factory=dict)
    totals: dict[str, float] = field(default_factory=dict)
    doc_counts: dict[str, int] = field(default_factory=dict)
    tokenizer_version: str = TOKENIZER_VERSION

    def regions(self) -> list[str]:
        return sorted(self.counts)

    def count(self, region: str, word: str) -> float:
        c = self.counts.get(region)
        return c.get(word, 0) if c is not None else 0

    def relative_frequency(self, region: str, word: str) -> float:
        total = self.totals.get(region, 0)
        if total == 0:
            return 0.0
        return self.count(region, word) / total

    def regions_with_word(self, word: str) -> int:
        return sum(1 for c in self.counts.values() if c.get(word, 0) > 0)

    def corpus_relative_frequency(self, word: str) -> float:
        total = sum(self.totals.values())
        if total == 0:
            return 0.0
        return sum(c.get(word, 0) for c in self.counts.values()) / total


def merge_counts(parts: Iterable[RegionCounts]) -> RegionCounts:
    """Merge shard results; associative and commutative for count mode."""
    merged = RegionCounts()
    for part in parts:
        if part.mode != "count":
            raise InputError("only count-mode RegionCounts can be merged")
        for region, counter in part.counts.items():
            if region in merged.counts:
                merged.counts[region].update(counter)
            else:
                merged.counts[region] = Counter(counter)
        for region, total in part.totals.items():
            merged.totals[region] = merged.totals.get(region, 0) + total
        for region, n in part.doc_counts.items():
            merged.doc_counts[region] = merged.doc_counts.get(region, 0) + n
    return merged


def _phrase_index(phrases: Iterable[str]) -> dict[str, list[tuple[str, ...]]]:
    index: dict[str, list[tuple[str, ...]]] = {}
    for phrase in phrases:
        words = tuple(phrase.split())
        if len(words) < 2:
            raise InputError(f"phrase must have >= 2 words: {phrase!r}")
        index.setdefault(words[0], []).append(words)
    return index


def _count_phrases(tokens: list[str], index, counter: Counter) -> None:
    # sliding window, overlaps allowed
    n = len(tokens)
    for i, tok in enumerate(tokens):
        for words in index.get(tok, ()):
            k = len(words)
            if i + k <= n and tuple(tokens[i:i + k]) == words:
                counter[" ".join(words)] += 1


def aggregate_documents(
    documents: Iterable[tuple[str, str]],
    phrases: Iterable[str] = (),
) -> tuple[RegionCounts, list[IngestError]]:
    """Aggregate a document stream into per-region counts.

    Unigrams are counted over tokenize(); each multi-word phrase is
    additionally counted by sliding window. Documents with an invalid
    region id are routed to the error list (1-based stream position)
    and processing continues.
    """
    phrase_idx = _phrase_index(phrases)
    result = RegionCounts()
    counts, totals, doc_counts = result.counts, result.totals, result.doc_counts
    errors: list[IngestError] = []
    for lineno, (region, text) in enumerate(documents, 1):
        if not is_valid_region_id(region):
            errors.append(IngestError(lineno, f"invalid region id: {region!r}"))
            continue
        tokens = tokenize(text)
        counter = counts.get(region)
        if counter is None:
            counter = counts[region] = Counter()
            totals[region] = 0
            doc_counts[region] = 0
        counter.update(tokens)
        totals[region] += len(tokens)
        doc_counts[region] += 1
        if phrase_idx:
            _count_phrases(tokens, phrase_idx, counter)
    return result, errors


def _read_tsv_documents(path) -> Iterable[tuple[str, str]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            region, sep, text = line.rstrip("\n").partition("\t")
            yield region, text if sep else ""


def _chunk_boundaries(path, n_chunks: int) -> list[tuple[int, int]]:
    """Split a file into byte ranges aligned to line starts."""
    size = os.path.getsize(path)
    if size == 0 or n_chunks <= 1:
        return [(0, size)]
    targets = [size * i // n_chunks for i in range(1, n_chunks)]
    cuts = [0]
    with open(path, "rb") as fh:
        for target in targets:
            fh.seek(target)
            fh.readline()
            pos = fh.tell()
            if pos > cuts[-1] and pos < size:
                cuts.append(pos)
    cuts.append(size)
    return list(zip(cuts, cuts[1:]))


def _ingest_chunk(args):
    path, start, end, phrases = args
    phrase_idx = _phrase_index(phrases)
    result = RegionCounts()
    counts, totals, doc_counts = result.counts, result.totals, result.doc_counts
    errors: list[IngestError] = []
    local_line = 0
    with open(path, "rb") as fh:
        fh.seek(start)
        remaining = end - start
        for raw in fh:
            if remaining <= 0:
                break
            remaining -= len(raw)
            local_line += 1
            line = raw.decode("utf-8").rstrip("\r\n")
            region, sep, text = line.partition("\t")
            if not is_valid_region_id(region):
                errors.append(
                    IngestError(local_line, f"invalid region id: {region!r}")
                )
                continue
            tokens = tokenize(text if sep else "")
            counter = counts.get(region)
            if counter is None:
                counter = counts[region] = Counter()
                totals[region] = 0
                doc_counts[region] = 0
            counter.update(tokens)
            totals[region] += len(tokens)
            doc_counts[region] += 1
            if phrase_idx:
                _count_phrases(tokens, phrase_idx, counter)
    return result, errors, local_line


def ingest_tsv(
    path,
    phrases: Iterable[str] = (),
    workers: int = 1,
) -> tuple[RegionCounts, list[IngestError]]:
    """Aggregate a ``region_id<TAB>text`` TSV, optionally across workers.

    Workers process disjoint byte ranges; results merge to exactly the
    single-pass answer regardless of scheduling. Error line numbers are
    global file line numbers in either mode.
    """
    if not os.path.exists(path):
        raise InputError(f"document file not found: {path}")
    phrases = tuple(phrases)
    if workers <= 1:
        return aggregate_documents(_read_tsv_documents(path), phrases)
    chunks = _chunk_boundaries(path, workers)
    if len(chunks) == 1:
        return aggregate_documents(_read_tsv_documents(path), phrases)
    jobs = [(path, start, end, phrases) for start, end in chunks]
    with Pool(processes=len(jobs)) as pool:
        parts = pool.map(_ingest_chunk, jobs)
    merged = merge_counts(p[0] for p in parts)
    errors: list[IngestError] = []
    offset = 0
    for _, errs, n_lines in parts:
        errors.extend(IngestError(e.line_number + offset, e.reason) for e in errs)
        offset += n_lines
    return merged, errors


def load_region_counts(path) -> RegionCounts:
    """Load a precomputed region x word table.

    Header must be ``region_id,word,count`` (nonnegative integers) or
    ``region_id,word,freq`` (relative frequencies in [0, 1]). Duplicate
    (region, word) pairs are rejected.
    """
    if not os.path.exists(path):
        raise InputError(f"region counts file not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header == ["region_id", "word", "count"]:
            mode = "count"
        elif header == ["region_id", "word", "freq"]:
            mode = "freq"
        else:
            raise InputError(
                f"{path}: unknown header {header!r}; expected "
                "region_id,word,count or region_id,word,freq"
            )
        result = RegionCounts(mode=mode)
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 3:
                raise InputError(f"{path}:{lineno}: expected 3 fields")
            region, word, value = row[0], row[1], row[2]
            require_region_id(region)
            counter = result.counts.setdefault(region, Counter())
            if word in counter:
                raise InputError(
                    f"{path}:{lineno}: duplicate (region, word) pair "
                    f"({region}, {word})"
                )
            if mode == "count":
                try:
                    n = int(value)
                except ValueError:
                    raise InputError(
                        f"{path}:{lineno}: bad count {value!r}"
                    ) from None
                if n < 0:
                    raise InputError(f"{path}:{lineno}: negative count {n}")
                counter[word] = n
            else:
                try:
                    f = float(value)
                except ValueError:
                    raise InputError(
                        f"{path}:{lineno}: bad frequency {value!r}"
                    ) from None
                if not 0.0 <= f <= 1.0:
                    raise InputError(
                        f"{path}:{lineno}: relative frequency {f} outside [0, 1]"
                    )
                counter[word] = f
    for region, counter in result.counts.items():
        if mode == "count":
            result.totals[region] = sum(counter.values())
        else:
            result.totals[region] = 1.0
    return result


def filter_regions(counts: RegionCounts, min_docs: int) -> RegionCounts:
    """Drop regions with fewer than ``min_docs`` documents.

    Regions without document-count information (precomputed tables) are
    always retained; imputation for dropped regions is the
    interpolation module's job, not this one's.
    """
    if min_docs <= 0 or not counts.doc_counts:
        return counts
    keep = {
        region
        for region in counts.counts
        if counts.doc_counts.get(region, 0) >= min_docs
    }
    return RegionCounts(
        mode=counts.mode,
        counts={r: counts.counts[r] for r in keep},
        totals={r: counts.totals[r] for r in keep},
        doc_counts={r: counts.doc_counts[r] for r in keep if r in counts.doc_counts},
        tokenizer_version=counts.tokenizer_version,
    )


def write_error_report(errors: list[IngestError], path) -> None:
    """CSV error report: line_number,reason."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["line_number", "reason"])
        for err in errors:
            writer.writerow([err.line_number, err.reason])

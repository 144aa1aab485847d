"""Wrapper Contexts that augment stored statements with computed knowledge.

RuleContext materializes the least fixpoint of Horn rules over triple
patterns (e.g. transitive ancestry over derivation edges), GeoContext derives
spatial containment from point and bounding-box coordinates, and
FullTextContext maintains an inverted index over literal objects. Derived
statements are answered from match operations but never written into the
wrapped store and never appear in iteration.
"""

from __future__ import annotations

import logging
import math
import re
import threading
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from knowspace import vocab
from knowspace.contexts import Context
from knowspace.operations import (
    MetadataMatchOp,
    MetadataWriteOp,
    Operation,
    TextSearchOp,
)
from knowspace.rdf import (
    ANY,
    MATCH_ALL,
    BlankNode,
    Graph,
    IriRef,
    Literal,
    NTriplesParseError,
    Term,
    Triple,
    TriplePattern,
    Variable,
    extend_binding,
    scan_term,
    substitute_pattern,
)


class RuleError(ValueError):
    """Malformed or unsafe rule."""


@dataclass(frozen=True)
class Rule:
    """A Horn clause: body patterns imply the head pattern.

    Safety: every variable in the head occurs in the body, and the head
    predicate is a concrete IRI, so instantiated heads are always ground.
    """

    body: tuple[TriplePattern, ...]
    head: TriplePattern

    def __post_init__(self) -> None:
        if not self.body:
            raise RuleError("rule body must be non-empty")
        if not isinstance(self.head.predicate, IriRef):
            raise RuleError("rule head predicate must be a concrete IRI")
        if any(p is ANY for p in self.head.positions()):
            raise RuleError("rule head cannot contain wildcards")
        body_vars: set[str] = set()
        for pat in self.body:
            body_vars |= pat.variables()
        unsafe = self.head.variables() - body_vars
        if unsafe:
            raise RuleError(f"unsafe head variables not bound in body: {sorted(unsafe)}")


def _scan_rule_term(line: str, i: int, lineno: int) -> tuple[Term | Variable, int]:
    if line[i] == "?":
        m = re.match(r"[A-Za-z_][A-Za-z0-9_]*", line[i + 1 :])
        if not m:
            raise RuleError(f"line {lineno}: malformed variable")
        return Variable(m.group(0)), i + 1 + m.end()
    try:
        return scan_term(line, i, lineno)
    except NTriplesParseError as e:
        raise RuleError(str(e)) from None


def _scan_pattern(line: str, i: int, lineno: int) -> tuple[TriplePattern, int]:
    terms = []
    for _ in range(3):
        while i < len(line) and line[i].isspace():
            i += 1
        if i >= len(line):
            raise RuleError(f"line {lineno}: pattern needs three terms")
        term, i = _scan_rule_term(line, i, lineno)
        terms.append(term)
    try:
        return TriplePattern(*terms), i
    except ValueError as e:
        raise RuleError(f"line {lineno}: {e}") from None


def parse_rule_line(line: str, lineno: int = 0) -> Rule:
    body = []
    i = 0
    while True:
        pattern, i = _scan_pattern(line, i, lineno)
        body.append(pattern)
        while i < len(line) and line[i].isspace():
            i += 1
        if line[i : i + 1] == "&":
            i += 1
            continue
        if line[i : i + 2] == "->":
            i += 2
            break
        raise RuleError(f"line {lineno}: expected '&' or '->' after pattern")
    head, i = _scan_pattern(line, i, lineno)
    if line[i:].strip():
        raise RuleError(f"line {lineno}: trailing content after head pattern")
    return Rule(tuple(body), head)


def parse_rules(text: str) -> list[Rule]:
    """Parse the rule file format: one ``pattern & pattern -> pattern`` per
    line, ``#`` comments and blank lines ignored."""
    rules = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rules.append(parse_rule_line(line, lineno))
    return rules


def _match_atom(g: Graph, pattern: TriplePattern, binding: dict[str, Term]) -> Iterator[dict[str, Term]]:
    bound = substitute_pattern(pattern, binding)
    if bound is None:  # a bound term is illegal for its position: no matches
        return
    for t in g.match(bound):
        yield extend_binding(binding, bound, t)


def _instantiate_head(head: TriplePattern, binding: dict[str, Term]) -> Triple | None:
    ground = substitute_pattern(head, binding)
    if ground is None:
        return None
    s, p, o = ground.positions()
    # a body variable may have bound a literal; such heads are not valid triples
    if not isinstance(s, (IriRef, BlankNode)) or not isinstance(p, IriRef):
        return None
    if not isinstance(o, (IriRef, BlankNode, Literal)):
        return None
    return Triple(s, p, o)


def fixpoint(base: Iterable[Triple], rules: Sequence[Rule]) -> set[Triple]:
    """Least-fixpoint forward chaining; returns only the derived triples.

    Semi-naive: each round joins one body atom against the previous round's
    delta and the remaining atoms against everything known, so established
    facts are never re-joined against each other. Terminates because all
    derivable triples are built from terms already present.
    """
    total = Graph(base)
    derived: set[Triple] = set()
    delta: set[Triple] = set(total)
    while delta:
        delta_graph = Graph(delta)
        fresh: set[Triple] = set()
        for rule in rules:
            for i in range(len(rule.body)):
                atoms = (rule.body[i],) + rule.body[:i] + rule.body[i + 1 :]
                bindings: list[dict[str, Term]] = [{}]
                for j, atom in enumerate(atoms):
                    source = delta_graph if j == 0 else total
                    bindings = [b2 for b in bindings for b2 in _match_atom(source, atom, b)]
                    if not bindings:
                        break
                for b in bindings:
                    t = _instantiate_head(rule.head, b)
                    if t is not None and t not in total and t not in fresh:
                        fresh.add(t)
        for t in fresh:
            total.add(t)
            derived.add(t)
        delta = fresh
    return derived


class _InnerFailure(Exception):
    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


class _DerivingContext(Context):
    """Shared mechanics for wrappers that cache a derived-triple set.

    The cache is recomputed lazily behind a single lock and invalidated by
    any metadata write through this context; a query never observes a
    half-built cache. Writes that bypass the wrapper are invisible to it.
    """

    def __init__(self, inner: Context) -> None:
        self.inner = inner
        self._cache_lock = threading.Lock()
        self._derived: Graph | None = None

    def invalidate(self) -> None:
        with self._cache_lock:
            self._derived = None

    def _compute(self, base: set[Triple]) -> set[Triple]:
        raise NotImplementedError

    def _derived_graph(self) -> Graph:
        with self._cache_lock:
            if self._derived is None:
                scan = self.inner.perform(MetadataMatchOp(MATCH_ALL))
                if scan.failed:
                    raise _InnerFailure(scan.failure_reason or "inner match failed")
                self._derived = Graph(self._compute(set(scan.results)))
            return self._derived

    def _perform(self, op: Operation) -> None:
        if isinstance(op, MetadataWriteOp):
            self.inner.perform(op)
            if op.succeeded:
                self.invalidate()
        elif isinstance(op, MetadataMatchOp):
            if not op.include_derived:
                self.inner.perform(op)
                return
            try:
                derived = self._derived_graph()
            except _InnerFailure as e:
                op.fail(e.reason)
                return
            stored = self.inner.perform(op.fresh())
            if stored.failed:
                op.fail(stored.failure_reason or "inner match failed")
                return
            op.succeed(stored.results | derived.match(op.pattern))
        else:
            self.inner.perform(op)


class RuleContext(_DerivingContext):
    """Materializes rule consequences over the wrapped store's statements."""

    def __init__(self, inner: Context, rules: Iterable[Rule]) -> None:
        super().__init__(inner)
        self.rules = list(rules)

    def _compute(self, base: set[Triple]) -> set[Triple]:
        return fixpoint(base, self.rules)


def geo_within(lat: float, lon: float, min_lat: float, min_lon: float,
               max_lat: float, max_lon: float) -> bool:
    """Inclusive point-in-box test in WGS84 decimal degrees.

    A box whose min longitude exceeds its max wraps across the dateline.
    """
    if not (min_lat <= lat <= max_lat):
        return False
    if min_lon <= max_lon:
        return min_lon <= lon <= max_lon
    return lon >= min_lon or lon <= max_lon


@dataclass(frozen=True)
class GeoVocabulary:
    """Predicate bindings for coordinate and containment statements."""

    point_lat: IriRef = vocab.GEO_LAT
    point_lon: IriRef = vocab.GEO_LONG
    box_min_lat: IriRef = vocab.GEO_MIN_LAT
    box_min_lon: IriRef = vocab.GEO_MIN_LON
    box_max_lat: IriRef = vocab.GEO_MAX_LAT
    box_max_lon: IriRef = vocab.GEO_MAX_LON
    within: IriRef = vocab.GEO_WITHIN


_NUMERIC_DATATYPES = (vocab.XSD_DECIMAL, vocab.XSD_DOUBLE)
_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _parse_coordinate(term: Term) -> float | None:
    if not isinstance(term, Literal) or term.language is not None:
        return None
    if term.datatype is not None and term.datatype not in _NUMERIC_DATATYPES:
        return None
    if not _NUMBER_RE.match(term.lexical.strip()):
        return None
    value = float(term.lexical)
    return value if math.isfinite(value) else None


class GeoContext(_DerivingContext):
    """Derives ``within`` statements from point and bounding-box coordinates.

    Points and boxes with unparsable or out-of-range coordinates are skipped
    with a logged diagnostic; they never fail the operation.
    """

    def __init__(self, inner: Context, vocabulary: GeoVocabulary | None = None) -> None:
        super().__init__(inner)
        self.vocabulary = vocabulary or GeoVocabulary()

    def _collect(self, base: Graph, predicate: IriRef, low: float, high: float) -> dict:
        values: dict = {}
        for t in base.match(TriplePattern(ANY, predicate, ANY)):
            coord = _parse_coordinate(t.object)
            if coord is None or not (low <= coord <= high):
                logging.getLogger(__name__).warning(
                    "skipping unusable coordinate %r on %s", t.object, t.subject
                )
                continue
            values.setdefault(t.subject, []).append(coord)
        return values

    def _compute(self, base_set: set[Triple]) -> set[Triple]:
        v = self.vocabulary
        base = Graph(base_set)
        lats = self._collect(base, v.point_lat, -90.0, 90.0)
        lons = self._collect(base, v.point_lon, -180.0, 180.0)
        min_lats = self._collect(base, v.box_min_lat, -90.0, 90.0)
        min_lons = self._collect(base, v.box_min_lon, -180.0, 180.0)
        max_lats = self._collect(base, v.box_max_lat, -90.0, 90.0)
        max_lons = self._collect(base, v.box_max_lon, -180.0, 180.0)
        points = {s: (lats[s], lons[s]) for s in lats.keys() & lons.keys()}
        boxes = {
            s: (min_lats[s], min_lons[s], max_lats[s], max_lons[s])
            for s in min_lats.keys() & min_lons.keys() & max_lats.keys() & max_lons.keys()
        }
        derived: set[Triple] = set()
        for point, (plats, plons) in points.items():
            for box, (bmin_lats, bmin_lons, bmax_lats, bmax_lons) in boxes.items():
                if any(
                    geo_within(la, lo, mnla, mnlo, mxla, mxlo)
                    for la in plats
                    for lo in plons
                    for mnla in bmin_lats
                    for mnlo in bmin_lons
                    for mxla in bmax_lats
                    for mxlo in bmax_lons
                ):
                    derived.add(Triple(point, v.within, box))
        return derived


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs; everything else is a separator."""
    return re.findall(r"[^\W_]+", text.lower())


class FullTextContext(Context):
    """Inverted index over literal objects, updated on writes through here.

    A subject matches a search when, for every query term, some currently
    asserted literal of that subject contains the term as a whole token
    (lowercased). Only IRI subjects are indexed, since search results are
    IRIs. Construction bulk-indexes the wrapped store's current statements.
    """

    def __init__(self, inner: Context) -> None:
        self.inner = inner
        self._lock = threading.Lock()
        self._indexed: set[Triple] = set()
        self._postings: dict[str, dict[IriRef, int]] = {}
        scan = inner.perform(MetadataMatchOp(MATCH_ALL))
        if scan.failed:
            raise RuntimeError(f"cannot bulk-index wrapped context: {scan.failure_reason}")
        for t in scan.results:
            self._index(t)

    @staticmethod
    def _indexable(t: Triple) -> bool:
        return isinstance(t.subject, IriRef) and isinstance(t.object, Literal)

    def _index(self, t: Triple) -> None:
        if not self._indexable(t) or t in self._indexed:
            return
        self._indexed.add(t)
        for token in set(tokenize(t.object.lexical)):  # type: ignore[union-attr]
            bucket = self._postings.setdefault(token, {})
            bucket[t.subject] = bucket.get(t.subject, 0) + 1  # type: ignore[index]

    def _unindex(self, t: Triple) -> None:
        if t not in self._indexed:
            return
        self._indexed.discard(t)
        for token in set(tokenize(t.object.lexical)):  # type: ignore[union-attr]
            bucket = self._postings.get(token)
            if not bucket:
                continue
            count = bucket.get(t.subject, 0) - 1  # type: ignore[arg-type]
            if count > 0:
                bucket[t.subject] = count  # type: ignore[index]
            else:
                bucket.pop(t.subject, None)  # type: ignore[arg-type]
                if not bucket:
                    del self._postings[token]

    def _perform(self, op: Operation) -> None:
        if isinstance(op, MetadataWriteOp):
            self.inner.perform(op)
            if op.succeeded:
                with self._lock:
                    for t in op.retractions:
                        self._unindex(t)
                    for t in op.assertions:
                        self._index(t)
        elif isinstance(op, TextSearchOp):
            with self._lock:
                subject_sets = [
                    set(self._postings.get(term.lower(), {})) for term in op.terms
                ]
            results = set.intersection(*subject_sets) if subject_sets else set()
            op.succeed(results)
        else:
            self.inner.perform(op)

"""RDF data model: terms, triples, patterns, graphs, and N-Triples text.

Terms compare by value with no normalization: two IRIs are equal iff their
strings are byte-equal, and literals compare by lexical form plus datatype
IRI plus language tag. N-Triples is the only serialization; output is
deterministic (one triple per line, lines sorted), so equal graphs always
serialize to identical bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Union

_SCHEME_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")
_BAD_IRI_CHAR_RE = re.compile(r'[\s<>"]')
_LANG_TAG_RE = re.compile(r"^[a-zA-Z]{1,8}(?:-[a-zA-Z0-9]{1,8})*$")
_BLANK_LABEL_RE = re.compile(r"^[A-Za-z][A-Za-z0-9]*$")


@dataclass(frozen=True, slots=True)
class IriRef:
    """An absolute IRI reference."""

    value: str

    def __post_init__(self) -> None:
        if not self.value:
            raise ValueError("IRI must be non-empty")
        if not _SCHEME_RE.match(self.value):
            raise ValueError(f"IRI has no scheme: {self.value!r}")
        if _BAD_IRI_CHAR_RE.search(self.value):
            raise ValueError(f"IRI contains whitespace or <>\": {self.value!r}")

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, slots=True)
class Literal:
    """An RDF literal: lexical form plus an optional datatype or language tag."""

    lexical: str
    datatype: IriRef | None = None
    language: str | None = None

    def __post_init__(self) -> None:
        if self.datatype is not None and self.language is not None:
            raise ValueError("literal cannot carry both datatype and language")
        if self.language is not None:
            if not _LANG_TAG_RE.match(self.language):
                raise ValueError(f"malformed language tag: {self.language!r}")
            # stored lowercased; tags compare case-insensitively
            object.__setattr__(self, "language", self.language.lower())


@dataclass(frozen=True, slots=True)
class BlankNode:
    """A blank node, identified by a label scoped to one graph or document."""

    label: str

    def __post_init__(self) -> None:
        if not _BLANK_LABEL_RE.match(self.label):
            raise ValueError(f"malformed blank node label: {self.label!r}")


Term = Union[IriRef, BlankNode, Literal]
SubjectTerm = Union[IriRef, BlankNode]


@dataclass(frozen=True, slots=True)
class Triple:
    """One RDF statement."""

    subject: SubjectTerm
    predicate: IriRef
    object: Term

    def __post_init__(self) -> None:
        if not isinstance(self.subject, (IriRef, BlankNode)):
            raise ValueError("triple subject must be an IRI or blank node")
        if not isinstance(self.predicate, IriRef):
            raise ValueError("triple predicate must be an IRI")
        if not isinstance(self.object, (IriRef, BlankNode, Literal)):
            raise ValueError("triple object must be an IRI, blank node, or literal")


@dataclass(frozen=True, slots=True)
class Variable:
    """A named query variable usable in any pattern position."""

    name: str

    def __post_init__(self) -> None:
        if not re.match(r"^[A-Za-z_][A-Za-z0-9_]*$", self.name):
            raise ValueError(f"malformed variable name: {self.name!r}")


class _Wildcard:
    """Matches any term and binds nothing. Use the ANY singleton."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ANY"


ANY = _Wildcard()

PatternTerm = Union[Term, Variable, _Wildcard]


@dataclass(frozen=True, slots=True)
class TriplePattern:
    """A triple with each position either a concrete term, a variable, or ANY.

    A concrete term matches only an equal term; ANY matches anything; a
    variable matches anything but must bind consistently (including when the
    same variable occurs twice within this pattern).
    """

    subject: PatternTerm = ANY
    predicate: PatternTerm = ANY
    object: PatternTerm = ANY

    def __post_init__(self) -> None:
        if isinstance(self.subject, Literal):
            raise ValueError("pattern subject cannot be a literal")
        if isinstance(self.predicate, (Literal, BlankNode)):
            raise ValueError("pattern predicate must be an IRI, variable, or ANY")

    def positions(self) -> tuple[PatternTerm, PatternTerm, PatternTerm]:
        return (self.subject, self.predicate, self.object)

    def variables(self) -> set[str]:
        return {p.name for p in self.positions() if isinstance(p, Variable)}

    def matches(self, t: Triple) -> bool:
        binding: dict[str, Term] = {}
        for pat, val in zip(self.positions(), (t.subject, t.predicate, t.object)):
            if pat is ANY:
                continue
            if isinstance(pat, Variable):
                if pat.name in binding:
                    if binding[pat.name] != val:
                        return False
                else:
                    binding[pat.name] = val
            elif pat != val:
                return False
        return True


MATCH_ALL = TriplePattern(ANY, ANY, ANY)


def substitute_pattern(pattern: TriplePattern, binding: dict[str, Term]) -> TriplePattern | None:
    """Replace variables that are bound in binding with their terms.

    Returns None when a bound term is of a kind its position cannot hold
    (e.g. a literal in subject position): such a pattern matches nothing.
    """

    def sub(p: PatternTerm) -> PatternTerm:
        if isinstance(p, Variable) and p.name in binding:
            return binding[p.name]
        return p

    try:
        return TriplePattern(sub(pattern.subject), sub(pattern.predicate), sub(pattern.object))
    except ValueError:
        return None


def extend_binding(binding: dict[str, Term], pattern: TriplePattern, t: Triple) -> dict[str, Term]:
    """Bind pattern's variables from a triple that matches it."""
    new = dict(binding)
    for pat, val in zip(pattern.positions(), (t.subject, t.predicate, t.object)):
        if isinstance(pat, Variable):
            new[pat.name] = val
    return new


class Graph:
    """A duplicate-free set of triples with per-position indexes.

    Mutation is not synchronized; callers own locking.
    """

    def __init__(self, triples: Iterable[Triple] = ()) -> None:
        self._triples: set[Triple] = set()
        self._by_subject: dict[SubjectTerm, set[Triple]] = {}
        self._by_predicate: dict[IriRef, set[Triple]] = {}
        self._by_object: dict[Term, set[Triple]] = {}
        for t in triples:
            self.add(t)

    def add(self, t: Triple) -> None:
        """Insert a triple; inserting an existing triple is a no-op."""
        if t in self._triples:
            return
        self._triples.add(t)
        self._by_subject.setdefault(t.subject, set()).add(t)
        self._by_predicate.setdefault(t.predicate, set()).add(t)
        self._by_object.setdefault(t.object, set()).add(t)

    def discard(self, t: Triple) -> None:
        """Remove a triple; removing an absent triple is a no-op."""
        if t not in self._triples:
            return
        self._triples.discard(t)
        for index, key in (
            (self._by_subject, t.subject),
            (self._by_predicate, t.predicate),
            (self._by_object, t.object),
        ):
            bucket = index[key]
            bucket.discard(t)
            if not bucket:
                del index[key]

    def match(self, pattern: TriplePattern) -> set[Triple]:
        """Return exactly the triples satisfying the pattern position-wise."""
        candidates: set[Triple] | None = None
        for index, pat in (
            (self._by_subject, pattern.subject),
            (self._by_predicate, pattern.predicate),
            (self._by_object, pattern.object),
        ):
            if pat is ANY or isinstance(pat, Variable):
                continue
            bucket = index.get(pat, set())
            if candidates is None or len(bucket) < len(candidates):
                candidates = bucket
        if candidates is None:
            candidates = self._triples
        return {t for t in candidates if pattern.matches(t)}

    def copy(self) -> Graph:
        return Graph(self._triples)

    def __contains__(self, t: Triple) -> bool:
        return t in self._triples

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def __len__(self) -> int:
        return len(self._triples)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Graph):
            return self._triples == other._triples
        if isinstance(other, (set, frozenset)):
            return self._triples == other
        return NotImplemented

    def __repr__(self) -> str:
        return f"Graph(<{len(self._triples)} triples>)"


class NTriplesParseError(ValueError):
    """Malformed N-Triples input, with the 1-based offending line number."""

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "r": "\r", "t": "\t"}
_UNESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}


def _escape_literal(text: str) -> str:
    out = []
    for ch in text:
        if ch in _UNESCAPES:
            out.append(_UNESCAPES[ch])
        elif ch < "\x20":
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def term_text(term: Term) -> str:
    """The N-Triples spelling of a term; also the canonical sort key."""
    if isinstance(term, IriRef):
        return f"<{term.value}>"
    if isinstance(term, BlankNode):
        return f"_:{term.label}"
    if isinstance(term, Literal):
        base = f'"{_escape_literal(term.lexical)}"'
        if term.language is not None:
            return f"{base}@{term.language}"
        if term.datatype is not None:
            return f"{base}^^<{term.datatype.value}>"
        return base
    raise TypeError(f"not an RDF term: {term!r}")


def triple_text(t: Triple) -> str:
    return f"{term_text(t.subject)} {term_text(t.predicate)} {term_text(t.object)} ."


def serialize_ntriples(g: Graph | Iterable[Triple]) -> str:
    """Serialize a graph, one triple per line, in lexicographic term order."""
    lines = sorted(
        (term_text(t.subject), term_text(t.predicate), term_text(t.object))
        for t in g
    )
    return "".join(f"{s} {p} {o} .\n" for s, p, o in lines)


def _skip_ws(line: str, i: int) -> int:
    while i < len(line) and line[i] in " \t":
        i += 1
    return i


@lru_cache(maxsize=65536)
def _validated_iri(value: str) -> IriRef:
    return IriRef(value)


def _scan_iri(line: str, i: int, lineno: int) -> tuple[IriRef, int]:
    end = line.find(">", i + 1)
    if end < 0:
        raise NTriplesParseError("unterminated IRI", lineno)
    try:
        return _validated_iri(line[i + 1 : end]), end + 1
    except ValueError as e:
        raise NTriplesParseError(str(e), lineno) from None


_HEX_RE = re.compile(r"[0-9A-Fa-f]+$")
_LABEL_SCAN_RE = re.compile(r"[A-Za-z][A-Za-z0-9]*")
_LANG_SCAN_RE = re.compile(r"[a-zA-Z]{1,8}(?:-[a-zA-Z0-9]{1,8})*")


def _scan_string(line: str, i: int, lineno: int) -> tuple[str, int]:
    # i points at the opening quote; jump between '"' and '\' instead of
    # walking every character
    out = []
    i += 1
    n = len(line)
    while i < n:
        quote = line.find('"', i)
        backslash = line.find("\\", i)
        if quote < 0 and backslash < 0:
            break
        if backslash < 0 or (0 <= quote < backslash):
            out.append(line[i:quote])
            return "".join(out), quote + 1
        out.append(line[i:backslash])
        i = backslash
        if i + 1 >= n:
            raise NTriplesParseError("dangling escape", lineno)
        esc = line[i + 1]
        if esc in _ESCAPES:
            out.append(_ESCAPES[esc])
            i += 2
        elif esc == "u" or esc == "U":
            width = 4 if esc == "u" else 8
            hexdigits = line[i + 2 : i + 2 + width]
            if len(hexdigits) != width or not _HEX_RE.fullmatch(hexdigits):
                raise NTriplesParseError(f"malformed \\{esc} escape", lineno)
            code = int(hexdigits, 16)
            try:
                out.append(chr(code))
            except (ValueError, OverflowError):
                raise NTriplesParseError(f"codepoint out of range: {hexdigits}", lineno) from None
            i += 2 + width
        else:
            raise NTriplesParseError(f"unknown escape \\{esc}", lineno)
    raise NTriplesParseError("unterminated string literal", lineno)


def scan_term(line: str, i: int, lineno: int = 0) -> tuple[Term, int]:
    """Scan one term (IRI, blank node, or literal) starting at index i.

    Returns the term and the index just past it. Shared by the N-Triples
    parser and the rule/query text parsers.
    """
    if i >= len(line):
        raise NTriplesParseError("expected a term, found end of line", lineno)
    ch = line[i]
    if ch == "<":
        return _scan_iri(line, i, lineno)
    if ch == "_":
        if line[i : i + 2] != "_:":
            raise NTriplesParseError("expected '_:' to open a blank node", lineno)
        m = _LABEL_SCAN_RE.match(line, i + 2)
        if not m:
            raise NTriplesParseError("malformed blank node label", lineno)
        return BlankNode(m.group(0)), m.end()
    if ch == '"':
        lexical, j = _scan_string(line, i, lineno)
        if line[j : j + 1] == "@":
            m = _LANG_SCAN_RE.match(line, j + 1)
            if not m:
                raise NTriplesParseError("malformed language tag", lineno)
            return Literal(lexical, language=m.group(0)), m.end()
        if line[j : j + 2] == "^^":
            if line[j + 2 : j + 3] != "<":
                raise NTriplesParseError("datatype must be an IRI", lineno)
            dt, k = _scan_iri(line, j + 2, lineno)
            return Literal(lexical, datatype=dt), k
        return Literal(lexical), j
    raise NTriplesParseError(f"unexpected character {ch!r}", lineno)


def parse_ntriples_line(line: str, lineno: int = 0) -> Triple:
    """Parse a single N-Triples statement line (no comment/blank handling)."""
    i = _skip_ws(line, 0)
    subject, i = scan_term(line, i, lineno)
    if isinstance(subject, Literal):
        raise NTriplesParseError("literal in subject position", lineno)
    i = _skip_ws(line, i)
    predicate, i = scan_term(line, i, lineno)
    if not isinstance(predicate, IriRef):
        raise NTriplesParseError("predicate must be an IRI", lineno)
    i = _skip_ws(line, i)
    obj, i = scan_term(line, i, lineno)
    i = _skip_ws(line, i)
    if i >= len(line) or line[i] != ".":
        raise NTriplesParseError("expected '.' to end statement", lineno)
    i = _skip_ws(line, i + 1)
    if i != len(line):
        raise NTriplesParseError("trailing content after '.'", lineno)
    return Triple(subject, predicate, obj)


def parse_ntriples(text: str) -> Graph:
    """Parse an N-Triples document into a Graph.

    Blank lines and full-line ``#`` comments are allowed. Raises
    NTriplesParseError carrying the 1-based line number on any malformed line.
    """
    g = Graph()
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw[:-1] if raw.endswith("\r") else raw
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        g.add(parse_ntriples_line(line, lineno))
    return g

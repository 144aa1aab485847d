"""SPARQL-subset parser and evaluator: SELECT over basic graph patterns.

Supported: PREFIX declarations, SELECT [DISTINCT] with explicit projection or
*, conjunctive triple patterns, FILTER comparisons and regex, LIMIT/OFFSET.
Solution rows are ordered deterministically (lexicographic on the serialized
bound terms in projection order) before LIMIT/OFFSET, so results for a fixed
store are reproducible. OPTIONAL, UNION, ORDER BY, and the rest of SPARQL are
deliberately out of scope.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Union

from knowspace import vocab
from knowspace.operations import MetadataMatchOp
from knowspace.rdf import (
    ANY,
    BlankNode,
    Graph,
    IriRef,
    Literal,
    NTriplesParseError,
    Term,
    Triple,
    TriplePattern,
    Variable,
    _scan_string,
    extend_binding,
    scan_term,
    substitute_pattern,
    term_text,
)


class QueryParseError(ValueError):
    """Syntax or scoping error in a query, with position information."""


class QueryEvaluationError(RuntimeError):
    """The underlying context failed while answering the query."""


@dataclass(frozen=True)
class ComparisonFilter:
    var: str
    op: str  # one of = != < <= > >=
    rhs: Union[Variable, Literal]


@dataclass(frozen=True)
class RegexFilter:
    var: str
    pattern: str
    ignore_case: bool = False


FilterExpr = Union[ComparisonFilter, RegexFilter]


@dataclass(frozen=True)
class SelectQuery:
    patterns: tuple[TriplePattern, ...]
    projection: tuple[str, ...] | None = None  # None means SELECT *
    filters: tuple[FilterExpr, ...] = ()
    distinct: bool = False
    limit: int | None = None
    offset: int | None = None
    prefixes: dict[str, IriRef] = field(default_factory=dict)


@dataclass
class ResultSet:
    """Projected solutions; every row binds every projected variable."""

    variables: list[str]
    rows: list[dict[str, Term]]

    def to_json(self) -> dict:
        """Standard SPARQL-results JSON structure."""
        return {
            "head": {"vars": list(self.variables)},
            "results": {
                "bindings": [
                    {v: term_json(row[v]) for v in self.variables} for row in self.rows
                ]
            },
        }


def term_json(term: Term) -> dict:
    if isinstance(term, IriRef):
        return {"type": "uri", "value": term.value}
    if isinstance(term, BlankNode):
        return {"type": "bnode", "value": term.label}
    if isinstance(term, Literal):
        out: dict = {"type": "literal", "value": term.lexical}
        if term.language is not None:
            out["xml:lang"] = term.language
        if term.datatype is not None:
            out["datatype"] = term.datatype.value
        return out
    raise TypeError(f"not an RDF term: {term!r}")


_PNAME_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_\-]*)?:([A-Za-z0-9_\-]*)")
_VAR_RE = re.compile(r"\?([A-Za-z_][A-Za-z0-9_]*)")
_NUMBER_RE = re.compile(r"[+-]?(?:\d+\.\d+|\.\d+|\d+)")
_WORD_RE = re.compile(r"[A-Za-z]+")


class _Cursor:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def error(self, message: str) -> QueryParseError:
        line = self.text.count("\n", 0, self.pos) + 1
        col = self.pos - (self.text.rfind("\n", 0, self.pos) + 1) + 1
        return QueryParseError(f"line {line}, column {col}: {message}")

    def skip_ws(self) -> None:
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch.isspace():
                self.pos += 1
            elif ch == "#":
                nl = self.text.find("\n", self.pos)
                self.pos = len(self.text) if nl < 0 else nl + 1
            else:
                break

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos : self.pos + 1]

    def accept(self, token: str) -> bool:
        self.skip_ws()
        if self.text.startswith(token, self.pos):
            self.pos += len(token)
            return True
        return False

    def expect(self, token: str) -> None:
        if not self.accept(token):
            raise self.error(f"expected {token!r}")

    def accept_keyword(self, word: str) -> bool:
        self.skip_ws()
        m = _WORD_RE.match(self.text, self.pos)
        if m and m.group(0).upper() == word:
            self.pos = m.end()
            return True
        return False

    def expect_keyword(self, word: str) -> None:
        if not self.accept_keyword(word):
            raise self.error(f"expected keyword {word}")

    def take_regex(self, pattern: re.Pattern, what: str) -> re.Match:
        self.skip_ws()
        m = pattern.match(self.text, self.pos)
        if not m:
            raise self.error(f"expected {what}")
        self.pos = m.end()
        return m


class _Parser:
    def __init__(self, text: str) -> None:
        self.c = _Cursor(text)
        self.prefixes: dict[str, IriRef] = {}

    def parse(self) -> SelectQuery:
        c = self.c
        while c.accept_keyword("PREFIX"):
            c.skip_ws()
            m = c.take_regex(_PNAME_RE, "prefix declaration")
            if m.group(2):
                raise c.error("prefix declaration must end with ':'")
            label = m.group(1) or ""
            iri = self._take_iri()
            self.prefixes[label] = iri
        c.expect_keyword("SELECT")
        distinct = c.accept_keyword("DISTINCT")
        projection: tuple[str, ...] | None
        if c.accept("*"):
            projection = None
        else:
            names = []
            while c.peek() == "?":
                m = c.take_regex(_VAR_RE, "variable")
                names.append(m.group(1))
            if not names:
                raise c.error("SELECT needs '*' or at least one variable")
            projection = tuple(names)
        c.expect_keyword("WHERE")
        c.expect("{")
        patterns: list[TriplePattern] = []
        filters: list[FilterExpr] = []
        while True:
            c.skip_ws()
            if c.peek() == "}" or self._peek_keyword("FILTER"):
                break
            patterns.append(self._take_pattern())
            if not c.accept("."):
                break
        while c.accept_keyword("FILTER"):
            filters.append(self._take_filter())
        c.expect("}")
        if not patterns:
            raise c.error("empty pattern list")
        limit = offset = None
        while True:
            if limit is None and c.accept_keyword("LIMIT"):
                limit = self._take_int()
            elif offset is None and c.accept_keyword("OFFSET"):
                offset = self._take_int()
            else:
                break
        if not c.at_end():
            raise c.error("trailing content after query")
        in_scope = set().union(*(p.variables() for p in patterns))
        if projection is not None:
            missing = set(projection) - in_scope
            if missing:
                raise QueryParseError(
                    f"projected variables not in WHERE patterns: {sorted(missing)}"
                )
        for f in filters:
            used = {f.var} | ({f.rhs.name} if isinstance(f, ComparisonFilter) and isinstance(f.rhs, Variable) else set())
            missing = used - in_scope
            if missing:
                raise QueryParseError(f"filter variables not in WHERE patterns: {sorted(missing)}")
        return SelectQuery(
            patterns=tuple(patterns),
            projection=projection,
            filters=tuple(filters),
            distinct=distinct,
            limit=limit,
            offset=offset,
            prefixes=dict(self.prefixes),
        )

    def _peek_keyword(self, word: str) -> bool:
        c = self.c
        c.skip_ws()
        m = _WORD_RE.match(c.text, c.pos)
        return bool(m and m.group(0).upper() == word)

    def _take_int(self) -> int:
        m = self.c.take_regex(re.compile(r"\d+"), "a non-negative integer")
        return int(m.group(0))

    def _take_iri(self) -> IriRef:
        c = self.c
        c.skip_ws()
        if c.peek() != "<":
            raise c.error("expected an IRI")
        end = c.text.find(">", c.pos + 1)
        if end < 0:
            raise c.error("unterminated IRI")
        value = c.text[c.pos + 1 : end]
        c.pos = end + 1
        try:
            return IriRef(value)
        except ValueError as e:
            raise c.error(str(e)) from None

    def _expand_pname(self, m: re.Match) -> IriRef:
        label, local = m.group(1) or "", m.group(2)
        if label not in self.prefixes:
            raise self.c.error(f"unknown prefix {label + ':'!r}")
        try:
            return IriRef(self.prefixes[label].value + local)
        except ValueError as e:
            raise self.c.error(str(e)) from None

    def _take_literal(self) -> Literal:
        c = self.c
        c.skip_ws()
        try:
            lexical, end = _scan_string(c.text, c.pos, 0)
        except NTriplesParseError as e:
            raise c.error(str(e)) from None
        c.pos = end
        if c.text.startswith("@", c.pos):
            m = re.compile(r"@([a-zA-Z]{1,8}(?:-[a-zA-Z0-9]{1,8})*)").match(c.text, c.pos)
            if not m:
                raise c.error("malformed language tag")
            c.pos = m.end()
            return Literal(lexical, language=m.group(1))
        if c.text.startswith("^^", c.pos):
            c.pos += 2
            c.skip_ws()
            if c.peek() == "<":
                return Literal(lexical, datatype=self._take_iri())
            m = _PNAME_RE.match(c.text, c.pos)
            if not m:
                raise c.error("datatype must be an IRI or prefixed name")
            c.pos = m.end()
            return Literal(lexical, datatype=self._expand_pname(m))
        return Literal(lexical)

    def _take_term(self):
        c = self.c
        ch = c.peek()
        if ch == "?":
            m = c.take_regex(_VAR_RE, "variable")
            return Variable(m.group(1))
        if ch == "<":
            return self._take_iri()
        if ch == '"':
            return self._take_literal()
        c.skip_ws()
        m = _NUMBER_RE.match(c.text, c.pos)
        if m and not _PNAME_RE.match(c.text, c.pos):
            c.pos = m.end()
            text = m.group(0)
            dt = vocab.XSD_DECIMAL if "." in text else vocab.XSD_INTEGER
            return Literal(text, datatype=dt)
        m = _PNAME_RE.match(c.text, c.pos)
        if m:
            c.pos = m.end()
            return self._expand_pname(m)
        raise c.error("expected a term (IRI, prefixed name, variable, or literal)")

    def _take_pattern(self) -> TriplePattern:
        s = self._take_term()
        p = self._take_term()
        o = self._take_term()
        try:
            return TriplePattern(s, p, o)
        except ValueError as e:
            raise self.c.error(str(e)) from None

    def _take_filter(self) -> FilterExpr:
        c = self.c
        parenthesized = c.accept("(")
        if c.accept_keyword("REGEX"):
            expr = self._take_regex_call()
        else:
            if not parenthesized:
                raise c.error("expected '(' or regex after FILTER")
            m = c.take_regex(_VAR_RE, "variable on filter left-hand side")
            var = m.group(1)
            op = None
            for candidate in ("!=", "<=", ">=", "=", "<", ">"):
                if c.accept(candidate):
                    op = candidate
                    break
            if op is None:
                raise c.error("expected a comparison operator")
            rhs = self._take_term()
            if isinstance(rhs, (IriRef, BlankNode)):
                raise c.error("filter right-hand side must be a variable or literal")
            expr = ComparisonFilter(var, op, rhs)
        if parenthesized:
            c.expect(")")
        return expr

    def _take_regex_call(self) -> RegexFilter:
        c = self.c
        c.expect("(")
        m = c.take_regex(_VAR_RE, "variable as first regex argument")
        var = m.group(1)
        c.expect(",")
        pattern = self._take_literal()
        flags = None
        if c.accept(","):
            flags = self._take_literal()
        c.expect(")")
        ignore_case = flags is not None and "i" in flags.lexical
        return RegexFilter(var, pattern.lexical, ignore_case)


def parse_query(text: str) -> SelectQuery:
    """Parse the SELECT subset; raises QueryParseError with position info."""
    return _Parser(text).parse()


def format_query(q: SelectQuery) -> str:
    """Render a query back to text with all prefixes expanded."""
    parts = ["SELECT"]
    if q.distinct:
        parts.append("DISTINCT")
    parts.append("*" if q.projection is None else " ".join(f"?{v}" for v in q.projection))
    parts.append("WHERE {")
    parts.append(" . ".join(_pattern_text(p) for p in q.patterns))
    for f in q.filters:
        parts.append(_filter_text(f))
    parts.append("}")
    if q.limit is not None:
        parts.append(f"LIMIT {q.limit}")
    if q.offset is not None:
        parts.append(f"OFFSET {q.offset}")
    return " ".join(parts)


def _pattern_term_text(p) -> str:
    if isinstance(p, Variable):
        return f"?{p.name}"
    return term_text(p)


def _pattern_text(p: TriplePattern) -> str:
    return " ".join(_pattern_term_text(x) for x in p.positions())


def _filter_text(f: FilterExpr) -> str:
    if isinstance(f, RegexFilter):
        flags = ', "i"' if f.ignore_case else ""
        pattern = term_text(Literal(f.pattern))
        return f"FILTER regex(?{f.var}, {pattern}{flags})"
    rhs = _pattern_term_text(f.rhs)
    return f"FILTER(?{f.var} {f.op} {rhs})"


_DECIMAL_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _lexical(term: Term) -> str:
    if isinstance(term, Literal):
        return term.lexical
    if isinstance(term, IriRef):
        return term.value
    return term.label


def _as_decimal(text: str) -> Decimal | None:
    if _DECIMAL_RE.match(text.strip()):
        return Decimal(text.strip())
    return None


def compare_terms(op: str, left: Term, right: Term) -> bool:
    """Filter comparison: numeric when both sides parse as decimal, else
    codepoint-wise comparison of the lexical forms."""
    ltext, rtext = _lexical(left), _lexical(right)
    lnum, rnum = _as_decimal(ltext), _as_decimal(rtext)
    lval, rval = (lnum, rnum) if lnum is not None and rnum is not None else (ltext, rtext)
    if op == "=":
        return lval == rval
    if op == "!=":
        return lval != rval
    if op == "<":
        return lval < rval
    if op == "<=":
        return lval <= rval
    if op == ">":
        return lval > rval
    if op == ">=":
        return lval >= rval
    raise ValueError(f"unknown comparison operator {op!r}")


def _eval_filter(f: FilterExpr, binding: dict[str, Term]) -> bool:
    if isinstance(f, RegexFilter):
        flags = re.IGNORECASE if f.ignore_case else 0
        return re.search(f.pattern, _lexical(binding[f.var]), flags) is not None
    rhs = binding[f.rhs.name] if isinstance(f.rhs, Variable) else f.rhs
    return compare_terms(f.op, binding[f.var], rhs)


def _concreteness(p: TriplePattern) -> int:
    return sum(
        0 if (pos is ANY or isinstance(pos, Variable)) else 1 for pos in p.positions()
    )


def _projection_vars(q: SelectQuery) -> list[str]:
    if q.projection is not None:
        return list(q.projection)
    seen: list[str] = []
    for p in q.patterns:
        for pos in p.positions():
            if isinstance(pos, Variable) and pos.name not in seen:
                seen.append(pos.name)
    return seen


def evaluate(q: SelectQuery, ctx, principal: str | None = None) -> ResultSet:
    """Evaluate against any Context supporting metadata matches.

    Patterns are joined in descending concreteness order (an estimate of
    selectivity); the result is order-invariant. Rows are sorted, then
    DISTINCT/OFFSET/LIMIT are applied.
    """
    order = sorted(range(len(q.patterns)), key=lambda i: -_concreteness(q.patterns[i]))
    bindings: list[dict[str, Term]] = [{}]
    for idx in order:
        pattern = q.patterns[idx]
        extended: list[dict[str, Term]] = []
        for b in bindings:
            bound = substitute_pattern(pattern, b)
            if bound is None:  # bound term illegal for its position: no rows
                continue
            op = MetadataMatchOp(bound)
            op.principal = principal
            ctx.perform(op)
            if op.failed:
                raise QueryEvaluationError(op.failure_reason or "match failed")
            for t in op.results:
                extended.append(extend_binding(b, bound, t))
        bindings = extended
        if not bindings:
            break
    rows = [b for b in bindings if all(_eval_filter(f, b) for f in q.filters)]
    proj = _projection_vars(q)
    tuples = [tuple(b[v] for v in proj) for b in rows]
    tuples.sort(key=lambda row: tuple(term_text(t) for t in row))
    if q.distinct:
        deduped = []
        prev = object()
        for row in tuples:
            if row != prev:
                deduped.append(row)
                prev = row
        tuples = deduped
    start = q.offset or 0
    end = None if q.limit is None else start + q.limit
    return ResultSet(proj, [dict(zip(proj, row)) for row in tuples[start:end]])


def evaluate_graph(q: SelectQuery, g: Graph) -> ResultSet:
    """Evaluate directly over an in-memory graph (no Context involved)."""
    from knowspace.contexts import MemoryContext

    return evaluate(q, MemoryContext(g))

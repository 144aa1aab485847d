"""Hierarchical access control as a wrapper Context.

ACEs are ordinary metadata triples (resource, acl#reader|acl#writer,
"principal") and containment edges (child, acl#partOf, parent) must form a
strict hierarchy: at most one parent per node, no cycles. The effective ACE
set for a resource comes from the nearest node on its ancestor chain that
carries any explicit ACEs; farther ancestors are ignored. No applicable ACE
means no access.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable

from knowspace import vocab
from knowspace.contexts import Context
from knowspace.operations import (
    BlobDeleteOp,
    BlobReadOp,
    BlobWriteOp,
    IterateOp,
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
    Term,
    Triple,
    TriplePattern,
)


class Permission(enum.Enum):
    READ = "read"
    WRITE = "write"


@dataclass(frozen=True)
class AclEntry:
    resource: IriRef
    principal: str
    permission: Permission


class HierarchyViolation(ValueError):
    """The configured part-of predicate does not form a strict hierarchy."""

    def __init__(self, node: Term, detail: str) -> None:
        super().__init__(f"strict hierarchy violated at {node}: {detail}")
        self.node = node


def _parents(g: Graph, node: Term, predicate: IriRef) -> list[Term]:
    if not isinstance(node, (IriRef, BlankNode)):
        return []
    return sorted(
        (t.object for t in g.match(TriplePattern(node, predicate, ANY))),
        key=repr,
    )


def validate_hierarchy(g: Graph, predicate: IriRef) -> None:
    """Raise HierarchyViolation on any multi-parent node or cycle."""
    parent_of: dict[Term, Term] = {}
    for t in g.match(TriplePattern(ANY, predicate, ANY)):
        if t.subject in parent_of and parent_of[t.subject] != t.object:
            raise HierarchyViolation(t.subject, "multiple parents")
        parent_of[t.subject] = t.object
    for start in parent_of:
        seen = {start}
        node = start
        while node in parent_of:
            node = parent_of[node]
            if node in seen:
                raise HierarchyViolation(node, "cycle")
            seen.add(node)


def _own_aces(g: Graph, resource: Term, reader: IriRef, writer: IriRef) -> set[AclEntry]:
    entries: set[AclEntry] = set()
    if not isinstance(resource, IriRef):
        return entries
    for predicate, permission in ((reader, Permission.READ), (writer, Permission.WRITE)):
        for t in g.match(TriplePattern(resource, predicate, ANY)):
            if isinstance(t.object, Literal):
                entries.add(AclEntry(resource, t.object.lexical, permission))
    return entries


def effective_aces(
    resource: IriRef,
    store: Graph | Iterable[Triple],
    *,
    hierarchy_predicate: IriRef = vocab.ACL_PART_OF,
    reader_predicate: IriRef = vocab.ACL_READER,
    writer_predicate: IriRef = vocab.ACL_WRITER,
) -> frozenset[AclEntry]:
    """Walk up the parent chain; the nearest node with any explicit ACEs
    contributes its full set, overriding everything farther up."""
    g = store if isinstance(store, Graph) else Graph(store)
    node: Term = resource
    seen: set[Term] = set()
    while True:
        if node in seen:
            raise HierarchyViolation(node, "cycle")
        seen.add(node)
        own = _own_aces(g, node, reader_predicate, writer_predicate)
        if own:
            return frozenset(own)
        parents = _parents(g, node, hierarchy_predicate)
        if not parents:
            return frozenset()
        if len(parents) > 1:
            raise HierarchyViolation(node, "multiple parents")
        node = parents[0]


class AclContext(Context):
    """Enforces inherited ACEs around an inner Context.

    Matches and other reads silently drop triples whose subject the principal
    cannot READ; writes fail loudly on the first subject the principal cannot
    WRITE. WRITE implies READ. Resources wholly outside the hierarchy are
    denied by default; orphans_readable grants READ on resources with neither
    own ACEs nor a parent.
    """

    def __init__(
        self,
        inner: Context,
        *,
        hierarchy_predicate: IriRef = vocab.ACL_PART_OF,
        reader_predicate: IriRef = vocab.ACL_READER,
        writer_predicate: IriRef = vocab.ACL_WRITER,
        principal_extractor: Callable[[Operation], str | None] | None = None,
        orphans_readable: bool = False,
    ) -> None:
        self.inner = inner
        self.hierarchy_predicate = hierarchy_predicate
        self.reader_predicate = reader_predicate
        self.writer_predicate = writer_predicate
        self.principal_extractor = principal_extractor or (lambda op: op.principal)
        self.orphans_readable = orphans_readable

    def _snapshot(self) -> Graph:
        scan = self.inner.perform(MetadataMatchOp(MATCH_ALL))
        if scan.failed:
            raise RuntimeError(f"cannot read policy statements: {scan.failure_reason}")
        return Graph(scan.results)

    def _effective(self, snapshot: Graph, resource: Term) -> frozenset[AclEntry]:
        if not isinstance(resource, IriRef):
            return frozenset()
        return effective_aces(
            resource,
            snapshot,
            hierarchy_predicate=self.hierarchy_predicate,
            reader_predicate=self.reader_predicate,
            writer_predicate=self.writer_predicate,
        )

    def _is_orphan(self, snapshot: Graph, resource: Term) -> bool:
        if not isinstance(resource, IriRef):
            return True
        return not snapshot.match(TriplePattern(resource, self.hierarchy_predicate, ANY))

    def _can_read(self, snapshot: Graph, principal: str | None, resource: Term, cache: dict) -> bool:
        if resource in cache:
            return cache[resource]
        entries = self._effective(snapshot, resource)
        allowed = any(e.principal == principal for e in entries)
        if not entries and self.orphans_readable and self._is_orphan(snapshot, resource):
            allowed = True
        cache[resource] = allowed
        return allowed

    def _can_write(self, snapshot: Graph, principal: str | None, resource: Term) -> bool:
        entries = self._effective(snapshot, resource)
        return any(
            e.principal == principal and e.permission is Permission.WRITE for e in entries
        )

    def _perform(self, op: Operation) -> None:
        principal = self.principal_extractor(op)
        try:
            snapshot = self._snapshot()
            validate_hierarchy(snapshot, self.hierarchy_predicate)
        except HierarchyViolation as e:
            op.fail(str(e))
            return
        read_cache: dict = {}
        if isinstance(op, MetadataWriteOp):
            for t in sorted(op.assertions | op.retractions, key=repr):
                if not self._can_write(snapshot, principal, t.subject):
                    op.fail(f"forbidden: {t.subject}")
                    return
            self.inner.perform(op)
        elif isinstance(op, MetadataMatchOp):
            sub = self.inner.perform(op.fresh())
            if sub.failed:
                op.fail(sub.failure_reason or "failed")
                return
            op.succeed(
                t for t in sub.results
                if self._can_read(snapshot, principal, t.subject, read_cache)
            )
        elif isinstance(op, IterateOp):
            sub = self.inner.perform(op.fresh())
            if sub.failed:
                op.fail(sub.failure_reason or "failed")
                return
            op.succeed(
                t for t in sub.stream()
                if self._can_read(snapshot, principal, t.subject, read_cache)
            )
        elif isinstance(op, TextSearchOp):
            sub = self.inner.perform(op.fresh())
            if sub.failed:
                op.fail(sub.failure_reason or "failed")
                return
            op.succeed(
                uri for uri in sub.results
                if self._can_read(snapshot, principal, uri, read_cache)
            )
        elif isinstance(op, BlobReadOp):
            if not self._can_read(snapshot, principal, op.uri, read_cache):
                op.fail(f"forbidden: {op.uri}")
                return
            self.inner.perform(op)
        elif isinstance(op, (BlobWriteOp, BlobDeleteOp)):
            if not self._can_write(snapshot, principal, op.uri):
                op.fail(f"forbidden: {op.uri}")
                return
            self.inner.perform(op)
        else:
            self.inner.perform(op)

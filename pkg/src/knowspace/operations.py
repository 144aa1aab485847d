"""Kernel operation objects: stateful requests that Contexts perform.

An operation starts PENDING and is mutated exactly once to SUCCEEDED or
FAILED by the Context performing it. Completing a terminal operation is a
programming bug and raises OperationStateError rather than being masked.
"""

from __future__ import annotations

import enum
from typing import Iterable, Iterator

from knowspace.rdf import IriRef, Triple, TriplePattern


class OperationStatus(enum.Enum):
    PENDING = "pending"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


class OperationStateError(RuntimeError):
    """An operation was completed twice or used while in the wrong state."""


#: Failure reason used by Contexts that have no handler for an operation
#: kind, so composite Contexts can recognize and route around it.
UNSUPPORTED = "unsupported operation"

#: Failure reason for reads of absent blobs.
NOT_FOUND = "not found"


class Operation:
    """Base class for all kernel and extended operations."""

    def __init__(self) -> None:
        self.status = OperationStatus.PENDING
        self.failure_reason: str | None = None
        #: identity attached by the protocol/CLI layer, consumed by AclContext
        self.principal: str | None = None

    @property
    def is_pending(self) -> bool:
        return self.status is OperationStatus.PENDING

    @property
    def succeeded(self) -> bool:
        return self.status is OperationStatus.SUCCEEDED

    @property
    def failed(self) -> bool:
        return self.status is OperationStatus.FAILED

    def _require_pending(self) -> None:
        if not self.is_pending:
            raise OperationStateError(
                f"{type(self).__name__} is already terminal ({self.status.value})"
            )

    def succeed(self) -> None:
        self._require_pending()
        self.status = OperationStatus.SUCCEEDED

    def fail(self, reason: str) -> None:
        self._require_pending()
        self.status = OperationStatus.FAILED
        self.failure_reason = reason

    @property
    def unsupported(self) -> bool:
        return self.failed and self.failure_reason == UNSUPPORTED

    def fresh(self) -> "Operation":
        """A new PENDING operation with the same inputs.

        Composite Contexts use this to hand each child its own copy, since an
        operation object is single-use.
        """
        raise NotImplementedError

    def _stamp(self, op: "Operation") -> "Operation":
        op.principal = self.principal
        return op

    def __repr__(self) -> str:
        detail = f" reason={self.failure_reason!r}" if self.failed else ""
        return f"<{type(self).__name__} {self.status.value}{detail}>"


class MetadataWriteOp(Operation):
    """Assert and retract RDF statements; retractions apply first."""

    def __init__(self, assertions: Iterable[Triple] = (), retractions: Iterable[Triple] = ()) -> None:
        super().__init__()
        self.assertions = frozenset(assertions)
        self.retractions = frozenset(retractions)
        if self.assertions & self.retractions:
            raise ValueError("assertions and retractions must be disjoint")

    def fresh(self) -> "MetadataWriteOp":
        return self._stamp(MetadataWriteOp(self.assertions, self.retractions))


class MetadataMatchOp(Operation):
    """Match a single triple pattern; results populate on success.

    include_derived=False asks inference wrappers to answer from stored
    statements only (the protocol's MGET default).
    """

    def __init__(self, pattern: TriplePattern, include_derived: bool = True) -> None:
        super().__init__()
        self.pattern = pattern
        self.include_derived = include_derived
        self.results: frozenset[Triple] = frozenset()

    def succeed(self, results: Iterable[Triple] = ()) -> None:  # type: ignore[override]
        self._require_pending()
        self.results = frozenset(results)
        self.status = OperationStatus.SUCCEEDED

    def fresh(self) -> "MetadataMatchOp":
        return self._stamp(MetadataMatchOp(self.pattern, self.include_derived))


class BlobWriteOp(Operation):
    """Store bytes under an IRI, replacing any existing content."""

    def __init__(self, uri: IriRef, data: bytes, declared_type: str | None = None) -> None:
        super().__init__()
        self.uri = uri
        self.data = bytes(data)
        self.declared_type = declared_type

    def fresh(self) -> "BlobWriteOp":
        return self._stamp(BlobWriteOp(self.uri, self.data, self.declared_type))


class BlobReadOp(Operation):
    """Read the bytes stored under an IRI; output set only on success."""

    def __init__(self, uri: IriRef) -> None:
        super().__init__()
        self.uri = uri
        self.data: bytes | None = None
        self.declared_type: str | None = None

    def succeed(self, data: bytes, declared_type: str | None = None) -> None:  # type: ignore[override]
        self._require_pending()
        self.data = bytes(data)
        self.declared_type = declared_type
        self.status = OperationStatus.SUCCEEDED

    def fresh(self) -> "BlobReadOp":
        return self._stamp(BlobReadOp(self.uri))


class BlobDeleteOp(Operation):
    """Delete the bytes stored under an IRI; deleting an absent blob is a no-op."""

    def __init__(self, uri: IriRef) -> None:
        super().__init__()
        self.uri = uri

    def fresh(self) -> "BlobDeleteOp":
        return self._stamp(BlobDeleteOp(self.uri))


class IterateOp(Operation):
    """Pull every stored statement exactly once (stored only, never derived)."""

    def __init__(self) -> None:
        super().__init__()
        self._triples: tuple[Triple, ...] = ()

    def succeed(self, triples: Iterable[Triple] = ()) -> None:  # type: ignore[override]
        self._require_pending()
        self._triples = tuple(triples)
        self.status = OperationStatus.SUCCEEDED

    def stream(self) -> Iterator[Triple]:
        if not self.succeeded:
            raise OperationStateError("iterate op has no results until SUCCEEDED")
        return iter(self._triples)

    def fresh(self) -> "IterateOp":
        return self._stamp(IterateOp())


class TextSearchOp(Operation):
    """Extended operation: find subjects whose literals contain every term."""

    def __init__(self, terms: Iterable[str]) -> None:
        super().__init__()
        self.terms = tuple(terms)
        if not self.terms or any(not t for t in self.terms):
            raise ValueError("search terms must be a non-empty list of non-empty strings")
        self.results: frozenset[IriRef] = frozenset()

    def succeed(self, results: Iterable[IriRef] = ()) -> None:  # type: ignore[override]
        self._require_pending()
        self.results = frozenset(results)
        self.status = OperationStatus.SUCCEEDED

    def fresh(self) -> "TextSearchOp":
        return self._stamp(TextSearchOp(self.terms))

"""Contexts: the performers of operations, concrete and composite.

A Context takes exclusive ownership of a pending operation for the duration
of perform() and always leaves it terminal. Contexts never alter an
operation's inputs, only its status and results. Operation kinds a Context
cannot handle fail with the distinguishable UNSUPPORTED reason so composite
Contexts can route around them.
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
from pathlib import Path
from typing import Iterable, Sequence

from knowspace.operations import (
    NOT_FOUND,
    UNSUPPORTED,
    BlobDeleteOp,
    BlobReadOp,
    BlobWriteOp,
    IterateOp,
    MetadataMatchOp,
    MetadataWriteOp,
    Operation,
    OperationStateError,
    TextSearchOp,
)
from knowspace.rdf import (
    MATCH_ALL,
    Graph,
    IriRef,
    Triple,
    parse_ntriples_line,
    triple_text,
)

logger = logging.getLogger(__name__)


class Context:
    """Abstract performer of operations."""

    #: operation kinds this context handles natively
    handles: frozenset[type] = frozenset()

    def perform(self, op: Operation) -> Operation:
        """Perform op, leaving it terminal; returns op for chaining."""
        if not op.is_pending:
            raise OperationStateError(
                f"operation is single-use; got {op.status.value} {type(op).__name__}"
            )
        try:
            self._perform(op)
        except OperationStateError:
            raise
        except Exception as e:  # noqa: BLE001 - contract: op always ends terminal
            if op.is_pending:
                op.fail(f"{type(e).__name__}: {e}")
            else:
                raise
        if op.is_pending:
            op.fail(UNSUPPORTED)
        return op

    def _perform(self, op: Operation) -> None:
        raise NotImplementedError


def adopt_outcome(parent: Operation, child: Operation) -> None:
    """Copy a completed child operation's outcome onto a like-typed parent."""
    if child.failed:
        parent.fail(child.failure_reason or "failed")
    elif isinstance(child, MetadataMatchOp):
        parent.succeed(child.results)  # type: ignore[call-arg]
    elif isinstance(child, BlobReadOp):
        parent.succeed(child.data or b"", child.declared_type)  # type: ignore[call-arg]
    elif isinstance(child, IterateOp):
        parent.succeed(child.stream())  # type: ignore[call-arg]
    elif isinstance(child, TextSearchOp):
        parent.succeed(child.results)  # type: ignore[call-arg]
    else:
        parent.succeed()


class MemoryContext(Context):
    """Reference in-memory store for metadata and blobs."""

    handles = frozenset(
        {MetadataWriteOp, MetadataMatchOp, BlobWriteOp, BlobReadOp, BlobDeleteOp, IterateOp}
    )

    def __init__(self, triples: Iterable[Triple] = ()) -> None:
        self._graph = Graph(triples)
        self._blobs: dict[IriRef, tuple[bytes, str | None]] = {}
        self._lock = threading.RLock()

    def _perform(self, op: Operation) -> None:
        if isinstance(op, MetadataWriteOp):
            with self._lock:
                for t in op.retractions:
                    self._graph.discard(t)
                for t in op.assertions:
                    self._graph.add(t)
            op.succeed()
        elif isinstance(op, MetadataMatchOp):
            with self._lock:
                results = self._graph.match(op.pattern)
            op.succeed(results)
        elif isinstance(op, IterateOp):
            with self._lock:
                snapshot = tuple(self._graph)
            op.succeed(snapshot)
        elif isinstance(op, BlobWriteOp):
            with self._lock:
                self._blobs[op.uri] = (op.data, op.declared_type)
            op.succeed()
        elif isinstance(op, BlobReadOp):
            with self._lock:
                entry = self._blobs.get(op.uri)
            if entry is None:
                op.fail(NOT_FOUND)
            else:
                op.succeed(entry[0], entry[1])
        elif isinstance(op, BlobDeleteOp):
            with self._lock:
                self._blobs.pop(op.uri, None)
            op.succeed()


class FileContext(Context):
    """Durable store: append-only statement log plus a blob directory.

    Layout under root: ``statements.log`` holds one line per applied change,
    ``A <triple> .`` for asserts and ``R <triple> .`` for retracts; blobs live
    in ``blobs/`` named by the lowercase hex SHA-256 of the IRI string, with a
    ``.type`` sidecar holding the declared media type. Reopening the directory
    replays the log and yields an equivalent store.
    """

    handles = MemoryContext.handles
    LOG_NAME = "statements.log"
    BLOBS_DIR = "blobs"
    TYPE_SUFFIX = ".type"

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._log_path = self.root / self.LOG_NAME
        self._blob_dir = self.root / self.BLOBS_DIR
        self._blob_dir.mkdir(exist_ok=True)
        self._graph = Graph()
        self._lock = threading.RLock()
        self._replay()

    def _replay(self) -> None:
        if not self._log_path.exists():
            return
        with open(self._log_path, encoding="utf-8") as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.rstrip("\n")
                if not line:
                    continue
                tag, payload = line[:2], line[2:]
                triple = parse_ntriples_line(payload, lineno)
                if tag == "A ":
                    self._graph.add(triple)
                elif tag == "R ":
                    self._graph.discard(triple)
                else:
                    raise ValueError(f"{self._log_path}:{lineno}: unknown log tag {tag!r}")

    def _append(self, lines: list[str]) -> None:
        with open(self._log_path, "a", encoding="utf-8") as f:
            f.writelines(lines)
            f.flush()
            os.fsync(f.fileno())

    def _blob_path(self, uri: IriRef) -> Path:
        digest = hashlib.sha256(uri.value.encode("utf-8")).hexdigest()
        return self._blob_dir / digest

    def compact(self) -> None:
        """Rewrite the log as plain assertions of the current graph."""
        with self._lock:
            tmp = self._log_path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as f:
                for t in sorted(self._graph, key=triple_text):
                    f.write(f"A {triple_text(t)}\n")
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, self._log_path)

    def _perform(self, op: Operation) -> None:
        if isinstance(op, MetadataWriteOp):
            with self._lock:
                lines = [f"R {triple_text(t)}\n" for t in sorted(op.retractions, key=triple_text)]
                lines += [f"A {triple_text(t)}\n" for t in sorted(op.assertions, key=triple_text)]
                self._append(lines)
                for t in op.retractions:
                    self._graph.discard(t)
                for t in op.assertions:
                    self._graph.add(t)
            op.succeed()
        elif isinstance(op, MetadataMatchOp):
            with self._lock:
                results = self._graph.match(op.pattern)
            op.succeed(results)
        elif isinstance(op, IterateOp):
            with self._lock:
                snapshot = tuple(self._graph)
            op.succeed(snapshot)
        elif isinstance(op, BlobWriteOp):
            with self._lock:
                path = self._blob_path(op.uri)
                tmp = path.with_name(path.name + ".tmp")
                with open(tmp, "wb") as f:
                    f.write(op.data)
                    f.flush()
                    os.fsync(f.fileno())
                os.replace(tmp, path)
                side = path.with_name(path.name + self.TYPE_SUFFIX)
                if op.declared_type is None:
                    side.unlink(missing_ok=True)
                else:
                    side.write_text(op.declared_type, encoding="utf-8")
            op.succeed()
        elif isinstance(op, BlobReadOp):
            with self._lock:
                path = self._blob_path(op.uri)
                if not path.exists():
                    op.fail(NOT_FOUND)
                    return
                data = path.read_bytes()
                side = path.with_name(path.name + self.TYPE_SUFFIX)
                declared = side.read_text(encoding="utf-8") if side.exists() else None
            op.succeed(data, declared)
        elif isinstance(op, BlobDeleteOp):
            with self._lock:
                path = self._blob_path(op.uri)
                path.unlink(missing_ok=True)
                path.with_name(path.name + self.TYPE_SUFFIX).unlink(missing_ok=True)
            op.succeed()


class UnionContext(Context):
    """Aggregates children: reads combine results, writes go to the first child."""

    def __init__(self, children: Sequence[Context]) -> None:
        if not children:
            raise ValueError("UnionContext requires at least one child")
        self.children = list(children)

    def _perform(self, op: Operation) -> None:
        if isinstance(op, (MetadataWriteOp, BlobWriteOp, BlobDeleteOp)):
            self.children[0].perform(op)
        elif isinstance(op, MetadataMatchOp):
            results: set[Triple] = set()
            failures: list[str] = []
            for child in self.children:
                sub = child.perform(op.fresh())
                if sub.succeeded:
                    results |= sub.results  # type: ignore[attr-defined]
                else:
                    failures.append(sub.failure_reason or "failed")
            if len(failures) == len(self.children):
                op.fail("; ".join(failures))
            else:
                op.succeed(results)
        elif isinstance(op, TextSearchOp):
            found: set[IriRef] = set()
            failures = []
            for child in self.children:
                sub = child.perform(op.fresh())
                if sub.succeeded:
                    found |= sub.results  # type: ignore[attr-defined]
                else:
                    failures.append(sub.failure_reason or "failed")
            if len(failures) == len(self.children):
                op.fail("; ".join(failures))
            else:
                op.succeed(found)
        elif isinstance(op, IterateOp):
            seen: set[Triple] = set()
            merged: list[Triple] = []
            failures = []
            for child in self.children:
                sub = child.perform(op.fresh())
                if sub.failed:
                    failures.append(sub.failure_reason or "failed")
                    continue
                for t in sub.stream():  # type: ignore[attr-defined]
                    if t not in seen:
                        seen.add(t)
                        merged.append(t)
            if len(failures) == len(self.children):
                op.fail("; ".join(failures))
            else:
                op.succeed(merged)
        elif isinstance(op, BlobReadOp):
            last_reason = NOT_FOUND
            for child in self.children:
                sub = child.perform(op.fresh())
                if sub.succeeded:
                    adopt_outcome(op, sub)
                    return
                last_reason = sub.failure_reason or "failed"
            op.fail(last_reason)


class MirrorContext(Context):
    """Writes go to every child (attempted even after a failure); reads come
    from the first child that succeeds. Partial write failure is reported
    without rollback; diverged children are not repaired here."""

    def __init__(self, children: Sequence[Context]) -> None:
        if not children:
            raise ValueError("MirrorContext requires at least one child")
        self.children = list(children)

    def _perform(self, op: Operation) -> None:
        if isinstance(op, (MetadataWriteOp, BlobWriteOp, BlobDeleteOp)):
            failures: list[str] = []
            for i, child in enumerate(self.children):
                sub = child.perform(op.fresh())
                if sub.failed:
                    failures.append(f"child {i}: {sub.failure_reason}")
            if failures:
                op.fail("write failed on " + "; ".join(failures))
            else:
                op.succeed()
        else:
            self._first_success(op)

    def _first_success(self, op: Operation) -> None:
        last: Operation | None = None
        for child in self.children:
            sub = child.perform(op.fresh())
            if sub.succeeded:
                adopt_outcome(op, sub)
                return
            last = sub
        op.fail(last.failure_reason if last and last.failure_reason else "failed")


class FailoverContext(Context):
    """Tries children in order; the first SUCCEEDED outcome wins, FAILED
    results fall through. All children failing yields the last child's reason."""

    def __init__(self, children: Sequence[Context]) -> None:
        if not children:
            raise ValueError("FailoverContext requires at least one child")
        self.children = list(children)

    def _perform(self, op: Operation) -> None:
        last: Operation | None = None
        for child in self.children:
            sub = child.perform(op.fresh())
            if sub.succeeded:
                adopt_outcome(op, sub)
                return
            last = sub
        op.fail(last.failure_reason if last and last.failure_reason else "failed")


class DecomposerContext(Context):
    """Answers matches for a source that only supports iteration by loading
    its statements into a more capable delegate and querying there.

    The source is re-iterated only when bump_epoch() is called, never
    implicitly.
    """

    def __init__(self, source: Context, delegate: Context) -> None:
        self.source = source
        self.delegate = delegate
        self._epoch = 0
        self._loaded_epoch: int | None = None
        self._lock = threading.Lock()

    def bump_epoch(self) -> None:
        """Mark the source stale; the next match reloads the delegate."""
        with self._lock:
            self._epoch += 1

    def _load(self) -> str | None:
        """(Re)populate the delegate from the source; returns a failure reason."""
        scan = self.source.perform(IterateOp())
        if scan.failed:
            return f"source iteration failed: {scan.failure_reason}"
        triples = set(scan.stream())  # type: ignore[attr-defined]
        current = self.delegate.perform(MetadataMatchOp(MATCH_ALL))
        if current.failed:
            return f"delegate match failed: {current.failure_reason}"
        clear = self.delegate.perform(MetadataWriteOp(retractions=current.results))
        if clear.failed:
            return f"delegate clear failed: {clear.failure_reason}"
        load = self.delegate.perform(MetadataWriteOp(assertions=triples))
        if load.failed:
            return f"delegate write failed: {load.failure_reason}"
        return None

    def _perform(self, op: Operation) -> None:
        if not isinstance(op, MetadataMatchOp):
            return  # falls out as UNSUPPORTED
        with self._lock:
            if self._loaded_epoch != self._epoch:
                reason = self._load()
                if reason is not None:
                    op.fail(reason)
                    return
                self._loaded_epoch = self._epoch
        self.delegate.perform(op)


class LoggingContext(Context):
    """Pass-through wrapper that records each performed operation."""

    def __init__(self, inner: Context, log: logging.Logger | None = None) -> None:
        self.inner = inner
        self.log = log or logger

    def _perform(self, op: Operation) -> None:
        self.inner.perform(op)
        if op.failed:
            self.log.info("%s FAILED: %s", type(op).__name__, op.failure_reason)
        else:
            self.log.info("%s SUCCEEDED", type(op).__name__)

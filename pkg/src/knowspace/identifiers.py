"""Two-part persistent identifiers: a curator prefix plus a curator-
independent base id.

Identifiers sharing a base id denote the same thing no matter which curator
currently serves them; rebasing to a new curator preserves identity. Minting
is fully decentralized: a millisecond timestamp concatenated with fresh
random bits, base-36 encoded, with no registry involved.
"""

from __future__ import annotations

import re
import secrets
import time
from dataclasses import dataclass
from urllib.parse import urlsplit

_CURATOR_RE = re.compile(r"^[A-Za-z0-9.\-]+$")
_BASE_ID_RE = re.compile(r"^[a-z0-9]{8,}$")
_ALPHABET = "0123456789abcdefghijklmnopqrstuvwxyz"


class KnowledgeIdError(ValueError):
    """Malformed identifier string or component."""


@dataclass(frozen=True, slots=True)
class KnowledgeId:
    curator: str
    base_id: str

    def __post_init__(self) -> None:
        if not _CURATOR_RE.match(self.curator):
            raise KnowledgeIdError(
                "empty curator" if not self.curator else f"invalid curator: {self.curator!r}"
            )
        if not _BASE_ID_RE.match(self.base_id):
            raise KnowledgeIdError(
                f"invalid base id (lowercase alphanumerics, length >= 8): {self.base_id!r}"
            )

    def __str__(self) -> str:
        return f"kid:{self.curator}/{self.base_id}"


def _base36(value: int) -> str:
    if value == 0:
        return "0"
    digits = []
    while value:
        value, rem = divmod(value, 36)
        digits.append(_ALPHABET[rem])
    return "".join(reversed(digits))


def mint(curator: str, entropy_bits: int = 40) -> KnowledgeId:
    """Mint a new identifier without consulting any shared state.

    The base id encodes the current millisecond timestamp concatenated with
    entropy_bits of randomness, so isolated processes mint ids that are
    distinct with overwhelming probability.
    """
    if not _CURATOR_RE.match(curator):
        raise KnowledgeIdError(
            "empty curator" if not curator else f"invalid curator: {curator!r}"
        )
    if entropy_bits < 40:
        raise KnowledgeIdError("entropy_bits must be at least 40")
    stamp = time.time_ns() // 1_000_000
    value = (stamp << entropy_bits) | secrets.randbits(entropy_bits)
    return KnowledgeId(curator, _base36(value))


def parse(s: str) -> KnowledgeId:
    """Parse ``kid:<curator>/<baseId>`` or the HTTP-actionable
    ``http(s)://host[/prefix]/kid/<curator>/<baseId>`` form (host ignored)."""
    if s.startswith("kid:"):
        rest = s[len("kid:") :]
        curator, sep, base_id = rest.partition("/")
        if not sep:
            raise KnowledgeIdError(f"missing '/' between curator and base id: {s!r}")
        if not curator:
            raise KnowledgeIdError("empty curator")
        return KnowledgeId(curator, base_id)
    if s.startswith("http://") or s.startswith("https://"):
        path = urlsplit(s).path
        segments = [seg for seg in path.split("/") if seg]
        for i in range(len(segments) - 3, -1, -1):
            if segments[i] == "kid" and len(segments) - i == 3:
                return KnowledgeId(segments[i + 1], segments[i + 2])
        raise KnowledgeIdError(f"no /kid/<curator>/<baseId> path in {s!r}")
    raise KnowledgeIdError(f"not a kid: or http(s) identifier: {s!r}")


def equivalent(a: KnowledgeId, b: KnowledgeId) -> bool:
    """Identifiers are equivalent iff they share a base id; the curator is
    routing metadata, not identity."""
    return a.base_id == b.base_id


def rebase(k: KnowledgeId, new_curator: str) -> KnowledgeId:
    """Hand the identifier to a new curator, preserving equivalence."""
    return KnowledgeId(new_curator, k.base_id)

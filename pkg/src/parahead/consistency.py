"""Duplicate-name detection and shared-object metadata comparison.

Two interchangeable detectors are provided.  ``hash_check`` inserts every
record into a fixed-size chained hash table and compares the key string
against each slot occupant, the scheme in-library lookups use; with n
records and k slots it performs about n*n/2k string comparisons
(``model_hash_cost``).  ``sort_check`` instead orders the whole record list
once and groups equal keys from adjacent runs.  It sorts by a 64-bit key
digest, falling back to the key string only on digest ties, so the string
comparisons it must count stay proportional to the duplicates actually
present rather than to n log n.

Digest equality is never trusted for a positive result: payload equality is
always confirmed on the serialized bytes.  Digest inequality, which does
prove string inequality, is what both detectors use to skip hopeless
comparisons cheaply.

Both detectors must produce identical shared sets and conflicts for every
input; counters are exact and deterministic.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

from .records import decode_record, digest64

__all__ = [
    "NameRecord",
    "Conflict",
    "CheckReport",
    "Mismatch",
    "hash_check",
    "sort_check",
    "compare_shared",
    "model_hash_cost",
    "model_newformat_cost",
    "hash_slot",
    "make_name_records",
]


@dataclass(frozen=True)
class NameRecord:
    """One gathered definition: conflict checks run over lists of these."""

    full_name: str
    origin_rank: int
    payload_digest: int
    payload_ref: bytes

    @property
    def key(self) -> bytes:
        """Namespace key: kind tag byte followed by the full name."""
        return self.payload_ref[:1] + self.full_name.encode("utf-8")


@dataclass(frozen=True)
class Conflict:
    full_name: str
    ranks: tuple[int, ...]


@dataclass(frozen=True)
class CheckReport:
    """Outcome of a conflict check, with exact comparison counters."""

    shared_sets: tuple[tuple[NameRecord, ...], ...]
    conflicts: tuple[Conflict, ...]
    string_comparisons: int
    payload_comparisons: int


@dataclass(frozen=True)
class Mismatch:
    """First differing field between two same-named payloads."""

    field: str
    left: object
    right: object


def make_name_records(rank_record_lists) -> list[NameRecord]:
    """Flatten per-rank serialized records into check input, rank-major order."""
    out = []
    for rank, records in enumerate(rank_record_lists):
        for rec in records:
            _, full_name, _ = _cheap_name(rec)
            out.append(NameRecord(full_name, rank, digest64(rec), rec))
    return out


def _cheap_name(rec: bytes):
    # record layout: kind byte, u32 name length, name bytes
    n = int.from_bytes(rec[1:5], "big")
    return rec[0], rec[5 : 5 + n].decode("utf-8"), None


def _fmix32(h: int) -> int:
    # murmur3 finalizer: full avalanche so structured names spread evenly
    h ^= h >> 16
    h = (h * 0x85EBCA6B) & 0xFFFFFFFF
    h ^= h >> 13
    h = (h * 0xC2B2AE35) & 0xFFFFFFFF
    h ^= h >> 16
    return h


def hash_slot(key: bytes, k: int) -> int:
    """Slot index for a namespace key in a table of size k.

    CRC-32 alone is linear, so sequentially numbered names collide in
    systematic patterns on power-of-two table sizes; the finalizer breaks
    that structure (dispersion is validated against the uniform model).
    """
    return _fmix32(zlib.crc32(key)) % k


def hash_check(records, k: int) -> CheckReport:
    """Insert every record into a k-slot chained table, comparing on slot hits.

    Each insertion compares the record's key against the slot's occupants in
    arrival order until a match is found; every such comparison is counted.
    """
    if k < 1:
        raise ValueError("hash table needs at least one slot")
    table: list[list[int]] = [[] for _ in range(k)]
    groups: list[list[NameRecord]] = []
    group_keys: list[bytes] = []
    string_comparisons = 0
    for rec in records:
        key = rec.key
        chain = table[hash_slot(key, k)]
        for gi in chain:
            string_comparisons += 1
            if group_keys[gi] == key:
                groups[gi].append(rec)
                break
        else:
            chain.append(len(groups))
            group_keys.append(key)
            groups.append([rec])
    shared, conflicts, payload_comparisons = _resolve_groups(groups)
    return CheckReport(shared, conflicts, string_comparisons, payload_comparisons)


def sort_check(records) -> CheckReport:
    """Order records once, then group equal keys from adjacent digest runs."""
    items = list(records)
    digests = [zlib.crc32(rec.key) for rec in items]
    order = sorted(range(len(items)), key=digests.__getitem__)
    string_comparisons = 0
    groups: list[list[NameRecord]] = []
    i = 0
    n = len(order)
    while i < n:
        j = i + 1
        while j < n and digests[order[j]] == digests[order[i]]:
            j += 1
        if j == i + 1:
            groups.append([items[order[i]]])
        else:
            # digest tie: confirm key equality by string comparison
            run_groups: list[list[NameRecord]] = []
            run_keys: list[bytes] = []
            for idx in order[i:j]:
                rec = items[idx]
                key = rec.key
                for gi, existing in enumerate(run_keys):
                    string_comparisons += 1
                    if existing == key:
                        run_groups[gi].append(rec)
                        break
                else:
                    run_keys.append(key)
                    run_groups.append([rec])
            groups.extend(run_groups)
        i = j
    shared, conflicts, payload_comparisons = _resolve_groups(groups)
    return CheckReport(shared, conflicts, string_comparisons, payload_comparisons)


def _resolve_groups(groups):
    """Classify equal-name groups as shared sets or conflicts.

    Within a group, every record is compared against the first occurrence
    (pair-wise against the reference); each such determination counts as one
    payload comparison.  Digest inequality proves byte inequality; digest
    equality is confirmed on the bytes.
    """
    shared: list[tuple[NameRecord, ...]] = []
    conflicts: list[Conflict] = []
    payload_comparisons = 0
    for group in groups:
        if len(group) < 2:
            continue
        ref = group[0]
        clean = True
        for other in group[1:]:
            payload_comparisons += 1
            if other.payload_digest == ref.payload_digest:
                if other.payload_ref == ref.payload_ref:
                    continue
            clean = False
        if clean:
            shared.append(tuple(group))
        else:
            ranks = tuple(sorted({r.origin_rank for r in group}))
            conflicts.append(Conflict(group[0].full_name, ranks))
    return tuple(shared), tuple(conflicts), payload_comparisons


_FIELD_ORDER = ("kind", "type_tag", "length", "dim_names", "attributes", "values")


def compare_shared(a: bytes, b: bytes) -> Mismatch | None:
    """Byte-exact payload comparison; on mismatch, report the first differing field."""
    if a == b:
        return None
    kind_a, _, payload_a = decode_record(a)
    kind_b, _, payload_b = decode_record(b)
    if kind_a != kind_b:
        return Mismatch("kind", kind_a, kind_b)
    fields_a = _payload_fields(payload_a)
    fields_b = _payload_fields(payload_b)
    for name in _FIELD_ORDER:
        if name in fields_a and fields_a[name] != fields_b[name]:
            return Mismatch(name, fields_a[name], fields_b[name])
    # bytes differ but decoded fields agree: name is the remaining field
    return Mismatch("full_name", a, b)


def _payload_fields(payload) -> dict:
    out = {}
    for name in ("type_tag", "length", "dim_names", "attributes", "values"):
        if hasattr(payload, name):
            out[name] = getattr(payload, name)
    return out


def model_hash_cost(n: int, k: int) -> float:
    """Expected string comparisons inserting n unique names into a k-slot table."""
    if k < 1:
        raise ValueError("hash table needs at least one slot")
    return n * (n / (2 * k))


def model_newformat_cost(n: int, p: int, k: int) -> float:
    """Expected per-rank comparisons with the partitioned header.

    Each rank inserts its n/p names into its own k-slot table, plus the
    p block names into a table of the same size.
    """
    if p < 1:
        raise ValueError("need at least one rank")
    if k < 1:
        raise ValueError("hash table needs at least one slot")
    return (n / p) * (n / (2 * k * p)) + p * (p / (2 * k))

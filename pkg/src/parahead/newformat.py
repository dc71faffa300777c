"""Partitioned header codec: an index table plus independent metadata blocks.

File layout::

    file   = index_table  block*            (blocks at the offsets the index declares)
    index  = 'C' 'D' 'H' 0x01 | u64 entry count | u64 header_reserve | entry*
    entry  = u64 path length | path bytes pad4 | u64 offset | u64 size
             | u64 n_dims | u64 n_vars | u64 n_atts
    block  = u64 path length | path bytes pad4 | dim_list gatt_list var_list

Block object lists reuse the classic grammar with 64-bit counts (version 5
widths).  Entries are kept sorted by path so a table laid out from the same
block set is byte-identical no matter which rank produced it.  The reserved
root block uses the empty path; objects named without a path prefix land
there.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .classic import Header, decode_header_lists, encode_header_lists, encoded_size
from .errors import (
    BadMagic,
    CorruptHeader,
    DuplicateName,
    OverlappingBlocks,
    Truncated,
    UnrepresentableValue,
    UnsortedIndex,
)

INDEX_MAGIC = b"CDH\x01"
DEFAULT_ALIGN = 4

_BLOCK_VERSION = 5  # block lists always use 64-bit counts
_ENTRY_FIXED = 5 * 8  # offset, size, n_dims, n_vars, n_atts


@dataclass(frozen=True)
class IndexEntry:
    """Directory record for one metadata block."""

    block_path: str
    offset: int
    size: int
    n_dims: int
    n_vars: int
    n_atts: int


@dataclass(frozen=True)
class IndexTable:
    """Front section of the file: entries sorted by path, plus the total reserve."""

    entries: tuple[IndexEntry, ...]
    header_reserve: int


@dataclass(frozen=True)
class MetadataBlock:
    """All objects under one path prefix; the unit of independent creation."""

    block_path: str
    content: Header


def _pad4(n: int) -> int:
    return (4 - n % 4) % 4


def _align_up(n: int, align: int) -> int:
    return (n + align - 1) // align * align


def validate_block_path(path: str) -> None:
    """Paths are printable ASCII without edge or doubled slashes; '' is the root."""
    if path == "":
        return
    for ch in path:
        if not (0x20 <= ord(ch) <= 0x7E):
            raise CorruptHeader(f"non-printable character in block path {path!r}")
    if path.startswith("/") or path.endswith("/") or "//" in path:
        raise CorruptHeader(f"malformed block path {path!r}")


def split_full_name(full_name: str) -> tuple[str, str]:
    """Split 'a/b/name' into block path 'a/b' and local name; no slash -> root block."""
    if "/" not in full_name:
        return "", full_name
    path, local = full_name.rsplit("/", 1)
    return path, local


def join_full_name(block_path: str, local: str) -> str:
    return f"{block_path}/{local}" if block_path else local


def _pack_path(path: str) -> bytes:
    raw = path.encode("ascii")
    return struct.pack(">Q", len(raw)) + raw + b"\x00" * _pad4(len(raw))


def _path_record_size(path: str) -> int:
    return 8 + len(path) + _pad4(len(path))


def index_table_encoded_size(paths) -> int:
    return len(INDEX_MAGIC) + 16 + sum(_path_record_size(p) + _ENTRY_FIXED for p in paths)


def _check_table(table: IndexTable) -> None:
    paths = [e.block_path for e in table.entries]
    for path in paths:
        validate_block_path(path)
    if len(set(paths)) != len(paths):
        raise DuplicateName("duplicate block path in index table")
    if paths != sorted(paths):
        raise UnsortedIndex("index entries not sorted by block path")
    regions = sorted((e.offset, e.offset + e.size, e.block_path) for e in table.entries)
    index_end = index_table_encoded_size(paths)
    for start, end, path in regions:
        if start < index_end:
            raise OverlappingBlocks(f"block {path!r} overlaps the index table")
    for (_, end_a, path_a), (start_b, _, path_b) in zip(regions, regions[1:]):
        if start_b < end_a:
            raise OverlappingBlocks(f"blocks {path_a!r} and {path_b!r} overlap")


def encode_index_table(table: IndexTable) -> bytes:
    """Serialize an index table; entries are emitted in path-sorted order."""
    ordered = tuple(sorted(table.entries, key=lambda e: e.block_path))
    table = IndexTable(ordered, table.header_reserve)
    _check_table(table)
    try:
        parts = [INDEX_MAGIC, struct.pack(">QQ", len(table.entries), table.header_reserve)]
        for e in table.entries:
            parts.append(_pack_path(e.block_path))
            parts.append(
                struct.pack(">QQQQQ", e.offset, e.size, e.n_dims, e.n_vars, e.n_atts)
            )
    except struct.error as exc:
        raise UnrepresentableValue(f"index field out of range: {exc}") from exc
    return b"".join(parts)


def decode_index_table(buf: bytes) -> IndexTable:
    """Decode and validate an index table; trailing (block) bytes are ignored."""
    table, _ = decode_index_table_prefix(buf)
    return table


def decode_index_table_prefix(buf: bytes) -> tuple[IndexTable, int]:
    """Decode the index table and report how many bytes it occupied."""
    if len(buf) < 4:
        raise Truncated("shorter than the magic")
    if buf[:4] != INDEX_MAGIC:
        raise BadMagic(f"not an index table: {buf[:4]!r}")
    pos = 4
    if len(buf) < pos + 16:
        raise Truncated("index table counts missing")
    count, header_reserve = struct.unpack_from(">QQ", buf, pos)
    pos += 16
    entries = []
    for _ in range(count):
        if len(buf) < pos + 8:
            raise Truncated("index entry path length missing")
        (path_len,) = struct.unpack_from(">Q", buf, pos)
        pos += 8
        padded = path_len + _pad4(path_len)
        if len(buf) < pos + padded + _ENTRY_FIXED:
            raise Truncated("index entry cut short")
        raw = buf[pos : pos + path_len]
        pad = buf[pos + path_len : pos + padded]
        if pad.strip(b"\x00"):
            raise CorruptHeader("non-zero block path padding")
        pos += padded
        fields = struct.unpack_from(">QQQQQ", buf, pos)
        pos += _ENTRY_FIXED
        entries.append(IndexEntry(raw.decode("ascii"), *fields))
    table = IndexTable(tuple(entries), header_reserve)
    _check_table(table)
    return table, pos


def block_encoded_size(block: MetadataBlock) -> int:
    return _path_record_size(block.block_path) + encoded_size(
        block.content, _BLOCK_VERSION
    ) - (4 + 8)  # lists only: drop magic + numrecs


def encode_block(block: MetadataBlock) -> bytes:
    """Encode one block: path record followed by the classic object lists."""
    validate_block_path(block.block_path)
    for dim in block.content.dims:
        if "/" in dim.name:
            raise CorruptHeader(f"block-local name {dim.name!r} contains '/'")
    for var in block.content.vars:
        if "/" in var.name:
            raise CorruptHeader(f"block-local name {var.name!r} contains '/'")
    return _pack_path(block.block_path) + encode_header_lists(
        block.content, _BLOCK_VERSION
    )


def decode_block(buf: bytes) -> MetadataBlock:
    if len(buf) < 8:
        raise Truncated("block path length missing")
    (path_len,) = struct.unpack_from(">Q", buf, 0)
    padded = path_len + _pad4(path_len)
    if len(buf) < 8 + padded:
        raise Truncated("block path cut short")
    raw = buf[8 : 8 + path_len]
    pad = buf[8 + path_len : 8 + padded]
    if pad.strip(b"\x00"):
        raise CorruptHeader("non-zero block path padding")
    path = raw.decode("ascii")
    validate_block_path(path)
    content, _ = decode_header_lists(buf, _BLOCK_VERSION, 8 + padded)
    return MetadataBlock(path, content)


@dataclass(frozen=True)
class BlockStats:
    """Size and object counts of a block, as exchanged before layout."""

    block_path: str
    size: int
    n_dims: int
    n_vars: int
    n_atts: int


def block_stats(block: MetadataBlock) -> BlockStats:
    return BlockStats(
        block.block_path,
        block_encoded_size(block),
        len(block.content.dims),
        len(block.content.vars),
        len(block.content.global_atts),
    )


def layout_from_stats(stats, align: int = DEFAULT_ALIGN) -> IndexTable:
    """Assign file offsets from (path, size, counts) alone; pure in the sorted set."""
    ordered = sorted(stats, key=lambda s: s.block_path)
    paths = [s.block_path for s in ordered]
    if len(set(paths)) != len(paths):
        raise DuplicateName("duplicate block path")
    cursor = _align_up(index_table_encoded_size(paths), align)
    entries = []
    for s in ordered:
        entries.append(
            IndexEntry(s.block_path, cursor, s.size, s.n_dims, s.n_vars, s.n_atts)
        )
        cursor = _align_up(cursor + s.size, align)
    return IndexTable(tuple(entries), cursor)


def layout_blocks(blocks, align: int = DEFAULT_ALIGN) -> IndexTable:
    """Compute the index table for a block set: offsets, sizes, and counts."""
    return layout_from_stats([block_stats(b) for b in blocks], align)


def assemble_image(blocks, align: int = DEFAULT_ALIGN) -> bytes:
    """Serialize a complete file image (index plus blocks) single-threaded."""
    table = layout_blocks(blocks, align)
    image = bytearray(table.header_reserve)
    index_bytes = encode_index_table(table)
    image[: len(index_bytes)] = index_bytes
    by_path = {b.block_path: b for b in blocks}
    for entry in table.entries:
        raw = encode_block(by_path[entry.block_path])
        if len(raw) != entry.size:
            raise CorruptHeader(
                f"block {entry.block_path!r} encoded to {len(raw)} bytes, "
                f"index says {entry.size}"
            )
        image[entry.offset : entry.offset + entry.size] = raw
    return bytes(image)


def decode_image(buf: bytes) -> tuple[IndexTable, dict[str, MetadataBlock]]:
    """Decode a full image and cross-check every entry against its block."""
    table = decode_index_table(buf)
    blocks: dict[str, MetadataBlock] = {}
    for entry in table.entries:
        if entry.offset + entry.size > len(buf):
            raise Truncated(f"block {entry.block_path!r} extends past the image")
        try:
            block = decode_block(buf[entry.offset : entry.offset + entry.size])
        except Exception as exc:
            raise type(exc)(f"block {entry.block_path!r}: {exc}") from exc
        if block.block_path != entry.block_path:
            raise CorruptHeader(
                f"index names {entry.block_path!r} but block says {block.block_path!r}"
            )
        counts = (
            len(block.content.dims),
            len(block.content.vars),
            len(block.content.global_atts),
        )
        if counts != (entry.n_dims, entry.n_vars, entry.n_atts):
            raise CorruptHeader(f"object counts disagree for block {entry.block_path!r}")
        blocks[entry.block_path] = block
    return table, blocks

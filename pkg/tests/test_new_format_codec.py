"""Index table and metadata block codec: round trips, layout, validation."""

from __future__ import annotations

import random

import pytest

from parahead.classic import DimensionDef, Header, TypeTag, VariableDef
from parahead.errors import (
    BadMagic,
    CorruptHeader,
    DanglingDimRef,
    DuplicateName,
    OverlappingBlocks,
    Truncated,
    UnsortedIndex,
)
from parahead.newformat import (
    INDEX_MAGIC,
    BlockStats,
    IndexEntry,
    IndexTable,
    MetadataBlock,
    assemble_image,
    block_encoded_size,
    decode_block,
    decode_image,
    decode_index_table,
    encode_block,
    encode_index_table,
    index_table_encoded_size,
    layout_blocks,
    layout_from_stats,
    split_full_name,
)

from conftest import random_header


def make_entry(path, offset, size, nd=0, nv=0, na=0):
    return IndexEntry(path, offset, size, nd, nv, na)


def random_blocks(rng: random.Random, count: int) -> list[MetadataBlock]:
    used: set = set()
    blocks = []
    for i in range(count):
        path = f"p{rng.randrange(10**6):06d}"
        if path in used:
            continue
        used.add(path)
        blocks.append(MetadataBlock(path, random_header(rng, 5, max_dims=4, max_vars=4)))
    return blocks


def test_empty_table_round_trip():
    table = IndexTable((), header_reserve=20)
    raw = encode_index_table(table)
    assert raw[:4] == INDEX_MAGIC
    assert raw[4:12] == b"\x00" * 8  # entry count 0 follows the magic
    assert decode_index_table(raw) == table


def test_unsorted_input_encoded_sorted():
    idx_size = index_table_encoded_size(["a", "b", "c"])
    entries = (
        make_entry("c", idx_size + 32, 16),
        make_entry("a", idx_size, 16),
        make_entry("b", idx_size + 16, 16),
    )
    raw = encode_index_table(IndexTable(entries, idx_size + 48))
    decoded = decode_index_table(raw)
    assert [e.block_path for e in decoded.entries] == ["a", "b", "c"]


def test_decode_rejects_unsorted():
    idx_size = index_table_encoded_size(["a", "b"])
    good = encode_index_table(
        IndexTable(
            (make_entry("a", idx_size, 8), make_entry("b", idx_size + 8, 8)),
            idx_size + 16,
        )
    )
    # swap the two single-byte paths in place to break ordering only
    swapped = bytearray(good)
    first_path = 20 + 8  # magic + counts + first path-length field
    second_path = 20 + (8 + 4 + 40) + 8
    assert swapped[first_path : first_path + 1] == b"a"
    assert swapped[second_path : second_path + 1] == b"b"
    swapped[first_path], swapped[second_path] = ord("b"), ord("a")
    with pytest.raises(UnsortedIndex):
        decode_index_table(bytes(swapped))


def test_table_round_trip(rng):
    for _ in range(50):
        paths = sorted({f"g{rng.randrange(1000):04d}" for _ in range(rng.randint(0, 6))})
        idx_size = index_table_encoded_size(paths)
        offset = idx_size
        entries = []
        for p in paths:
            size = rng.randrange(4, 200) * 4
            entries.append(
                make_entry(p, offset, size, rng.randrange(5), rng.randrange(5), rng.randrange(3))
            )
            offset += size
        table = IndexTable(tuple(entries), offset)
        assert decode_index_table(encode_index_table(table)) == table


def test_overlapping_blocks_rejected():
    idx_size = index_table_encoded_size(["a", "b"])
    table = IndexTable(
        (make_entry("a", idx_size, 100), make_entry("b", idx_size + 60, 100)),
        idx_size + 200,
    )
    with pytest.raises(OverlappingBlocks):
        encode_index_table(table)


def test_block_overlapping_index_rejected():
    table = IndexTable((make_entry("a", 4, 100),), 200)
    with pytest.raises(OverlappingBlocks):
        encode_index_table(table)


def test_classic_magic_rejected():
    with pytest.raises(BadMagic):
        decode_index_table(b"CDF\x05" + b"\x00" * 44)


def test_truncated_table():
    idx_size = index_table_encoded_size(["abc"])
    raw = encode_index_table(
        IndexTable((make_entry("abc", idx_size, 8),), idx_size + 8)
    )
    with pytest.raises(Truncated):
        decode_index_table(raw[:-10])
    with pytest.raises(Truncated):
        decode_index_table(raw[:2])


def test_index_width_overflow():
    from parahead.errors import UnrepresentableValue

    idx = index_table_encoded_size(["a"])
    table = IndexTable((make_entry("a", idx, 2**64),), 2**64 + idx)
    with pytest.raises(UnrepresentableValue):
        encode_index_table(table)


def test_duplicate_paths_rejected():
    idx = index_table_encoded_size(["a", "a"])
    table = IndexTable((make_entry("a", idx, 8), make_entry("a", idx + 8, 8)), idx + 16)
    with pytest.raises(DuplicateName):
        encode_index_table(table)


# --- blocks ------------------------------------------------------------------


def test_block_round_trip(rng):
    for _ in range(60):
        block = MetadataBlock(f"b{rng.randrange(100):03d}", random_header(rng, 5))
        assert decode_block(encode_block(block)) == block


def test_root_block_path():
    block = MetadataBlock("", Header(dims=(DimensionDef("x", 3),)))
    assert decode_block(encode_block(block)) == block


def test_block_size_hand_computed():
    # one dim "xy" (2 chars), no atts, no vars, path "blk"
    block = MetadataBlock("blk", Header(dims=(DimensionDef("xy", 7),)))
    raw = encode_block(block)
    # path record: 8-byte length + "blk" padded to 4 bytes           = 12
    # dim list: 4-byte tag + 8-byte count
    #   + (8-byte name length + "xy" padded to 4 + 8-byte length)    = 32
    # two empty lists: (4-byte zero tag + 8-byte zero count) each    = 24
    assert len(raw) == 12 + 32 + 24
    assert block_encoded_size(block) == len(raw)


def test_block_size_matches_encoder(rng):
    for _ in range(40):
        block = MetadataBlock(f"q{rng.randrange(100):02d}", random_header(rng, 5))
        assert block_encoded_size(block) == len(encode_block(block))


def test_block_dangling_dim_ref():
    content = Header(vars=(VariableDef("v", (2,), TypeTag.INT, (), 64, 4),))
    with pytest.raises(DanglingDimRef):
        encode_block(MetadataBlock("b", content))


def test_block_local_names_must_not_contain_slash():
    content = Header(dims=(DimensionDef("a/b", 3),))
    with pytest.raises(CorruptHeader):
        encode_block(MetadataBlock("b", content))


def test_split_and_join_full_names():
    assert split_full_name("plain") == ("", "plain")
    assert split_full_name("a/b") == ("a", "b")
    assert split_full_name("a/b/c") == ("a/b", "c")


# --- layout -------------------------------------------------------------------


def test_layout_single_block_arithmetic():
    stats = [BlockStats("blk", 100, 1, 0, 0)]
    idx_size = index_table_encoded_size(["blk"])
    table = layout_from_stats(stats, align=4)
    entry = table.entries[0]
    assert entry.offset == (idx_size + 3) // 4 * 4
    assert table.header_reserve == entry.offset + 100


def test_layout_zero_blocks():
    table = layout_from_stats([], align=8)
    assert table.entries == ()
    assert table.header_reserve == (index_table_encoded_size([]) + 7) // 8 * 8


def test_layout_two_blocks_recurrence():
    stats = [BlockStats("a", 100, 0, 0, 0), BlockStats("b", 60, 0, 0, 0)]
    table = layout_from_stats(stats, align=8)
    first, second = table.entries
    assert second.offset == (first.offset + first.size + 7) // 8 * 8


def test_layout_independent_of_input_order(rng):
    blocks = random_blocks(rng, 8)
    shuffled = list(blocks)
    rng.shuffle(shuffled)
    assert layout_blocks(blocks) == layout_blocks(shuffled)


def test_layout_counts_filled(rng):
    blocks = random_blocks(rng, 5)
    table = layout_blocks(blocks)
    by_path = {b.block_path: b for b in blocks}
    for e in table.entries:
        content = by_path[e.block_path].content
        assert (e.n_dims, e.n_vars, e.n_atts) == (
            len(content.dims),
            len(content.vars),
            len(content.global_atts),
        )


# --- full image ------------------------------------------------------------------


def test_image_round_trip(rng):
    for _ in range(20):
        blocks = random_blocks(rng, rng.randint(0, 6))
        image = assemble_image(blocks)
        table, decoded = decode_image(image)
        assert decoded == {b.block_path: b for b in blocks}
        assert [e.block_path for e in table.entries] == sorted(
            b.block_path for b in blocks
        )


def test_image_count_validation(rng):
    blocks = random_blocks(rng, 3)
    image = bytearray(assemble_image(blocks))
    # corrupt the first entry's n_dims field (magic 4 + counts 16 + path rec)
    path0 = sorted(b.block_path for b in blocks)[0]
    entry_pos = 20 + 8 + len(path0) + (-len(path0)) % 4 + 16
    image[entry_pos : entry_pos + 8] = (99).to_bytes(8, "big")
    with pytest.raises(CorruptHeader):
        decode_image(bytes(image))

"""The four parallel header-creation pipelines and the partitioned read path.

All strategies consume the same workload and must produce the same logical
object set.  The two baseline strategies and the app-level variant write a
single classic header through rank 0; the partitioned strategy exchanges
only block names plus the contents of blocks claimed by several ranks, then
every rank writes its own blocks at offsets computed from a shared layout.

Phase wall times, comparison counters, collective byte counts, file-region
write logs, and a logical memory high-watermark are collected per rank.
Memory accounting covers retained metadata (the rank's definitions, live
exchange buffers, and cached index/header state); transient write staging
is not charged, mirroring bounded I/O staging.
"""

from __future__ import annotations

import os
import struct
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from enum import Enum

from .classic import (
    AttributeDef,
    DimensionDef,
    Header,
    TypeTag,
    VariableDef,
    compute_offsets,
    decode_classic,
    encode_classic,
    encoded_size,
    var_size_bytes,
)
from .comm import SimComm, run_ranks
from .consistency import (
    NameRecord,
    hash_check,
    make_name_records,
    sort_check,
)
from .errors import (
    ConsistencyError,
    DanglingDimRef,
    NoSuchObject,
    Truncated,
)
from .newformat import (
    BlockStats,
    IndexTable,
    MetadataBlock,
    decode_block,
    decode_index_table_prefix,
    encode_block,
    encode_index_table,
    join_full_name,
    layout_from_stats,
    split_full_name,
)
from .records import (
    AttPayload,
    DimPayload,
    ObjectKind,
    VarPayload,
    decode_record,
    digest64,
    encode_record,
    pack_stream,
    unpack_stream,
)
from .store import RankStore, gids_from_order
from .workload import Workload

DEFAULT_HASH_SIZE = 16_384
DEFAULT_ALIGN = 4

PHASES = ("define", "exchange", "consistency_check", "header_write", "close_free")


class StrategyKind(Enum):
    APP_BASELINE = "app_baseline"
    LIB_BASELINE_HASH = "lib_baseline_hash"
    LIB_BASELINE_SORT = "lib_baseline_sort"
    NEW_FORMAT = "new_format"


@dataclass
class PhaseReport:
    """Everything one rank measured during a strategy run."""

    strategy: StrategyKind
    rank: int
    seconds: dict[str, float]
    string_comparisons: int = 0
    payload_comparisons: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0
    calls_by_op: dict[str, int] = field(default_factory=dict)
    io_bytes_written: int = 0
    io_bytes_read: int = 0
    mem_high_watermark: int = 0


@dataclass(frozen=True)
class WriteRecord:
    rank: int
    offset: int
    length: int
    tag: str


class FileImage:
    """Shared in-memory file with a per-region write log.

    Writers are responsible for disjoint regions; the log makes any overlap
    visible to tests instead of hiding it behind last-writer-wins bytes.
    """

    def __init__(self):
        self._data = bytearray()
        self.log: list[WriteRecord] = []
        self._lock = threading.Lock()

    def write(self, rank: int, offset: int, payload: bytes, tag: str) -> None:
        with self._lock:
            end = offset + len(payload)
            if end > len(self._data):
                self._data.extend(b"\x00" * (end - len(self._data)))
            self._data[offset:end] = payload
            self.log.append(WriteRecord(rank, offset, len(payload), tag))

    def to_bytes(self) -> bytes:
        with self._lock:
            return bytes(self._data)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    def __len__(self) -> int:
        return len(self._data)


@dataclass(frozen=True)
class RunResult:
    image: FileImage
    reports: list[PhaseReport]


class MemoryMeter:
    """Logical bytes of metadata a rank currently retains, with high watermark."""

    def __init__(self):
        self.held = 0
        self.high_watermark = 0

    def acquire(self, nbytes: int) -> None:
        self.held += nbytes
        if self.held > self.high_watermark:
            self.high_watermark = self.held

    def release(self, nbytes: int) -> None:
        self.held -= nbytes

    def release_all(self) -> None:
        self.held = 0


class RankContext:
    """Per-rank instrumentation shared by every strategy body."""

    def __init__(self, strategy: StrategyKind, rank: int, comm: SimComm):
        self.strategy = strategy
        self.rank = rank
        self.comm = comm
        self.meter = MemoryMeter()
        self.seconds = {name: 0.0 for name in PHASES}
        self.string_comparisons = 0
        self.payload_comparisons = 0
        self.io_bytes_written = 0
        self.io_bytes_read = 0

    @contextmanager
    def phase(self, name: str):
        self.comm.barrier(self.rank)
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] += time.perf_counter() - start

    def count_check(self, report) -> None:
        self.string_comparisons += report.string_comparisons
        self.payload_comparisons += report.payload_comparisons

    def report(self) -> PhaseReport:
        stats = self.comm.stats(self.rank)
        return PhaseReport(
            strategy=self.strategy,
            rank=self.rank,
            seconds=dict(self.seconds),
            string_comparisons=self.string_comparisons,
            payload_comparisons=self.payload_comparisons,
            bytes_sent=stats.bytes_sent,
            bytes_received=stats.bytes_received,
            calls_by_op=dict(stats.calls_by_op),
            io_bytes_written=self.io_bytes_written,
            io_bytes_read=self.io_bytes_read,
            mem_high_watermark=self.meter.high_watermark,
        )


def _resolve_lockstep(flag) -> bool:
    if flag is None:
        return os.environ.get("PARAHEAD_LOCKSTEP", "") == "1"
    return bool(flag)


# --- shared classic-format machinery -----------------------------------------


def merge_records(rank_record_lists) -> list[bytes]:
    """Deduplicate gathered records into the file order.

    Objects are ordered per kind by (rank of first definer, creation index);
    a shared object keeps its lowest-rank definer's position.
    """
    seen = set()
    merged = []
    for records in rank_record_lists:
        for rec in records:
            kind, name, _ = _record_key(rec)
            if (kind, name) in seen:
                continue
            seen.add((kind, name))
            merged.append(rec)
    return merged


def _record_key(rec: bytes):
    n = int.from_bytes(rec[1:5], "big")
    return rec[0], rec[5 : 5 + n].decode("utf-8"), None


def global_order_from_records(records) -> dict[ObjectKind, list[str]]:
    order: dict[ObjectKind, list[str]] = {k: [] for k in ObjectKind}
    for rec in records:
        kind, name, _ = _record_key(rec)
        order[ObjectKind(kind)].append(name)
    return order


def build_classic_header(merged_records) -> Header:
    """Materialize a header from deduplicated records, resolving dim names to ids."""
    dims = []
    gatts = []
    vars_ = []
    dim_ids: dict[str, int] = {}
    for rec in merged_records:
        kind, full_name, payload = decode_record(rec)
        if kind is ObjectKind.DIMENSION:
            dim_ids[full_name] = len(dims)
            dims.append(DimensionDef(full_name, payload.length))
        elif kind is ObjectKind.ATTRIBUTE:
            gatts.append(AttributeDef(full_name, payload.type_tag, payload.values))
    for rec in merged_records:
        kind, full_name, payload = decode_record(rec)
        if kind is not ObjectKind.VARIABLE:
            continue
        try:
            refs = tuple(dim_ids[d] for d in payload.dim_names)
        except KeyError as exc:
            raise DanglingDimRef(
                f"variable {full_name!r} references unknown dimension {exc.args[0]!r}"
            ) from exc
        vars_.append(
            VariableDef(full_name, refs, payload.type_tag, payload.attributes)
        )
    return Header(tuple(dims), tuple(gatts), tuple(vars_))


def _write_classic_root(ctx: RankContext, image: FileImage, merged) -> None:
    if ctx.rank != 0:
        return
    header = build_classic_header(merged)
    reserve = encoded_size(header, 5)
    header = compute_offsets(header, reserve, DEFAULT_ALIGN, version=5)
    raw = encode_classic(header, 5)
    image.write(0, 0, raw, "classic_header")
    ctx.io_bytes_written += len(raw)


# --- application-level baseline -----------------------------------------------


def run_app_baseline(
    workload: Workload,
    hash_size: int = DEFAULT_HASH_SIZE,
    *,
    lockstep=None,
    order_seed=None,
) -> RunResult:
    """Exchange and synchronize metadata up front, then create collectively."""
    image = FileImage()

    def body(rank: int, comm: SimComm) -> PhaseReport:
        ctx = RankContext(StrategyKind.APP_BASELINE, rank, comm)
        defs = workload.per_rank[rank]
        with ctx.phase("exchange"):
            own = [encode_record(d.kind, d.full_name, d.payload) for d in defs]
            buf = pack_stream(own)
            ctx.meter.acquire(len(buf))
            gathered = comm.allgatherv(rank, buf)
            ctx.meter.acquire(sum(len(g) for g in gathered))
            rank_lists = [unpack_stream(g) for g in gathered]
            records = make_name_records(rank_lists)
        with ctx.phase("consistency_check"):
            report = hash_check(records, hash_size)
            ctx.count_check(report)
            if report.conflicts:
                raise ConsistencyError(report.conflicts)
        with ctx.phase("define"):
            merged = merge_records(rank_lists)
            store = RankStore(rank)
            for rec in merged:
                kind, name, payload = decode_record(rec)
                store.define(kind, name, payload)
            ctx.meter.acquire(store.serialized_bytes())
            store.finalize_gids(gids_from_order(global_order_from_records(merged)))
        with ctx.phase("header_write"):
            _write_classic_root(ctx, image, merged)
        with ctx.phase("close_free"):
            ctx.meter.release_all()
        return ctx.report()

    reports = run_ranks(
        workload.nranks, body, lockstep=_resolve_lockstep(lockstep), order_seed=order_seed
    )
    return RunResult(image, reports)


# --- library-level baseline ----------------------------------------------------


def run_lib_baseline(
    workload: Workload,
    hash_size: int = DEFAULT_HASH_SIZE,
    check: str = "hash",
    *,
    lockstep=None,
    order_seed=None,
) -> RunResult:
    """Define independently; the library reconciles everything at end-define."""
    if check not in ("hash", "sort"):
        raise ValueError(f"check must be 'hash' or 'sort', not {check!r}")
    strategy = (
        StrategyKind.LIB_BASELINE_HASH if check == "hash" else StrategyKind.LIB_BASELINE_SORT
    )
    image = FileImage()

    def body(rank: int, comm: SimComm) -> PhaseReport:
        ctx = RankContext(strategy, rank, comm)
        store = RankStore(rank)
        with ctx.phase("define"):
            for d in workload.per_rank[rank]:
                store.define(d.kind, d.full_name, d.payload)
            ctx.meter.acquire(store.serialized_bytes())
        with ctx.phase("exchange"):
            buf = pack_stream([o.record for o in store.objects])
            gathered = comm.allgatherv(rank, buf)
            ctx.meter.acquire(sum(len(g) for g in gathered))
            rank_lists = [unpack_stream(g) for g in gathered]
            records = make_name_records(rank_lists)
        with ctx.phase("consistency_check"):
            report = hash_check(records, hash_size) if check == "hash" else sort_check(records)
            ctx.count_check(report)
            if report.conflicts:
                raise ConsistencyError(report.conflicts)
        with ctx.phase("header_write"):
            merged = merge_records(rank_lists)
            store.finalize_gids(gids_from_order(global_order_from_records(merged)))
            _write_classic_root(ctx, image, merged)
        with ctx.phase("close_free"):
            ctx.meter.release_all()
        return ctx.report()

    reports = run_ranks(
        workload.nranks, body, lockstep=_resolve_lockstep(lockstep), order_seed=order_seed
    )
    return RunResult(image, reports)


# --- partitioned header strategy ------------------------------------------------

_PROTO_FIXED = struct.Struct(">QQQQQQ")  # n_dims, n_vars, n_atts, size, data, digest


@dataclass(frozen=True)
class _ProtoEntry:
    """Per-block facts exchanged before layout: counts, sizes, content digest."""

    block_path: str
    n_dims: int
    n_vars: int
    n_atts: int
    enc_size: int
    data_size: int
    digest: int


def _block_content(records) -> Header:
    """Block-local header from the block's records (names stripped of the path)."""
    dims = []
    gatts = []
    vars_ = []
    dim_ids: dict[str, int] = {}
    for rec in records:
        kind, full_name, payload = decode_record(rec)
        _, local = split_full_name(full_name)
        if kind is ObjectKind.DIMENSION:
            dim_ids[full_name] = len(dims)
            dims.append(DimensionDef(local, payload.length))
        elif kind is ObjectKind.ATTRIBUTE:
            gatts.append(AttributeDef(local, payload.type_tag, payload.values))
    for rec in records:
        kind, full_name, payload = decode_record(rec)
        if kind is not ObjectKind.VARIABLE:
            continue
        _, local = split_full_name(full_name)
        try:
            refs = tuple(dim_ids[d] for d in payload.dim_names)
        except KeyError as exc:
            raise DanglingDimRef(
                f"variable {full_name!r} references dimension {exc.args[0]!r} "
                "outside its block"
            ) from exc
        vars_.append(VariableDef(local, refs, payload.type_tag, payload.attributes))
    return Header(tuple(dims), tuple(gatts), tuple(vars_))


def _pad4(n: int) -> int:
    return (4 - n % 4) % 4


def _name_rec_size(local: str) -> int:
    return 8 + len(local) + _pad4(len(local))


def _att_entry_size(att: AttributeDef) -> int:
    raw = (
        len(att.values)
        if att.type_tag is TypeTag.CHAR
        else len(att.values) * att.type_tag.itemsize
    )
    return _name_rec_size(att.name) + 4 + 8 + raw + _pad4(raw)


def _block_facts(path: str, records) -> _ProtoEntry:
    """Size and count facts for a block computed straight from its records.

    Works on partial contributions too: a rank sharing a block may reference
    dimensions another rank contributes, so nothing is resolved here.  Data
    sizes of unresolved variables count as zero; they are recomputed from the
    merged content before layout, and encoding validates strictly.
    """
    counts = {k: 0 for k in ObjectKind}
    enc = _name_rec_size(path) + 3 * (4 + 8)  # path record + three list headers
    dim_lengths: dict[str, int] = {}
    pending: list[VarPayload] = []
    for rec in records:
        kind, full_name, payload = decode_record(rec)
        counts[kind] += 1
        local = split_full_name(full_name)[1]
        if kind is ObjectKind.DIMENSION:
            dim_lengths[full_name] = payload.length
            enc += _name_rec_size(local) + 8
        elif kind is ObjectKind.ATTRIBUTE:
            enc += _att_entry_size(AttributeDef(local, payload.type_tag, payload.values))
        else:
            enc += _name_rec_size(local) + 8 + 8 * len(payload.dim_names)
            enc += 4 + 8 + sum(_att_entry_size(a) for a in payload.attributes)
            enc += 4 + 8 + 8  # type, vsize, begin
            pending.append(payload)
    data = 0
    for payload in pending:
        try:
            lengths = tuple(dim_lengths[d] for d in payload.dim_names)
        except KeyError:
            continue
        data += var_size_bytes(lengths, payload.type_tag)
    digest = digest64(b"".join(records))
    return _ProtoEntry(
        path,
        counts[ObjectKind.DIMENSION],
        counts[ObjectKind.VARIABLE],
        counts[ObjectKind.ATTRIBUTE],
        enc,
        data,
        digest,
    )


def _pack_proto(entries) -> bytes:
    parts = [struct.pack(">I", len(entries))]
    for e in entries:
        raw = e.block_path.encode("ascii")
        parts.append(struct.pack(">I", len(raw)))
        parts.append(raw)
        parts.append(
            _PROTO_FIXED.pack(
                e.n_dims, e.n_vars, e.n_atts, e.enc_size, e.data_size, e.digest
            )
        )
    return b"".join(parts)


def _unpack_proto(buf: bytes) -> list[_ProtoEntry]:
    out = []
    pos = 0
    (count,) = struct.unpack_from(">I", buf, pos)
    pos += 4
    for _ in range(count):
        (n,) = struct.unpack_from(">I", buf, pos)
        pos += 4
        path = buf[pos : pos + n].decode("ascii")
        pos += n
        fields = _PROTO_FIXED.unpack_from(buf, pos)
        pos += _PROTO_FIXED.size
        out.append(_ProtoEntry(path, *fields))
    return out


def run_new_format(
    workload: Workload,
    hash_size: int = DEFAULT_HASH_SIZE,
    align: int = DEFAULT_ALIGN,
    *,
    lockstep=None,
    order_seed=None,
) -> RunResult:
    """Partitioned header: exchange block names, compare only shared blocks,
    and write index plus blocks from their owning ranks."""
    image = FileImage()

    def body(rank: int, comm: SimComm) -> PhaseReport:
        ctx = RankContext(StrategyKind.NEW_FORMAT, rank, comm)
        store = RankStore(rank)
        with ctx.phase("define"):
            for d in workload.per_rank[rank]:
                store.define(d.kind, d.full_name, d.payload)
            ctx.meter.acquire(store.serialized_bytes())
            own_blocks: dict[str, list] = {}
            for obj in store.objects:
                path, _ = split_full_name(obj.full_name)
                own_blocks.setdefault(path, []).append(obj.record)

        with ctx.phase("exchange"):
            proto = _pack_proto(
                [_block_facts(p, recs) for p, recs in own_blocks.items()]
            )
            gathered_proto = comm.allgatherv(rank, proto)
            ctx.meter.acquire(sum(len(g) for g in gathered_proto))

        with ctx.phase("consistency_check"):
            # every rank validates its own namespace in its own table
            local = make_name_records([[o.record for o in store.objects]])
            local_report = hash_check(local, hash_size)
            ctx.count_check(local_report)
            assert not local_report.conflicts  # the store enforced local uniqueness

            claims: dict[str, list[int]] = {}
            proto_by_path: dict[str, _ProtoEntry] = {}
            block_names = []
            for peer, raw in enumerate(gathered_proto):
                for entry in _unpack_proto(raw):
                    claims.setdefault(entry.block_path, []).append(peer)
                    proto_by_path.setdefault(entry.block_path, entry)
                    block_names.append(
                        NameRecord(entry.block_path, peer, digest64(b"\xff"), b"\xff")
                    )
            block_report = hash_check(block_names, hash_size)
            ctx.count_check(block_report)
            shared_paths = {g[0].full_name for g in block_report.shared_sets}

            shared_own = [
                rec
                for path in sorted(own_blocks)
                if path in shared_paths
                for rec in own_blocks[path]
            ]
            gathered_shared = comm.allgatherv(rank, pack_stream(shared_own))
            ctx.meter.acquire(sum(len(g) for g in gathered_shared))
            shared_lists = [unpack_stream(g) for g in gathered_shared]
            shared_report = hash_check(make_name_records(shared_lists), hash_size)
            ctx.count_check(shared_report)
            if shared_report.conflicts:
                raise ConsistencyError(shared_report.conflicts)
            merged_shared: dict[str, list[bytes]] = {p: [] for p in shared_paths}
            for rec in merge_records(shared_lists):
                path, _ = split_full_name(_record_key(rec)[1])
                merged_shared[path].append(rec)

        with ctx.phase("header_write"):
            # block contents this rank can materialize; facts for everything
            contents: dict[str, Header] = {}
            facts: dict[str, _ProtoEntry] = {}
            for path in sorted(claims):
                if path in shared_paths:
                    facts[path] = _block_facts(path, merged_shared[path])
                    contents[path] = _block_content(merged_shared[path])
                else:
                    facts[path] = proto_by_path[path]
                    if path in own_blocks:
                        contents[path] = _block_content(own_blocks[path])
            table = layout_from_stats(
                [
                    BlockStats(p, facts[p].enc_size, facts[p].n_dims,
                               facts[p].n_vars, facts[p].n_atts)
                    for p in facts
                ],
                align,
            )
            index_raw = encode_index_table(table)
            ctx.meter.acquire(len(index_raw))  # replicated index copy

            # data-section offsets: path-sorted blocks, creation order within
            data_cursor = _align_up(table.header_reserve, align)
            writers: dict[str, int] = {}
            starts: dict[str, int] = {}
            for entry in table.entries:
                path = entry.block_path
                starts[path] = data_cursor
                data_cursor += facts[path].data_size
                owners = claims[path]
                writers[path] = min(owners)
            for entry in table.entries:
                path = entry.block_path
                if writers[path] != rank:
                    continue
                content = compute_block_offsets(contents[path], starts[path])
                raw = encode_block(MetadataBlock(path, content))
                if len(raw) != entry.size:
                    raise RuntimeError(
                        f"block {path!r} encoded to {len(raw)} bytes, "
                        f"layout promised {entry.size}"
                    )
                image.write(rank, entry.offset, raw, f"block:{path}")
                ctx.io_bytes_written += len(raw)
            if rank == 0:
                image.write(0, 0, index_raw, "index_table")
                ctx.io_bytes_written += len(index_raw)

            # GID assignment: block-sorted order, creation order within block
            gids = _gids_for_known_blocks(table, contents)
            store.finalize_gids(gids)

        with ctx.phase("close_free"):
            ctx.meter.release_all()
        return ctx.report()

    reports = run_ranks(
        workload.nranks, body, lockstep=_resolve_lockstep(lockstep), order_seed=order_seed
    )
    return RunResult(image, reports)


def _align_up(n: int, align: int) -> int:
    return (n + align - 1) // align * align


def compute_block_offsets(content: Header, data_start: int) -> Header:
    """Assign file-absolute begin offsets to a block's variables."""
    cursor = data_start
    placed = []
    for var in content.vars:
        lengths = tuple(content.dims[r].length for r in var.dim_refs)
        vsize = var_size_bytes(lengths, var.type_tag)
        placed.append(replace(var, begin=cursor, vsize=vsize))
        cursor += vsize
    return replace(content, vars=tuple(placed))


def _gids_for_known_blocks(table: IndexTable, contents) -> dict:
    """(kind, full name) -> GID for every block whose content is at hand.

    GIDs are per-kind indices in file order: the index table's counts give
    each block's starting id, so remote blocks never need to be read.
    """
    gids: dict = {}
    base = {k: 0 for k in ObjectKind}
    for entry in table.entries:
        content = contents.get(entry.block_path)
        if content is not None:
            for i, dim in enumerate(content.dims):
                name = join_full_name(entry.block_path, dim.name)
                gids[(ObjectKind.DIMENSION, name)] = base[ObjectKind.DIMENSION] + i
            for i, var in enumerate(content.vars):
                name = join_full_name(entry.block_path, var.name)
                gids[(ObjectKind.VARIABLE, name)] = base[ObjectKind.VARIABLE] + i
            for i, att in enumerate(content.global_atts):
                name = join_full_name(entry.block_path, att.name)
                gids[(ObjectKind.ATTRIBUTE, name)] = base[ObjectKind.ATTRIBUTE] + i
        base[ObjectKind.DIMENSION] += entry.n_dims
        base[ObjectKind.VARIABLE] += entry.n_vars
        base[ObjectKind.ATTRIBUTE] += entry.n_atts
    return gids


# --- read path --------------------------------------------------------------


class BytesSource:
    """Random-access reads over an in-memory image."""

    def __init__(self, data: bytes):
        self._data = bytes(data)

    def read(self, offset: int, length: int) -> bytes:
        if offset + length > len(self._data):
            raise Truncated(f"read past end: {offset}+{length} > {len(self._data)}")
        return self._data[offset : offset + length]


class FileSource:
    """Random-access reads over an on-disk file."""

    def __init__(self, path):
        self._fh = open(path, "rb")

    def read(self, offset: int, length: int) -> bytes:
        self._fh.seek(offset)
        out = self._fh.read(length)
        if len(out) != length:
            raise Truncated(f"read past end of file at offset {offset}")
        return out

    def close(self) -> None:
        self._fh.close()


class HeaderHandle:
    """Open partitioned-header file: index cached, blocks loaded on demand."""

    def __init__(self, source):
        self._source = source
        self.io_bytes_read = 0
        self._table = self._read_index()
        self._entries = {e.block_path: e for e in self._table.entries}
        self._cache: dict[str, dict] = {}
        self._gid_base = self._compute_gid_bases()

    def _read_index(self) -> IndexTable:
        head = self._take(0, 20)  # magic + entry count + header_reserve
        pos = 20
        count = struct.unpack(">Q", head[4:12])[0]
        for _ in range(count):
            (path_len,) = struct.unpack(">Q", self._take(pos, 8))
            pos += 8
            padded = path_len + (-path_len) % 4
            self._take(pos, padded + 40)
            pos += padded + 40
        table, used = decode_index_table_prefix(self._source.read(0, pos))
        assert used == pos
        return table

    def _take(self, offset: int, length: int) -> bytes:
        out = self._source.read(offset, length)
        self.io_bytes_read += length
        return out

    def _compute_gid_bases(self):
        bases = {}
        running = {k: 0 for k in ObjectKind}
        for e in self._table.entries:
            bases[e.block_path] = dict(running)
            running[ObjectKind.DIMENSION] += e.n_dims
            running[ObjectKind.VARIABLE] += e.n_vars
            running[ObjectKind.ATTRIBUTE] += e.n_atts
        return bases

    @property
    def index_table(self) -> IndexTable:
        return self._table

    @property
    def blocks_loaded(self) -> int:
        return len(self._cache)

    def _load_block(self, path: str) -> dict:
        cached = self._cache.get(path)
        if cached is not None:
            return cached
        entry = self._entries.get(path)
        if entry is None:
            raise NoSuchObject(f"no metadata block {path!r}")
        raw = self._take(entry.offset, entry.size)
        try:
            block = decode_block(raw)
        except Exception as exc:
            raise type(exc)(f"block {path!r}: {exc}") from exc
        content = block.content
        if (
            block.block_path != path
            or (len(content.dims), len(content.vars), len(content.global_atts))
            != (entry.n_dims, entry.n_vars, entry.n_atts)
        ):
            raise Truncated(f"block {path!r} disagrees with its index entry")
        objects: dict = {}
        prefix = f"{path}/" if path else ""
        full_dim_names = [prefix + d.name for d in content.dims]
        for i, dim in enumerate(content.dims):
            objects[(ObjectKind.DIMENSION, dim.name)] = (i, DimPayload(dim.length))
        for i, var in enumerate(content.vars):
            dim_names = tuple(full_dim_names[r] for r in var.dim_refs)
            objects[(ObjectKind.VARIABLE, var.name)] = (
                i,
                VarPayload(var.type_tag, dim_names, var.attributes),
            )
        for i, att in enumerate(content.global_atts):
            objects[(ObjectKind.ATTRIBUTE, att.name)] = (
                i,
                AttPayload(att.type_tag, att.values),
            )
        self._cache[path] = objects
        return objects

    def lookup(self, kind: ObjectKind, full_name: str):
        """Payload of one object, loading (and caching) only its block."""
        path, local = split_full_name(full_name)
        objects = self._load_block(path)
        try:
            return objects[(kind, local)][1]
        except KeyError:
            raise NoSuchObject(f"no {kind.name} named {full_name!r}") from None

    def gid_of(self, kind: ObjectKind, full_name: str) -> int:
        path, local = split_full_name(full_name)
        objects = self._load_block(path)
        try:
            position = objects[(kind, local)][0]
        except KeyError:
            raise NoSuchObject(f"no {kind.name} named {full_name!r}") from None
        return self._gid_base[path][kind] + position


def open_new_format(image, nranks: int = 1) -> list[HeaderHandle]:
    """Open a partitioned file on P ranks; each reads only the index table."""
    handles = []
    for _ in range(nranks):
        source = image if hasattr(image, "read") else BytesSource(
            image.to_bytes() if isinstance(image, FileImage) else image
        )
        handles.append(HeaderHandle(source))
    return handles


def read_full_header(handle: HeaderHandle) -> dict:
    """Decode every block; returns the (kind, full name) -> payload map."""
    out = {}
    for entry in handle.index_table.entries:
        objects = handle._load_block(entry.block_path)
        for (kind, local), (_, payload) in objects.items():
            out[(kind, join_full_name(entry.block_path, local))] = payload
    return out


# --- logical object maps (cross-format and cross-strategy comparison) ---------


def logical_map_from_classic(header: Header) -> dict:
    """Layout-independent view of a classic header: definitions only."""
    out = {}
    for dim in header.dims:
        out[(ObjectKind.DIMENSION, dim.name)] = DimPayload(dim.length)
    for att in header.global_atts:
        out[(ObjectKind.ATTRIBUTE, att.name)] = AttPayload(att.type_tag, att.values)
    for var in header.vars:
        dim_names = tuple(header.dims[r].name for r in var.dim_refs)
        out[(ObjectKind.VARIABLE, var.name)] = VarPayload(
            var.type_tag, dim_names, var.attributes
        )
    return out


def logical_map_from_image(image_bytes: bytes) -> dict:
    """Dispatch on the magic and build the logical object map either way."""
    if image_bytes[:3] == b"CDF":
        return logical_map_from_classic(decode_classic(image_bytes))
    handle = open_new_format(image_bytes)[0]
    return read_full_header(handle)

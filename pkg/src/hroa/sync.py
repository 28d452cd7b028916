"""Reset-query synchronization: cache server and fetch client.

The only flow spoken here is the full snapshot: client sends Reset Query,
cache answers Cache Response, every payload PDU of the selected scheme,
then End of Data.  Payload bytes are pre-serialized once per (snapshot,
scheme) so concurrent clients share one blob, optionally drained through
a token bucket to emulate a slow link.
"""

from __future__ import annotations

import json
import logging
import random
import socket
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

from . import wire
from .bmcodec import SubTreeBlock, subtree_height, subtree_id_level, decode_block
from .hybrid import AggregatedGroup, HybridConfig, HybridPayload, hybrid_encode
from .mlcodec import compress_minimal
from .prefix import AddressBlock, Prefix, expand
from .workload import Workload

log = logging.getLogger("hroa.sync")

SCHEMES = ("sroa", "troa", "mroa", "hroa", "ahroa")
SERVE_SCHEMES = ("mroa", "hroa", "ahroa")

DEFAULT_REFRESH = 3600
DEFAULT_RETRY = 600
DEFAULT_EXPIRE = 7200

ANNOUNCE = 1  # flags byte of legacy prefix PDUs


class SyncError(Exception):
    pass


class TransportError(SyncError):
    """Socket-level failure (connect, send, receive, premature close)."""


class ProtocolError(SyncError):
    """The peer sent something the reset-query flow does not allow."""


class CacheErrorReport(SyncError):
    """The cache answered with an error-report PDU."""

    def __init__(self, report: wire.ErrorReport):
        super().__init__(f"cache error {report.error_code}: {report.text}")
        self.report = report


@dataclass(frozen=True)
class CacheSnapshot:
    """Immutable per-serial cache state.

    ``entries`` holds each AS's canonical address blocks (minimal when the
    snapshot was built from plain prefixes); ``payloads`` the hybrid
    encodings derived from them at build time.
    """

    session_id: int
    serial: int
    cfg: HybridConfig
    entries: Mapping[int, tuple[AddressBlock, ...]]
    payloads: Mapping[int, HybridPayload]

    @classmethod
    def build(
        cls,
        inputs: Mapping[int, Iterable[Prefix] | Iterable[AddressBlock]] | Workload,
        cfg: HybridConfig | None = None,
        session_id: int | None = None,
        serial: int = 1,
        recompress: bool = False,
    ) -> "CacheSnapshot":
        cfg = cfg or HybridConfig()
        if isinstance(inputs, Workload):
            inputs = inputs.entries
        if session_id is None:
            session_id = random.getrandbits(16)
        entries: dict[int, tuple[AddressBlock, ...]] = {}
        payloads: dict[int, HybridPayload] = {}
        agg_cfg = cfg if cfg.aggregate else HybridConfig(
            delta_l_threshold=cfg.delta_l_threshold,
            hanging=cfg.hanging,
            aggregate=True,
            expansion_cap=cfg.expansion_cap,
        )
        for asn, items in inputs.items():
            seq = list(items)
            if seq and isinstance(seq[0], Prefix):
                blocks = compress_minimal(seq)
            else:
                blocks = sorted(set(seq))
                if recompress:
                    prefixes: set[Prefix] = set()
                    for b in blocks:
                        prefixes |= expand(b, cfg.expansion_cap)
                    blocks = compress_minimal(prefixes)
            entries[asn] = tuple(blocks)
            payloads[asn] = hybrid_encode(agg_cfg, asn, blocks)
        return cls(session_id, serial, cfg, entries, payloads)

    def authorized_map(self) -> dict[int, set[Prefix]]:
        out: dict[int, set[Prefix]] = {}
        for asn, blocks in self.entries.items():
            acc: set[Prefix] = set()
            for b in blocks:
                acc |= expand(b, self.cfg.expansion_cap)
            out[asn] = acc
        return out

    def vrp_total(self) -> int:
        return sum(len(v) for v in self.authorized_map().values())


def _prefix_pdus(asn: int, blocks: Iterable[AddressBlock], version: int) -> list[wire.RtrPdu]:
    return [
        wire.PrefixPdu(ANNOUNCE, b.prefix, b.max_length, asn, version=version)
        for b in sorted(blocks)
    ]


def payload_pdus(
    snapshot: CacheSnapshot, scheme: str, version: int = wire.DEFAULT_VERSION
) -> list[wire.RtrPdu]:
    """Every payload PDU of the snapshot under one scheme, canonical order."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    pdus: list[wire.RtrPdu] = []
    for asn in sorted(snapshot.entries):
        blocks = snapshot.entries[asn]
        if scheme == "troa":
            pdus.extend(_prefix_pdus(asn, blocks, version))
        elif scheme == "sroa":
            singles = set()
            for b in blocks:
                singles |= expand(b, snapshot.cfg.expansion_cap)
            pdus.extend(
                wire.PrefixPdu(ANNOUNCE, p, p.prefixlen, asn, version=version)
                for p in sorted(singles)
            )
        elif scheme == "mroa":
            pdus.extend(_prefix_pdus(asn, blocks, version))
        else:
            payload = snapshot.payloads[asn]
            pdus.extend(_prefix_pdus(asn, payload.ml_blocks, version))
            if scheme == "hroa":
                pdus.extend(
                    wire.SubTreePdu(b.family, b.id, b.bitmap, asn, version=version)
                    for b in payload.bm_blocks
                )
            else:  # ahroa
                for group in payload.aggregated or ():
                    pdus.append(
                        wire.SubTreeAggPdu(
                            group.family,
                            asn,
                            tuple((b.id, b.bitmap) for b in group.blocks),
                            version=version,
                        )
                    )
    return pdus


@dataclass
class SyncReport:
    """What one reset-query fetch cost."""

    pdu_count: int = 0
    total_bytes: int = 0
    elapsed: float = 0.0
    decode_count: int = 0
    serial: int = 0
    session_id: int = 0
    skipped_unknown: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class TokenBucket:
    """Byte-rate shaper: consume() sleeps off any token debt.

    Letting the balance go negative keeps a consume larger than the
    capacity from blocking forever; the caller just pays the time back
    before the next send goes out.
    """

    def __init__(self, rate_bytes_per_sec: float, capacity: float | None = None):
        if rate_bytes_per_sec <= 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate_bytes_per_sec)
        self.capacity = float(capacity if capacity is not None else rate_bytes_per_sec / 10)
        self._tokens = self.capacity
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def consume(self, amount: int) -> None:
        with self._lock:
            now = time.monotonic()
            self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
            self._stamp = now
            self._tokens -= amount
            wait = -self._tokens / self.rate if self._tokens < 0 else 0.0
        if wait > 0:
            time.sleep(wait)


class RtrServer:
    """Serves one snapshot under one scheme until closed."""

    def __init__(
        self,
        snapshot: CacheSnapshot,
        scheme: str = "hroa",
        host: str = "127.0.0.1",
        port: int = 0,
        bandwidth_bps: float | None = None,
        version: int = wire.DEFAULT_VERSION,
    ):
        if scheme not in SERVE_SCHEMES:
            raise ValueError(f"serve scheme must be one of {SERVE_SCHEMES}")
        self.snapshot = snapshot
        self.scheme = scheme
        self.version = version
        # bandwidth is bits/sec to match how links are quoted
        self._bucket = TokenBucket(bandwidth_bps / 8) if bandwidth_bps else None
        pdus = payload_pdus(snapshot, scheme, version)
        self.payload_pdu_count = len(pdus)
        blob = bytearray(
            wire.serialize(wire.CacheResponse(snapshot.session_id, version=version))
        )
        for pdu in pdus:
            blob.extend(wire.serialize(pdu))
        blob.extend(
            wire.serialize(
                wire.EndOfData(
                    snapshot.session_id,
                    snapshot.serial,
                    DEFAULT_REFRESH,
                    DEFAULT_RETRY,
                    DEFAULT_EXPIRE,
                    version=version,
                )
            )
        )
        self._response = bytes(blob)
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(16)
        self._closing = False
        self._threads: list[threading.Thread] = []
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    @property
    def endpoint(self) -> tuple[str, int]:
        return self._sock.getsockname()[:2]

    @property
    def port(self) -> int:
        return self.endpoint[1]

    @property
    def response_bytes(self) -> int:
        return len(self._response)

    def _accept_loop(self) -> None:
        while not self._closing:
            try:
                conn, peer = self._sock.accept()
            except OSError:
                return
            t = threading.Thread(target=self._serve_conn, args=(conn, peer), daemon=True)
            t.start()
            self._threads.append(t)

    def _send(self, conn: socket.socket, blob: bytes) -> None:
        if self._bucket is None:
            conn.sendall(blob)
            return
        view = memoryview(blob)
        while view:
            chunk = view[:4096]
            self._bucket.consume(len(chunk))
            conn.sendall(chunk)
            view = view[len(chunk):]

    def _serve_conn(self, conn: socket.socket, peer) -> None:
        reader = wire.PduReader()
        try:
            with conn:
                while not self._closing:
                    data = conn.recv(4096)
                    if not data:
                        return
                    try:
                        pdus = reader.feed(data)
                    except wire.FramingError as exc:
                        conn.sendall(
                            wire.serialize(
                                wire.ErrorReport(0, text=str(exc), version=self.version)
                            )
                        )
                        return
                    for pdu in pdus:
                        if isinstance(pdu, wire.ResetQuery):
                            t0 = time.perf_counter()
                            self._send(conn, self._response)
                            log.info(
                                "served %s pdus=%d bytes=%d micros=%d peer=%s",
                                self.scheme,
                                self.payload_pdu_count,
                                len(self._response),
                                int((time.perf_counter() - t0) * 1e6),
                                peer,
                            )
                        else:
                            conn.sendall(
                                wire.serialize(
                                    wire.ErrorReport(
                                        0,
                                        echoed=wire.serialize(pdu),
                                        text="only reset query is supported",
                                        version=self.version,
                                    )
                                )
                            )
                            return
        except OSError:
            return

    def close(self) -> None:
        self._closing = True
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "RtrServer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def serve(
    snapshot: CacheSnapshot,
    scheme: str,
    endpoint: tuple[str, int] = ("127.0.0.1", 0),
    bandwidth_bps: float | None = None,
) -> RtrServer:
    """Start a server for the snapshot; returns the listening handle."""
    return RtrServer(snapshot, scheme, endpoint[0], endpoint[1], bandwidth_bps)


def _decode_payload_pdu(
    pdu: wire.RtrPdu,
    cfg: HybridConfig,
    out: dict[int, set[Prefix]],
) -> int:
    """Fold one payload PDU into the map; returns prefixes added."""
    if isinstance(pdu, wire.PrefixPdu):
        if not pdu.announce:
            raise ProtocolError("withdrawal PDU in a reset response")
        got = expand(AddressBlock(pdu.prefix, pdu.max_length), cfg.expansion_cap)
        out.setdefault(pdu.asn, set()).update(got)
        return len(got)
    if isinstance(pdu, wire.SubTreePdu):
        pairs = [(pdu.subtree_id, pdu.bitmap)]
        family, asn = pdu.family, pdu.asn
    elif isinstance(pdu, wire.SubTreeAggPdu):
        pairs = list(pdu.blocks)
        family, asn = pdu.family, pdu.asn
    else:
        raise ProtocolError(f"unexpected PDU {type(pdu).__name__} in payload")
    levels = cfg.levels(family)
    added = 0
    for sid, bitmap in pairs:
        try:
            block = SubTreeBlock(
                family, sid, bitmap, height=subtree_height(levels, subtree_id_level(sid))
            )
            flag, prefixes = decode_block(levels, block)
        except ValueError as exc:
            raise ProtocolError(f"bad sub-tree block: {exc}") from None
        if flag:
            raise ProtocolError("withdrawal block in a reset response")
        out.setdefault(asn, set()).update(prefixes)
        added += len(prefixes)
    return added


def fetch(
    endpoint: tuple[str, int],
    cfg: HybridConfig | None = None,
    timeout: float = 30.0,
) -> tuple[dict[int, set[Prefix]], SyncReport]:
    """Run one reset-query sync; returns (asn -> prefixes, transfer report)."""
    cfg = cfg or HybridConfig()
    report = SyncReport()
    out: dict[int, set[Prefix]] = {}
    try:
        conn = socket.create_connection(endpoint, timeout=timeout)
    except OSError as exc:
        raise TransportError(f"connect {endpoint}: {exc}") from None
    reader = wire.PduReader()
    got_cache_response = False
    done = False
    t0 = time.perf_counter()
    try:
        with conn:
            conn.sendall(wire.serialize(wire.ResetQuery()))
            while not done:
                try:
                    data = conn.recv(65536)
                except OSError as exc:
                    raise TransportError(f"recv: {exc}") from None
                if not data:
                    raise TransportError("connection closed before end of data")
                report.total_bytes += len(data)
                try:
                    pdus = reader.feed(data)
                except wire.FramingError as exc:
                    raise ProtocolError(f"unparseable PDU: {exc}") from None
                for pdu in pdus:
                    if isinstance(pdu, wire.ErrorReport):
                        raise CacheErrorReport(pdu)
                    if not got_cache_response:
                        if not isinstance(pdu, wire.CacheResponse):
                            raise ProtocolError(
                                f"expected cache response, got {type(pdu).__name__}"
                            )
                        got_cache_response = True
                        report.session_id = pdu.session_id
                        continue
                    if isinstance(pdu, wire.EndOfData):
                        if pdu.session_id != report.session_id:
                            raise ProtocolError("session id changed mid-response")
                        report.serial = pdu.serial
                        done = True
                        break
                    if isinstance(pdu, wire.UnknownPdu):
                        report.skipped_unknown += 1
                        continue
                    report.pdu_count += 1
                    _decode_payload_pdu(pdu, cfg, out)
    finally:
        report.elapsed = time.perf_counter() - t0
    report.decode_count = sum(len(s) for s in out.values())
    return out, report

import math
import socket
import time

import pytest

from hroa import wire
from hroa.hybrid import HybridConfig
from hroa.prefix import AddressBlock, parse_prefix
from hroa.sync import (
    CacheErrorReport,
    CacheSnapshot,
    ProtocolError,
    RtrServer,
    SyncReport,
    TokenBucket,
    TransportError,
    fetch,
    payload_pdus,
    serve,
)
from hroa.workload import synthetic_scattered

FIG_INPUT = {
    7497: [
        parse_prefix("202.127.16.0/20"),
        parse_prefix("202.127.16.0/21"),
        parse_prefix("202.127.16.0/22"),
        parse_prefix("202.127.20.0/22"),
    ]
}


def _snapshot(inputs=None, **kw):
    return CacheSnapshot.build(inputs or FIG_INPUT, session_id=0x1234, **kw)


def test_snapshot_canonicalizes_prefix_input():
    snap = _snapshot()
    assert snap.entries[7497] == (
        AddressBlock(parse_prefix("202.127.16.0/20"), 20),
        AddressBlock(parse_prefix("202.127.16.0/21"), 22),
    )
    assert snap.authorized_map() == {7497: set(FIG_INPUT[7497])}
    assert snap.vrp_total() == 4


def test_payload_pdu_counts_per_scheme():
    snap = _snapshot()
    assert len(payload_pdus(snap, "sroa")) == 4
    assert len(payload_pdus(snap, "troa")) == 2
    assert len(payload_pdus(snap, "mroa")) == 2
    assert len(payload_pdus(snap, "hroa")) == 1
    assert len(payload_pdus(snap, "ahroa")) == 1
    with pytest.raises(ValueError):
        payload_pdus(snap, "xroa")


def test_payload_pdus_split_tall_blocks():
    snap = _snapshot({64500: [AddressBlock(parse_prefix("10.0.0.0/8"), 16)]})
    (pdu,) = payload_pdus(snap, "hroa")
    assert isinstance(pdu, wire.PrefixPdu)
    assert pdu.max_length == 16
    mixed = _snapshot(
        {
            64500: [
                AddressBlock(parse_prefix("10.0.0.0/8"), 16),
                AddressBlock(parse_prefix("192.0.2.0/24"), 24),
            ]
        }
    )
    kinds = [type(p).__name__ for p in payload_pdus(mixed, "hroa")]
    assert kinds == ["PrefixPdu", "SubTreePdu"]
    kinds = [type(p).__name__ for p in payload_pdus(mixed, "ahroa")]
    assert kinds == ["PrefixPdu", "SubTreeAggPdu"]


def test_loopback_fetch_all_schemes():
    snap = _snapshot()
    want = snap.authorized_map()
    sizes = {}
    for scheme in ("mroa", "hroa", "ahroa"):
        with serve(snap, scheme) as server:
            got, report = fetch(server.endpoint)
        assert got == want
        assert report.session_id == 0x1234
        assert report.serial == 1
        assert report.decode_count == 4
        assert report.total_bytes == server.response_bytes
        sizes[scheme] = report.total_bytes
    assert sizes["hroa"] < sizes["mroa"]
    assert sizes["ahroa"] <= sizes["hroa"]


def test_loopback_fetch_synthetic_scattered():
    w = synthetic_scattered(300, seed=4)
    snap = CacheSnapshot.build(w, session_id=7)
    want = snap.authorized_map()
    counts = {}
    for scheme in ("mroa", "hroa", "ahroa"):
        with serve(snap, scheme) as server:
            got, report = fetch(server.endpoint)
        assert got == want
        counts[scheme] = report.pdu_count
    assert counts["mroa"] == 300
    assert counts["hroa"] < counts["mroa"]
    assert counts["ahroa"] < counts["hroa"]


def test_custom_config_round_trip():
    from hroa.bmcodec import HangingLevels
    from hroa.prefix import V4, V6

    cfg = HybridConfig(
        delta_l_threshold=math.inf,
        hanging={
            V4: HangingLevels.multiples_of(4, V4),
            V6: HangingLevels.multiples_of(4, V6),
        },
    )
    # a /18 hangs at level 16, which only the multiples-of-4 profile has
    inputs = {64500: [parse_prefix("10.0.0.0/18")]}
    snap = CacheSnapshot.build(inputs, cfg=cfg, session_id=1)
    with serve(snap, "hroa") as server:
        got, _ = fetch(server.endpoint, cfg=cfg)
    assert got == snap.authorized_map()
    # a client on the default levels must fail loudly, not mis-decode
    with serve(snap, "hroa") as server:
        with pytest.raises(ProtocolError):
            fetch(server.endpoint)


def test_sequential_fetches_share_one_server():
    snap = _snapshot()
    with serve(snap, "hroa") as server:
        for _ in range(3):
            got, _ = fetch(server.endpoint)
            assert got == snap.authorized_map()


def test_server_rejects_non_reset_pdus():
    snap = _snapshot()
    with serve(snap, "hroa") as server:
        with socket.create_connection(server.endpoint, timeout=5) as conn:
            conn.sendall(wire.serialize(wire.CacheResponse(1)))
            reader = wire.PduReader()
            pdus = []
            while not pdus:
                data = conn.recv(4096)
                if not data:
                    break
                pdus.extend(reader.feed(data))
    assert isinstance(pdus[0], wire.ErrorReport)
    assert "reset query" in pdus[0].text
    # and the client surfaces it as a typed failure
    with serve(snap, "hroa") as server:
        with socket.create_connection(server.endpoint, timeout=5) as conn:
            conn.sendall(wire.serialize(wire.EndOfData(1, 1)))
            with pytest.raises(CacheErrorReport):
                _drain_as_fetch(conn)


def _drain_as_fetch(conn):
    reader = wire.PduReader()
    while True:
        data = conn.recv(4096)
        if not data:
            raise TransportError("closed")
        for pdu in reader.feed(data):
            if isinstance(pdu, wire.ErrorReport):
                raise CacheErrorReport(pdu)


def test_fetch_connect_failure():
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    with pytest.raises(TransportError):
        fetch(("127.0.0.1", port), timeout=2)


def test_fetch_requires_cache_response_first():
    srv = socket.socket()
    srv.bind(("127.0.0.1", 0))
    srv.listen(1)

    import threading

    def misbehave():
        conn, _ = srv.accept()
        with conn:
            conn.recv(4096)
            conn.sendall(wire.serialize(wire.EndOfData(1, 1)))

    t = threading.Thread(target=misbehave, daemon=True)
    t.start()
    try:
        with pytest.raises(ProtocolError):
            fetch(srv.getsockname(), timeout=5)
    finally:
        srv.close()
        t.join(timeout=5)


def test_fetch_skips_unknown_pdus():
    snap = _snapshot()
    server = RtrServer(snap, "hroa")
    foreign = wire.serialize(wire.UnknownPdu(1, 77, bytes.fromhex("014d000000000008")))
    # splice an unknown PDU between cache response and payload
    patched = server._response[:8] + foreign + server._response[8:]
    server._response = patched
    try:
        got, report = fetch(server.endpoint)
        assert got == snap.authorized_map()
        assert report.skipped_unknown == 1
    finally:
        server.close()


def test_serve_scheme_whitelist():
    snap = _snapshot()
    for scheme in ("sroa", "troa", "nope"):
        with pytest.raises(ValueError):
            RtrServer(snap, scheme)


def test_token_bucket_paces_throughput():
    bucket = TokenBucket(8000, capacity=800)
    t0 = time.monotonic()
    total = 0
    while total < 4000:
        bucket.consume(800)
        total += 800
    elapsed = time.monotonic() - t0
    assert elapsed >= 0.3  # 4000 bytes minus the initial burst at 8 kB/s
    with pytest.raises(ValueError):
        TokenBucket(0)


def test_bandwidth_shaping_slows_fetch():
    snap = _snapshot()
    with serve(snap, "hroa") as fast_server:
        _, fast = fetch(fast_server.endpoint)
    blob = RtrServer(snap, "hroa").response_bytes
    rate_bps = blob * 8 * 4  # a quarter second of payload, minus the burst
    with serve(snap, "hroa", bandwidth_bps=rate_bps) as slow_server:
        t0 = time.monotonic()
        got, slow = fetch(slow_server.endpoint)
        elapsed = time.monotonic() - t0
    assert got == snap.authorized_map()
    assert elapsed > fast.elapsed


def test_report_json_round_trips():
    import json

    report = SyncReport(pdu_count=3, total_bytes=96, serial=1, session_id=2)
    data = json.loads(report.to_json())
    assert data["pdu_count"] == 3
    assert set(data) == {
        "pdu_count",
        "total_bytes",
        "elapsed",
        "decode_count",
        "serial",
        "session_id",
        "skipped_unknown",
    }

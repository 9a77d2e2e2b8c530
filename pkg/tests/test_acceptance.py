"""Acceptance suite: one test per release criterion.

Each test prints a single `[ACCEPTANCE] criterion N: PASS` line after its
assertions; a failing criterion shows up as a normal pytest failure.
"""

import datetime
import gzip
import os
import random
import subprocess
import sys
import textwrap
import time
import zlib

import pytest
import yaml

from darkscope import cli
from darkscope.analytics import find_peaks
from darkscope.headers import extract_headers_to_csv, iter_csv_records, split_csv
from darkscope.inventory import SamplingPolicy, expected_hours, longest_gap, scan_archive, select_files
from darkscope.metadata import summarize_capture
from darkscope.model import (
    AddressSpaceEpoch,
    CaptureFileName,
    MICROS_PER_HOUR,
    PacketRecord,
    PacketType,
    TcpFlags,
    TimeSeries,
)
from darkscope.pcapio import CorruptionKind, open_capture, parse_headers

from oracles import (
    oracle_count_complete_records,
    oracle_find_peak_indices,
    oracle_longest_gap,
    oracle_summarize,
)
from pcap_fixtures import (
    MAGIC_MICRO,
    MAGIC_NANO,
    build_pcap,
    random_packets,
    tcp_frame,
    write_capture,
)

T0 = 1_717_243_200_000_000


def ok(n, text):
    print(f"\n[ACCEPTANCE] criterion {n}: PASS - {text}")


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """>= 50 synthetic captures: mixed protocols, both magics, both endians."""
    root = tmp_path_factory.mktemp("corpus")
    rng = random.Random(2024)
    paths = []
    sizes = [0, 1, 2, 3, 10_000] + [rng.randrange(0, 500) for _ in range(47)]
    variants = [(MAGIC_MICRO, "<"), (MAGIC_MICRO, ">"), (MAGIC_NANO, "<"), (MAGIC_NANO, ">")]
    day = datetime.date(2024, 6, 1)
    for i, count in enumerate(sizes):
        magic, endian = variants[i % 4]
        name = CaptureFileName(day + datetime.timedelta(days=i // 24), i % 24).render()
        path = write_capture(
            root, name, random_packets(rng, count), magic=magic, endian=endian
        )
        paths.append(path)
    return paths


def test_criterion_1_metadata_oracle_equivalence(corpus):
    t_start = time.monotonic()
    for path in corpus:
        s, corruption = summarize_capture(path)
        assert corruption is None
        expected = oracle_summarize(path)
        assert s.time == expected["time"]
        assert s.file_name.render() == expected["file_name"]
        assert s.file_size_bytes == expected["file_size_bytes"]
        assert s.data_size_bytes == expected["data_size_bytes"]
        assert s.num_packets == expected["num_packets"]
        for f in ("data_bit_rate", "data_byte_rate", "avg_pkt_rate_pps", "avg_pkt_size_bytes"):
            got, want = getattr(s, f), expected[f]
            assert got == want or abs(got - want) <= 1e-9 * abs(want), (path, f)
    elapsed = time.monotonic() - t_start
    assert elapsed < 60, f"took {elapsed:.1f}s"
    ok(1, f"{len(corpus)} captures match the brute-force oracle in {elapsed:.1f}s")


def test_criterion_2_header_fidelity(corpus, tmp_path):
    total_files = 0
    for path in corpus:
        originals = [parse_headers(raw) for raw in open_capture(path)]
        out_csv = tmp_path / (path.name + ".headers.csv")
        extract_headers_to_csv(path, out_csv)
        assert list(iter_csv_records(out_csv)) == originals
        chunks = split_csv(out_csv, 4096)
        assert b"".join(c.read_bytes() for c in chunks) == out_csv.read_bytes()
        total_files += 1
    ok(2, f"bit-exact CSV round-trip and chunk reassembly on {total_files} captures")


def test_criterion_3_corruption_recovery(tmp_path):
    rng = random.Random(99)
    base_packets = random_packets(rng, 40)
    pcap = build_pcap(base_packets)
    fixtures = []  # (bytes, expected_kind, expected_recovered)

    # TRUNCATED_GZIP: compressed stream cut short; recovered = complete
    # records in the decompressable prefix (independent zlib oracle)
    full_gz = gzip.compress(pcap, mtime=0)
    for cut in (len(full_gz) - 5, len(full_gz) // 2, len(full_gz) // 3, 40):
        blob = full_gz[:cut]
        d = zlib.decompressobj(wbits=47)
        try:
            prefix = d.decompress(blob)
        except zlib.error:
            prefix = b""
        fixtures.append((blob, CorruptionKind.TRUNCATED_GZIP, oracle_count_complete_records(prefix)))

    # BAD_GZIP_CRC: flip stored CRC bytes; whole payload is recoverable
    for i in range(4):
        blob = bytearray(full_gz)
        blob[-8 + i] ^= 0xFF
        fixtures.append((bytes(blob), CorruptionKind.BAD_GZIP_CRC, 40))

    # BAD_PCAP_MAGIC: valid gzip, magic overwritten
    for junk in (b"\x00\x00\x00\x00", b"\xff\xff\xff\xff", b"PCAP", b"\xd4\x3c\xb2\xa1"):
        mutated = bytearray(pcap)
        mutated[0:4] = junk
        fixtures.append((gzip.compress(bytes(mutated), mtime=0), CorruptionKind.BAD_PCAP_MAGIC, 0))

    # TRUNCATED_PACKET: valid gzip of a pcap cut mid-record
    for cut in (len(pcap) - 3, len(pcap) - 30, len(pcap) // 2, 30):
        truncated = pcap[:cut]
        fixtures.append(
            (gzip.compress(truncated, mtime=0), CorruptionKind.TRUNCATED_PACKET,
             oracle_count_complete_records(truncated))
        )

    # EMPTY_FILE: zero bytes on disk and empty gzip members
    fixtures.append((b"", CorruptionKind.EMPTY_FILE, 0))
    fixtures.append((gzip.compress(b"", mtime=0), CorruptionKind.EMPTY_FILE, 0))
    fixtures.append((b"", CorruptionKind.EMPTY_FILE, 0))
    fixtures.append((gzip.compress(b"", mtime=0), CorruptionKind.EMPTY_FILE, 0))

    assert len(fixtures) == 20
    for i, (blob, kind, recovered) in enumerate(fixtures):
        path = tmp_path / "2024-06-01.00.pcap.gz"
        path.write_bytes(blob)
        stream = open_capture(path)
        packets = list(stream)
        assert stream.corruption is not None, f"fixture {i}"
        assert stream.corruption.kind is kind, f"fixture {i}: got {stream.corruption.kind}"
        assert len(packets) == recovered, f"fixture {i}"
        assert stream.corruption.packets_recovered == recovered, f"fixture {i}"
    ok(3, "20/20 mutated fixtures classified correctly with exact prefix recovery")


def test_criterion_4_peak_detection():
    rng = random.Random(7)
    month = datetime.date(2000, 1, 1)
    for trial in range(1000):
        n = rng.randrange(3, 51)
        values = [rng.random() * 1000 for _ in range(n)]
        samples = tuple((T0 + i * MICROS_PER_HOUR, v) for i, v in enumerate(values))
        series = TimeSeries("m", "packets", samples)
        got = [p.index for p in find_peaks(series, height_factor=1.05, min_distance=5)]
        assert got == oracle_find_peak_indices(values, 1.05, 5), f"trial {trial}"
    # worked examples
    def mk(values):
        return TimeSeries("m", "packets", tuple((T0 + i * MICROS_PER_HOUR, float(v)) for i, v in enumerate(values)))

    assert [p.index for p in find_peaks(mk([1, 3, 1, 1, 5, 1]))] == [4]
    assert [p.index for p in find_peaks(mk([0, 10, 0, 0, 0, 0, 0, 9, 0]))] == [1, 7]
    ok(4, "1000/1000 random series agree with the reference routine; worked examples hold")


def test_criterion_5_inventory_correctness(tmp_path):
    start = cli._parse_time("2022-01-01")
    end = cli._parse_time("2024-01-01")
    expected = expected_hours(start, end)
    assert len(expected) == 17_520

    rng = random.Random(5)
    hole_idx = set(rng.sample(range(len(expected)), 30))
    hole_idx.update(range(1000, 1007))  # a 7-hour contiguous gap
    holes = {expected[i] for i in hole_idx}
    assert len(holes) == 37

    good = gzip.compress(build_pcap([(T0, tcp_frame("1.2.3.4", "5.6.7.8", 1, 23, 2))]), mtime=0)
    bad_magic_pcap = bytearray(build_pcap([(T0, tcp_frame("1.2.3.4", "5.6.7.8", 1, 23, 2))]))
    bad_magic_pcap[0:4] = b"\x00\x00\x00\x00"
    corrupt_blobs = [
        b"",
        gzip.compress(bytes(bad_magic_pcap), mtime=0),
        b"not gzip at all..................",
        good[:-6],
        gzip.compress(b"\x00\x00", mtime=0),
    ]
    present = [n for n in expected if n not in holes]
    corrupt_names = [present[i] for i in (3, 5000, 9000, 12000, 17000)]
    root = tmp_path / "archive"
    root.mkdir()
    blob_iter = iter(corrupt_blobs)
    for n in present:
        blob = next(blob_iter) if n in corrupt_names else good
        (root / n.render()).write_bytes(blob)

    inv = scan_archive(root, start, end, full_scan=True)
    assert list(inv.missing) == sorted(holes)
    assert sorted(r.file_name for r in inv.corrupted) == sorted(corrupt_names)
    assert sum(inv.per_year_missing.values()) == 37
    assert sum(inv.per_year_corrupted.values()) == 5

    flags = [n in holes for n in expected]
    start_idx, length = oracle_longest_gap(flags)
    first, _last, got_len = longest_gap(inv)
    assert got_len == length
    assert first == expected[start_idx]
    ok(5, "37 holes and 5 corrupted files reported exactly; longest gap matches brute force")


def test_criterion_6_sampling(tmp_path):
    start = cli._parse_time("2024-01-01")
    end = cli._parse_time("2025-01-01")
    # calendar-enumeration oracle
    tuesdays = [
        datetime.date(2024, 1, 1) + datetime.timedelta(days=i)
        for i in range(366)
        if (datetime.date(2024, 1, 1) + datetime.timedelta(days=i)).weekday() == 1
    ]
    assert len(tuesdays) == 53

    holes = {tuesdays[0], tuesdays[25]}
    good = gzip.compress(build_pcap([(T0, tcp_frame("1.2.3.4", "5.6.7.8", 1, 23, 2))]), mtime=0)
    root = tmp_path / "archive"
    root.mkdir()
    for d in tuesdays:
        if d not in holes:
            (root / CaptureFileName(d, 12).render()).write_bytes(good)

    inv = scan_archive(root, start, end)
    result = select_files(inv, SamplingPolicy(weekday=1, hour=12))
    combined = result.selected + result.unavailable
    assert len(combined) == 53
    assert [n.date for n in sorted(combined)] == tuesdays
    assert len(result.selected) == 51
    assert sorted(n.date for n in result.unavailable) == sorted(holes)
    ok(6, "Tuesday-noon policy selects 53 expected files; holes partition correctly")


def test_criterion_7_classification_partition():
    from darkscope.analytics import Classification, classify

    for bits in range(256):
        for ptype in PacketType:
            if ptype is PacketType.TCP:
                rec = PacketRecord(0, ptype, "1.1.1.1", "2.2.2.2", 1, 2, TcpFlags(bits))
            elif ptype is PacketType.UDP:
                rec = PacketRecord(0, ptype, "1.1.1.1", "2.2.2.2", 1, 2)
            else:
                rec = PacketRecord(0, ptype, "1.1.1.1", "2.2.2.2")
            result = classify(rec)
            assert result in Classification
            if ptype is not PacketType.TCP:
                assert result is Classification.OTHER

    def tcp_with(bits):
        return PacketRecord(0, PacketType.TCP, "1.1.1.1", "2.2.2.2", 1, 2, TcpFlags(bits))

    assert classify(tcp_with(0x02)) is Classification.SCAN
    assert classify(tcp_with(0x12)) is Classification.BACKSCATTER
    assert (
        classify(PacketRecord(0, PacketType.UDP, "1.1.1.1", "2.2.2.2", 1, 2))
        is Classification.OTHER
    )
    ok(7, "exactly one class for all 256 flag sets x 4 packet types; anchors hold")


def test_criterion_8_normalization_boundary():
    from darkscope.analytics import normalize

    timeline = [
        AddressSpaceEpoch(datetime.date(2005, 10, 1), datetime.date(2018, 1, 1), 16_777_216, "/8"),
        AddressSpaceEpoch(datetime.date(2018, 1, 1), None, 475_136, "ORION"),
    ]

    def micro(y, m):
        return int(datetime.datetime(y, m, 1, tzinfo=datetime.timezone.utc).timestamp()) * 1_000_000

    samples = tuple((micro(*ym), 1_000_000.0) for ym in [(2017, 10), (2017, 11), (2017, 12), (2018, 1), (2018, 2)])
    out = normalize(TimeSeries("total_packets", "packets", samples), timeline)
    jump = out.samples[3][1] / out.samples[2][1]
    expected = 16_777_216 / 475_136
    assert abs(jump - expected) <= 1e-6 * expected
    ok(8, f"boundary scaling factor {jump:.6f} matches {expected:.6f} within 1e-6")


@pytest.mark.slow
def test_criterion_9_streaming_1gb_under_memory_ceiling(tmp_path):
    # ~1.05 GB compressed: incompressible payloads, stored-gzip level 0
    path = tmp_path / "2024-06-01.12.pcap.gz"
    payload_size = 60_000
    n_packets = 17_600
    header = build_pcap([])[:24]
    with gzip.open(path, "wb", compresslevel=0) as gz:
        gz.write(header)
        import struct

        for i in range(n_packets):
            body = os.urandom(payload_size)
            gz.write(struct.pack("<IIII", 1_717_243_200 + i, 0, len(body), len(body)))
            gz.write(body)
    assert path.stat().st_size >= 1_000_000_000

    child = textwrap.dedent(
        """
        import resource, sys, json
        resource.setrlimit(resource.RLIMIT_AS, (512 * 1024**2, 512 * 1024**2))
        from darkscope.metadata import summarize_capture
        from darkscope.headers import extract_headers_to_csv
        path, out_csv = sys.argv[1], sys.argv[2]
        s, corruption = summarize_capture(path)
        assert corruption is None, corruption
        stats = extract_headers_to_csv(path, out_csv)
        assert stats.corruption is None
        print(json.dumps({"num_packets": s.num_packets, "rows": stats.total_rows,
                          "data_size": s.data_size_bytes}))
        """
    )
    t_start = time.monotonic()
    meta_result = subprocess.run(
        [sys.executable, "-c", child, str(path), str(tmp_path / "out.headers.csv")],
        capture_output=True,
        text=True,
        timeout=600,
    )
    elapsed = time.monotonic() - t_start
    assert meta_result.returncode == 0, meta_result.stderr
    import json

    payload = json.loads(meta_result.stdout)
    assert payload["num_packets"] == n_packets
    assert payload["rows"] == n_packets
    assert payload["data_size"] == n_packets * payload_size
    assert elapsed < 300, f"took {elapsed:.0f}s"
    ok(9, f"{path.stat().st_size / 1e9:.2f} GB capture through both sub-pipelines in {elapsed:.0f}s under a 512 MB ceiling")


@pytest.mark.slow
def test_criterion_10_end_to_end_desk_scale(tmp_path):
    # one synthetic month: 720 hourly files
    archive = tmp_path / "archive"
    archive.mkdir()
    rng = random.Random(1234)
    start = datetime.datetime(2024, 6, 1, tzinfo=datetime.timezone.utc)
    for h in range(720):
        dt = start + datetime.timedelta(hours=h)
        name = CaptureFileName(dt.date(), dt.hour).render()
        t0 = int(dt.timestamp()) * 1_000_000
        write_capture(archive, name, random_packets(rng, 12, t0=t0))
    geo = tmp_path / "geo.csv"
    geo.write_text("prefix,region\n0.0.0.0/1,WEST\n128.0.0.0/1,EAST\n")

    def run_all(run_dir):
        cfg_path = tmp_path / f"{run_dir.name}.yaml"
        cfg_path.write_text(
            yaml.safe_dump(
                {
                    "archive_root": str(archive),
                    "staging_dir": str(run_dir / "staging"),
                    "output_dir": str(run_dir / "out"),
                    "csv_chunk_bytes": 5000,
                    "import_parallelism": 10,
                    "geo_table": str(geo),
                    "address_space_timeline": [
                        {"start": "2018-01-01", "end": None, "dark_address_count": 475136, "label": "ORION"},
                    ],
                }
            )
        )
        window = ["--config", str(cfg_path), "--from", "2024-06-01", "--to", "2024-07-01"]
        assert cli.main(["stage", *window]) == 0
        assert cli.main(["inventory", *window]) == 0
        assert cli.main(["meta", *window]) == 0
        assert cli.main(["headers", *window]) == 0
        assert cli.main(["analyze", *window]) == 0
        assert cli.main(["plotdata", *window]) == 0
        return run_dir / "out" / "plotdata"

    bundle_a = run_all(tmp_path / "run_a")
    bundle_b = run_all(tmp_path / "run_b")

    files_a = sorted(p.name for p in bundle_a.iterdir())
    files_b = sorted(p.name for p in bundle_b.iterdir())
    assert files_a == files_b
    assert "manifest.json" in files_a
    csvs = [f for f in files_a if f.endswith(".csv")]
    assert len(csvs) >= 9  # six panels + peaks/missing per year + rankings
    for name in files_a:
        assert (bundle_a / name).read_bytes() == (bundle_b / name).read_bytes(), name
    ok(10, f"two full pipeline runs produced byte-identical bundles ({len(files_a)} files)")

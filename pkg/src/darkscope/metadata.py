"""Coarse metadata sub-pipeline: one summary row per capture file.

Computes the nine-field summary in a single streaming pass and renders it
as CSV and as time-series line protocol.
"""

import os
from typing import Iterable, Iterator, List, Optional, Tuple

from .model import CaptureFileName, CaptureSummary
from .pcapio import CorruptionReport, open_capture

CSV_COLUMNS = [
    "time",
    "file_name",
    "file_size_bytes",
    "data_size_bytes",
    "num_packets",
    "data_bit_rate",
    "data_byte_rate",
    "avg_pkt_rate_pps",
    "avg_pkt_size_bytes",
]
CSV_HEADER = ",".join(CSV_COLUMNS)

MEASUREMENT = "pcap_metadata"

# Bounded write batches; the ingest API buffers whole requests in memory.
LINE_PROTOCOL_BATCH = 5000


class MissingTimestamp(ValueError):
    """Summary has no latest-packet time; caller must supply the nominal hour."""


def summarize_capture(path) -> Tuple[CaptureSummary, Optional[CorruptionReport]]:
    """Summarize one .pcap.gz file in a single streaming pass.

    Partial (corrupted) files are summarized over the recovered packets
    and the corruption report is returned alongside.
    """
    file_name = CaptureFileName.parse(os.path.basename(os.fspath(path)))
    file_size = os.path.getsize(path)
    stream = open_capture(path, file_name)
    num_packets = 0
    data_size = 0
    first_ts = None
    last_ts = None
    for pkt in stream:
        if first_ts is None:
            first_ts = pkt.timestamp_micro
        last_ts = pkt.timestamp_micro
        num_packets += 1
        data_size += pkt.captured_length
    duration = 0.0
    if num_packets > 1:
        duration = (last_ts - first_ts) / 1_000_000
    if duration > 0:
        byte_rate = data_size / duration
        bit_rate = byte_rate * 8
        pkt_rate = num_packets / duration
    else:
        byte_rate = bit_rate = pkt_rate = 0.0
    avg_size = data_size / num_packets if num_packets > 0 else 0.0
    summary = CaptureSummary(
        time=last_ts,
        file_name=file_name,
        file_size_bytes=file_size,
        data_size_bytes=data_size,
        num_packets=num_packets,
        data_bit_rate=bit_rate,
        data_byte_rate=byte_rate,
        avg_pkt_rate_pps=pkt_rate,
        avg_pkt_size_bytes=avg_size,
    )
    return summary, stream.corruption


def summary_to_csv(s: CaptureSummary) -> str:
    """One CSV data row (no trailing newline); column order per CSV_HEADER."""
    time_cell = "" if s.time is None else str(s.time)
    return ",".join(
        [
            time_cell,
            s.file_name.render(),
            str(s.file_size_bytes),
            str(s.data_size_bytes),
            str(s.num_packets),
            f"{s.data_bit_rate:.6f}",
            f"{s.data_byte_rate:.6f}",
            f"{s.avg_pkt_rate_pps:.6f}",
            f"{s.avg_pkt_size_bytes:.6f}",
        ]
    )


def summary_from_csv(row: str) -> CaptureSummary:
    """Parse a summary_to_csv row back; inverse up to float rendering."""
    cells = row.strip().split(",")
    if len(cells) != len(CSV_COLUMNS):
        raise ValueError(f"expected {len(CSV_COLUMNS)} cells, got {len(cells)}")
    return CaptureSummary(
        time=int(cells[0]) if cells[0] else None,
        file_name=CaptureFileName.parse(cells[1]),
        file_size_bytes=int(cells[2]),
        data_size_bytes=int(cells[3]),
        num_packets=int(cells[4]),
        data_bit_rate=float(cells[5]),
        data_byte_rate=float(cells[6]),
        avg_pkt_rate_pps=float(cells[7]),
        avg_pkt_size_bytes=float(cells[8]),
    )


def _escape_tag(value: str) -> str:
    return value.replace("\\", "\\\\").replace(",", "\\,").replace(" ", "\\ ").replace("=", "\\=")


def summary_to_line_protocol(
    s: CaptureSummary, fallback_time_micro: Optional[int] = None
) -> str:
    """Render one line-protocol point with a nanosecond timestamp.

    Raises MissingTimestamp for empty captures unless fallback_time_micro
    (normally the file's nominal hour) is given, keeping outage hours
    visible as gaps rather than misplaced points.
    """
    t_micro = s.time if s.time is not None else fallback_time_micro
    if t_micro is None:
        raise MissingTimestamp(f"{s.file_name} has no packets and no fallback time")
    fields = ",".join(
        [
            f"file_size_bytes={s.file_size_bytes}i",
            f"data_size_bytes={s.data_size_bytes}i",
            f"num_packets={s.num_packets}i",
            f"data_bit_rate={s.data_bit_rate:.6f}",
            f"data_byte_rate={s.data_byte_rate:.6f}",
            f"avg_pkt_rate_pps={s.avg_pkt_rate_pps:.6f}",
            f"avg_pkt_size_bytes={s.avg_pkt_size_bytes:.6f}",
        ]
    )
    tag = _escape_tag(s.file_name.render())
    return f"{MEASUREMENT},file_name={tag} {fields} {t_micro * 1000}"


def write_line_protocol(lines: Iterable[str], path, batch_size: int = LINE_PROTOCOL_BATCH):
    """Write lines in bounded batches (one flush per batch)."""
    with open(path, "w") as f:
        batch: List[str] = []
        for line in lines:
            batch.append(line)
            if len(batch) >= batch_size:
                f.write("\n".join(batch) + "\n")
                f.flush()
                batch = []
        if batch:
            f.write("\n".join(batch) + "\n")


def iter_batches(lines: Iterable[str], batch_size: int = LINE_PROTOCOL_BATCH) -> Iterator[List[str]]:
    """Group lines into ingest-request batches of at most batch_size."""
    batch: List[str] = []
    for line in lines:
        batch.append(line)
        if len(batch) >= batch_size:
            yield batch
            batch = []
    if batch:
        yield batch

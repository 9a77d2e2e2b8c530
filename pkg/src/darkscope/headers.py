"""Fine sub-pipeline: per-packet header rows, chunked CSV, bulk-load SQL.

The CSV column order matches the extraction query projection:
timestamp_micro, packet_type, src_ip, dst_ip, src_port, dst_port,
tcp_parsed_flags.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

from .model import CaptureFileName, PacketRecord, PacketType
from .pcapio import CorruptionReport, open_capture, parse_headers, parse_tcp_flags, render_tcp_flags

HEADER_COLUMNS = [
    "timestamp_micro",
    "packet_type",
    "src_ip",
    "dst_ip",
    "src_port",
    "dst_port",
    "tcp_parsed_flags",
]
HEADER_LINE = ",".join(HEADER_COLUMNS)

DEFAULT_TABLE = "pcap_drill"


class LineTooLong(ValueError):
    """A single CSV line exceeds the chunk limit."""


@dataclass
class ExtractionStats:
    total_rows: int = 0
    by_type: Dict[PacketType, int] = field(
        default_factory=lambda: {t: 0 for t in PacketType}
    )
    corruption: Optional[CorruptionReport] = None


def record_to_row(rec: PacketRecord) -> List[str]:
    """Seven CSV cells; absent IPs/ports render as empty cells, not 0."""
    return [
        str(rec.timestamp_micro),
        rec.packet_type.value,
        rec.src_ip or "",
        rec.dst_ip or "",
        "" if rec.src_port is None else str(rec.src_port),
        "" if rec.dst_port is None else str(rec.dst_port),
        render_tcp_flags(rec.tcp_flags),
    ]


def row_to_record(cells: List[str]) -> PacketRecord:
    """Inverse of record_to_row."""
    return PacketRecord(
        timestamp_micro=int(cells[0]),
        packet_type=PacketType.from_label(cells[1]),
        src_ip=cells[2] or None,
        dst_ip=cells[3] or None,
        src_port=int(cells[4]) if cells[4] else None,
        dst_port=int(cells[5]) if cells[5] else None,
        tcp_flags=parse_tcp_flags(cells[6]),
    )


def extract_headers(path, sink: Callable[[List[str]], None]) -> ExtractionStats:
    """Stream every packet through the header parser into the row sink.

    Rows are delivered in file order; corruption truncates the output and
    is noted in the stats rather than raised.
    """
    file_name = CaptureFileName.parse(os.path.basename(os.fspath(path)))
    stream = open_capture(path, file_name)
    stats = ExtractionStats()
    for raw in stream:
        rec = parse_headers(raw)
        sink(record_to_row(rec))
        stats.total_rows += 1
        stats.by_type[rec.packet_type] += 1
    stats.corruption = stream.corruption
    return stats


def extract_headers_to_csv(path, out_csv) -> ExtractionStats:
    """extract_headers writing `<name>.headers.csv` with a header line."""
    with open(out_csv, "w") as f:
        f.write(HEADER_LINE + "\n")
        stats = extract_headers(path, lambda row: f.write(",".join(row) + "\n"))
    return stats


def iter_csv_records(csv_path):
    """Yield PacketRecords back out of an extracted headers CSV."""
    with open(csv_path) as f:
        header = f.readline()
        if header.strip() and header.strip() != HEADER_LINE:
            raise ValueError(f"unexpected header in {csv_path}")
        for line in f:
            line = line.rstrip("\n")
            if line:
                yield row_to_record(line.split(","))


def split_csv(path, chunk_limit: int) -> List[Path]:
    """Split a CSV into byte chunks <= chunk_limit on line boundaries.

    Chunks concatenate byte-exactly to the original; only the first chunk
    carries the header line. Empty input yields no chunks.
    """
    path = Path(path)
    chunks: List[Path] = []
    current: List[bytes] = []
    current_size = 0

    def flush():
        nonlocal current, current_size
        if current:
            chunk_path = path.with_name(f"{path.name}.part{len(chunks):03d}")
            chunk_path.write_bytes(b"".join(current))
            chunks.append(chunk_path)
            current = []
            current_size = 0

    with open(path, "rb") as f:
        for line in f:
            if len(line) > chunk_limit:
                raise LineTooLong(f"line of {len(line)} bytes exceeds limit {chunk_limit}")
            if current_size + len(line) > chunk_limit:
                flush()
            current.append(line)
            current_size += len(line)
    flush()
    return chunks


def _escape_sql_path(path: str) -> str:
    return path.replace("\\", "\\\\").replace("'", "\\'")


def bulk_load_statement(chunk_path, table: str, ignore_header: bool) -> str:
    """One LOAD DATA statement for a chunk.

    IGNORE 1 LINES applies only to the chunk that carries the header row;
    applying it to every chunk would silently drop one data row per chunk.
    """
    ignore = "IGNORE 1 LINES\n" if ignore_header else ""
    return (
        f"LOAD DATA LOCAL INFILE '{_escape_sql_path(os.fspath(chunk_path))}'\n"
        f"INTO TABLE {table}\n"
        "FIELDS TERMINATED BY ',' ENCLOSED BY '\\''\n"
        f"{ignore}"
        "(@micro_epoch, packet_type, src_ip, dst_ip, src_port, dst_port, tcp_parsed_flags)\n"
        "SET timestamp_micro = FROM_UNIXTIME(@micro_epoch / 1000000);"
    )


def emit_bulk_load(
    chunks: List,
    table: str = DEFAULT_TABLE,
    parallelism: int = 10,
    script_path=None,
    manifest_path=None,
) -> List[str]:
    """Statements for all chunks plus a wave manifest for parallel import.

    The manifest groups chunk paths into waves of `parallelism` files for
    an external parallel executor; this module performs no imports itself.
    """
    statements = [
        bulk_load_statement(chunk, table, ignore_header=(i == 0))
        for i, chunk in enumerate(chunks)
    ]
    if script_path is not None:
        Path(script_path).write_text("\n\n".join(statements) + ("\n" if statements else ""))
    if manifest_path is not None:
        lines = []
        for wave_start in range(0, len(chunks), parallelism):
            wave = chunks[wave_start : wave_start + parallelism]
            wave_no = wave_start // parallelism
            for chunk in wave:
                lines.append(f"wave{wave_no:03d}\t{os.fspath(chunk)}")
        Path(manifest_path).write_text("\n".join(lines) + ("\n" if lines else ""))
    return statements


def import_waves(chunks: List, parallelism: int) -> List[List]:
    """Group chunks into execution waves of at most `parallelism`."""
    return [chunks[i : i + parallelism] for i in range(0, len(chunks), parallelism)]


def schema_sql(table: str = DEFAULT_TABLE) -> str:
    """One-time DDL: table plus indexes on time, dst_port and src_ip."""
    return (
        f"CREATE TABLE IF NOT EXISTS {table} (\n"
        "    timestamp_micro DATETIME(6) NOT NULL,\n"
        "    packet_type VARCHAR(8) NOT NULL,\n"
        "    src_ip VARCHAR(15),\n"
        "    dst_ip VARCHAR(15),\n"
        "    src_port INT UNSIGNED,\n"
        "    dst_port INT UNSIGNED,\n"
        "    tcp_parsed_flags VARCHAR(39)\n"
        ");\n"
        f"CREATE INDEX idx_{table}_time ON {table} (timestamp_micro);\n"
        f"CREATE INDEX idx_{table}_dst_port ON {table} (dst_port);\n"
        f"CREATE INDEX idx_{table}_src_ip ON {table} (src_ip);\n"
    )

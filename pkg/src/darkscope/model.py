"""Shared domain types for the telescope processing toolkit.

Everything here is immutable after construction and safe to share across
workers. Timestamps are integer microseconds since the Unix epoch, UTC.
"""

import datetime
import enum
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

MICROS_PER_SECOND = 1_000_000
MICROS_PER_HOUR = 3600 * MICROS_PER_SECOND


class MalformedName(ValueError):
    """Capture file name does not match YYYY-MM-DD.HH.pcap.gz exactly."""


class UncoveredTimestamp(ValueError):
    """No address-space epoch covers the requested timestamp."""


_NAME_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})\.(\d{2})\.pcap\.gz$")


@dataclass(frozen=True, order=True)
class CaptureFileName:
    """One hourly capture file, identified by UTC date and hour."""

    date: datetime.date
    hour: int

    def __post_init__(self):
        if not 0 <= self.hour <= 23:
            raise MalformedName(f"hour out of range: {self.hour}")

    def render(self) -> str:
        return f"{self.date:%Y-%m-%d}.{self.hour:02d}.pcap.gz"

    @classmethod
    def parse(cls, name: str) -> "CaptureFileName":
        m = _NAME_RE.match(name)
        if not m:
            raise MalformedName(f"not a capture file name: {name!r}")
        year, month, day, hour = (int(g) for g in m.groups())
        try:
            date = datetime.date(year, month, day)
        except ValueError as exc:
            raise MalformedName(f"invalid date in {name!r}") from exc
        if hour > 23:
            raise MalformedName(f"hour out of range in {name!r}")
        return cls(date, hour)

    def start_micro(self) -> int:
        """Nominal start of the capture hour, micro-epoch UTC."""
        dt = datetime.datetime.combine(
            self.date, datetime.time(self.hour), tzinfo=datetime.timezone.utc
        )
        return int(dt.timestamp()) * MICROS_PER_SECOND

    def __str__(self) -> str:
        return self.render()


class PacketType(enum.Enum):
    TCP = "TCP"
    UDP = "UDP"
    ICMP = "ICMP"
    UNKNOWN = "unknown"

    @classmethod
    def from_label(cls, label: str) -> "PacketType":
        for member in cls:
            if member.value == label:
                return member
        raise ValueError(f"unknown packet type label: {label!r}")


class TcpFlags(enum.IntFlag):
    """TCP header flag bits, least-significant first."""

    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10
    URG = 0x20
    ECE = 0x40
    CWR = 0x80


# Canonical rendering order (header bit order, least-significant first).
FLAG_ORDER = (
    TcpFlags.FIN,
    TcpFlags.SYN,
    TcpFlags.RST,
    TcpFlags.PSH,
    TcpFlags.ACK,
    TcpFlags.URG,
    TcpFlags.ECE,
    TcpFlags.CWR,
)


@dataclass(frozen=True)
class PacketRecord:
    """One parsed packet header.

    Ports are present iff the packet is TCP or UDP; tcp_flags is nonzero
    only for TCP. IPs may be present on UNKNOWN records when the IPv4
    header was readable but the transport layer was not.
    """

    timestamp_micro: int
    packet_type: PacketType
    src_ip: Optional[str] = None
    dst_ip: Optional[str] = None
    src_port: Optional[int] = None
    dst_port: Optional[int] = None
    tcp_flags: TcpFlags = TcpFlags(0)

    def __post_init__(self):
        if self.timestamp_micro < 0:
            raise ValueError("timestamp_micro must be >= 0")
        has_ports = self.packet_type in (PacketType.TCP, PacketType.UDP)
        if has_ports != (self.src_port is not None):
            raise ValueError("src_port present iff packet is TCP/UDP")
        if has_ports != (self.dst_port is not None):
            raise ValueError("dst_port present iff packet is TCP/UDP")
        if self.packet_type is not PacketType.TCP and self.tcp_flags:
            raise ValueError("tcp_flags must be empty for non-TCP packets")


@dataclass(frozen=True)
class CaptureSummary:
    """Per-file coarse metadata; the nine-field feature vector.

    ``time`` is the timestamp of the latest packet; None for empty
    captures, in which case callers substitute the file's nominal hour.
    """

    time: Optional[int]
    file_name: CaptureFileName
    file_size_bytes: int
    data_size_bytes: int
    num_packets: int
    data_bit_rate: float
    data_byte_rate: float
    avg_pkt_rate_pps: float
    avg_pkt_size_bytes: float


@dataclass(frozen=True)
class AddressSpaceEpoch:
    """One span of the telescope's monitored dark address space."""

    start: datetime.date
    end: Optional[datetime.date]  # None = open-ended
    dark_address_count: int
    label: str

    def __post_init__(self):
        if self.dark_address_count <= 0:
            raise ValueError("dark_address_count must be > 0")

    def contains(self, t_micro: int) -> bool:
        start_micro = _date_micro(self.start)
        if t_micro < start_micro:
            return False
        if self.end is None:
            return True
        return t_micro < _date_micro(self.end)


def _date_micro(d: datetime.date) -> int:
    dt = datetime.datetime.combine(d, datetime.time(0), tzinfo=datetime.timezone.utc)
    return int(dt.timestamp()) * MICROS_PER_SECOND


def dark_address_count_for(timeline: list, t_micro: int) -> int:
    """Dark-address count of the epoch containing t_micro."""
    for epoch in timeline:
        if epoch.contains(t_micro):
            return epoch.dark_address_count
    raise UncoveredTimestamp(f"no epoch covers t={t_micro}")


@dataclass(frozen=True)
class TimeSeries:
    """Ordered (bucket_start, value) samples for one measurement."""

    measurement: str
    unit: str
    samples: tuple  # of (bucket_start_micro: int, value: float)

    def __post_init__(self):
        buckets = [b for b, _ in self.samples]
        if any(b2 <= b1 for b1, b2 in zip(buckets, buckets[1:])):
            raise ValueError("bucket starts must be strictly increasing")

    def values(self) -> list:
        return [v for _, v in self.samples]


@dataclass(frozen=True)
class TelescopeConfig:
    """Run configuration loaded from a YAML file."""

    archive_root: Path
    staging_dir: Path
    output_dir: Path
    csv_chunk_bytes: int = 5_000_000
    import_parallelism: int = 10
    timeline: tuple = ()
    geo_table: Optional[Path] = None


def load_config(path) -> TelescopeConfig:
    """Load the key/value + timeline-table config file."""
    with open(path) as f:
        raw = yaml.safe_load(f) or {}
    timeline = []
    for row in raw.get("address_space_timeline", []):
        timeline.append(
            AddressSpaceEpoch(
                start=_as_date(row["start"]),
                end=_as_date(row["end"]) if row.get("end") else None,
                dark_address_count=int(row["dark_address_count"]),
                label=str(row.get("label", "")),
            )
        )
    geo = raw.get("geo_table")
    return TelescopeConfig(
        archive_root=Path(raw["archive_root"]),
        staging_dir=Path(raw["staging_dir"]),
        output_dir=Path(raw["output_dir"]),
        csv_chunk_bytes=int(raw.get("csv_chunk_bytes", 5_000_000)),
        import_parallelism=int(raw.get("import_parallelism", 10)),
        timeline=tuple(timeline),
        geo_table=Path(geo) if geo else None,
    )


def _as_date(value) -> datetime.date:
    if isinstance(value, datetime.date):
        return value
    return datetime.date.fromisoformat(str(value))

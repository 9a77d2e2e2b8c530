"""Longitudinal analytics over pipeline outputs.

Bucketed aggregation into the six coarse measurements, peak detection,
top-N rankings, scan/backscatter classification, geolocation rollup, and
address-space normalization. Everything is pure over immutable inputs.
"""

import datetime
import enum
import ipaddress
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from .model import (
    AddressSpaceEpoch,
    CaptureSummary,
    PacketRecord,
    PacketType,
    TcpFlags,
    TimeSeries,
    dark_address_count_for,
)

# Units eligible for per-dark-address normalization (counts and volumes;
# never per-packet or per-second averages).
NORMALIZABLE_UNITS = {"packets", "GB", "bytes"}


class Bucket(enum.Enum):
    HOUR = "hour"
    DAY = "day"
    MONTH = "month"


class DegenerateSeries(ValueError):
    """Peak detection needs at least 3 samples."""


class NotNormalizable(ValueError):
    """Normalization applies only to count/volume measurements."""


@dataclass(frozen=True)
class TrafficPeak:
    index: int
    bucket_start: int
    value: float
    threshold: float


@dataclass(frozen=True)
class ClassifiedCounts:
    scan: int
    backscatter: int
    other: int


class Classification(enum.Enum):
    SCAN = "SCAN"
    BACKSCATTER = "BACKSCATTER"
    OTHER = "OTHER"


def bucket_start(t_micro: int, bucket: Bucket) -> int:
    dt = datetime.datetime.fromtimestamp(t_micro // 1_000_000, tz=datetime.timezone.utc)
    if bucket is Bucket.HOUR:
        dt = dt.replace(minute=0, second=0, microsecond=0)
    elif bucket is Bucket.DAY:
        dt = dt.replace(hour=0, minute=0, second=0, microsecond=0)
    else:
        dt = dt.replace(day=1, hour=0, minute=0, second=0, microsecond=0)
    return int(dt.timestamp()) * 1_000_000


def aggregate(summaries: List[CaptureSummary], bucket: Bucket) -> Dict[str, TimeSeries]:
    """The six coarse measurements, bucketed by the files' nominal hours.

    Buckets with no present files simply have no sample (a gap), never a
    zero. avg_pkt_size is data-weighted; the two rate averages are plain
    means of the per-file rates.
    """
    if not summaries:
        raise ValueError("summaries must be non-empty")
    groups: Dict[int, List[CaptureSummary]] = {}
    for s in summaries:
        b = bucket_start(s.file_name.start_micro(), bucket)
        groups.setdefault(b, []).append(s)
    series: Dict[str, List[Tuple[int, float]]] = {
        "avg_pkt_rate_Mpps": [],
        "avg_pkt_size_bytes": [],
        "traffic_rate_Mbps": [],
        "total_traffic_GB": [],
        "total_packets": [],
        "compressed_size_GB": [],
    }
    for b in sorted(groups):
        g = groups[b]
        n = len(g)
        total_data = sum(s.data_size_bytes for s in g)
        total_pkts = sum(s.num_packets for s in g)
        series["avg_pkt_rate_Mpps"].append(
            (b, sum(s.avg_pkt_rate_pps for s in g) / n / 1e6)
        )
        series["avg_pkt_size_bytes"].append(
            (b, total_data / total_pkts if total_pkts else 0.0)
        )
        series["traffic_rate_Mbps"].append(
            (b, sum(s.data_bit_rate for s in g) / n / 1e6)
        )
        series["total_traffic_GB"].append((b, total_data / 1e9))
        series["total_packets"].append((b, float(total_pkts)))
        series["compressed_size_GB"].append(
            (b, sum(s.file_size_bytes for s in g) / 1e9)
        )
    units = {
        "avg_pkt_rate_Mpps": "Mpps",
        "avg_pkt_size_bytes": "bytes/packet",
        "traffic_rate_Mbps": "Mbps",
        "total_traffic_GB": "GB",
        "total_packets": "packets",
        "compressed_size_GB": "GB",
    }
    return {
        name: TimeSeries(name, units[name], tuple(samples))
        for name, samples in series.items()
    }


def _local_maxima(values: List[float]) -> List[int]:
    """Strict interior local maxima; plateaus resolve to the floor midpoint."""
    out = []
    n = len(values)
    i = 1
    while i < n - 1:
        if values[i - 1] < values[i]:
            j = i
            while j < n - 1 and values[j + 1] == values[i]:
                j += 1
            if j < n - 1 and values[j + 1] < values[i]:
                out.append((i + j) // 2)
            i = j + 1
        else:
            i += 1
    return out


def find_peaks(
    series: TimeSeries, height_factor: float = 1.05, min_distance: int = 5
) -> List[TrafficPeak]:
    """Local maxima above height_factor x mean, thinned by min_distance.

    Survivors are accepted greedily by descending height (ties to the
    lower index); any candidate within min_distance samples of an accepted
    peak is suppressed. Gaps are absent from the sample list, so distance
    counts present samples.
    """
    if len(series.samples) < 3:
        raise DegenerateSeries(f"{series.measurement}: need >= 3 samples")
    values = series.values()
    threshold = height_factor * (sum(values) / len(values))
    candidates = [i for i in _local_maxima(values) if values[i] >= threshold]
    accepted: List[int] = []
    for i in sorted(candidates, key=lambda i: (-values[i], i)):
        if all(abs(i - a) >= min_distance for a in accepted):
            accepted.append(i)
    return [
        TrafficPeak(i, series.samples[i][0], values[i], threshold)
        for i in sorted(accepted)
    ]


def peaks_per_year(
    series_set: Dict[str, TimeSeries],
    years: Iterable[int],
    height_factor: float = 1.05,
    min_distance: int = 5,
) -> Dict[int, int]:
    """Detected peaks per year, summed across all measurements."""
    counts = {year: 0 for year in years}
    for series in series_set.values():
        try:
            peaks = find_peaks(series, height_factor, min_distance)
        except DegenerateSeries:
            continue
        for p in peaks:
            year = datetime.datetime.fromtimestamp(
                p.bucket_start // 1_000_000, tz=datetime.timezone.utc
            ).year
            if year in counts:
                counts[year] += 1
    return counts


@dataclass(frozen=True)
class PortRanking:
    port: int
    total: int
    per_bucket: tuple  # of (bucket_start, count)


def top_ports(
    rows: Iterable[PacketRecord], n: int, bucket: Bucket = Bucket.MONTH
) -> List[PortRanking]:
    """Top-n destination ports of TCP+UDP rows, ranked by total count."""
    if n < 1:
        raise ValueError("n must be >= 1")
    counts: Dict[int, Dict[int, int]] = {}
    totals: Dict[int, int] = {}
    for rec in rows:
        if rec.dst_port is None:
            continue
        b = bucket_start(rec.timestamp_micro, bucket)
        counts.setdefault(rec.dst_port, {})
        counts[rec.dst_port][b] = counts[rec.dst_port].get(b, 0) + 1
        totals[rec.dst_port] = totals.get(rec.dst_port, 0) + 1
    ranked = sorted(totals, key=lambda p: (-totals[p], p))[:n]
    return [
        PortRanking(p, totals[p], tuple(sorted(counts[p].items()))) for p in ranked
    ]


@dataclass(frozen=True)
class SourceRanking:
    src_ip: str
    total: int


def load_geo_table(path) -> List[Tuple[ipaddress.IPv4Network, str]]:
    """Read a `prefix,region` CSV into a longest-prefix-match table."""
    table = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("prefix,"):
                continue
            prefix, region = line.split(",", 1)
            table.append((ipaddress.ip_network(prefix.strip()), region.strip()))
    return table


def top_sources(
    rows: Iterable[PacketRecord],
    n: int,
    geo: Optional[List[Tuple[ipaddress.IPv4Network, str]]] = None,
) -> Tuple[List[SourceRanking], Optional[Dict[str, int]]]:
    """Top-n source IPs by packet count, with optional region rollup."""
    if n < 1:
        raise ValueError("n must be >= 1")
    totals: Dict[str, int] = {}
    for rec in rows:
        if rec.src_ip is None:
            continue
        totals[rec.src_ip] = totals.get(rec.src_ip, 0) + 1
    ranked = sorted(totals, key=lambda ip: (-totals[ip], ip))[:n]
    rankings = [SourceRanking(ip, totals[ip]) for ip in ranked]
    rollup = None
    if geo is not None:
        rollup = {}
        for r in rankings:
            region = region_for(r.src_ip, geo)
            rollup[region] = rollup.get(region, 0) + r.total
    return rankings, rollup


def region_for(ip: str, geo: List[Tuple[ipaddress.IPv4Network, str]]) -> str:
    """Longest-prefix match; sources outside the table map to 'unknown'."""
    addr = ipaddress.ip_address(ip)
    best = None
    for net, region in geo:
        if addr in net and (best is None or net.prefixlen > best[0]):
            best = (net.prefixlen, region)
    return best[1] if best else "unknown"


def classify(record: PacketRecord) -> Classification:
    """SYN-without-ACK is scanning; SYN+ACK or RST is backscatter.

    Backscatter covers victims' responses to spoofed SYNs, hence SYN-ACK
    and RST. Everything else (other TCP combinations, UDP, ICMP, unknown)
    is OTHER.
    """
    if record.packet_type is not PacketType.TCP:
        return Classification.OTHER
    flags = record.tcp_flags
    if flags & TcpFlags.SYN and not flags & TcpFlags.ACK:
        return Classification.SCAN
    if (flags & TcpFlags.SYN and flags & TcpFlags.ACK) or flags & TcpFlags.RST:
        return Classification.BACKSCATTER
    return Classification.OTHER


def classify_counts(records: Iterable[PacketRecord]) -> ClassifiedCounts:
    scan = backscatter = other = 0
    for rec in records:
        c = classify(rec)
        if c is Classification.SCAN:
            scan += 1
        elif c is Classification.BACKSCATTER:
            backscatter += 1
        else:
            other += 1
    return ClassifiedCounts(scan, backscatter, other)


def normalize(series: TimeSeries, timeline: List[AddressSpaceEpoch]) -> TimeSeries:
    """Divide count/volume samples by the dark-address count of their epoch.

    Buckets straddling an epoch boundary use the epoch containing the
    bucket start. Rate and per-packet measurements are rejected.
    """
    if series.unit not in NORMALIZABLE_UNITS:
        raise NotNormalizable(
            f"{series.measurement} ({series.unit}) is not a count/volume measurement"
        )
    samples = tuple(
        (b, v / dark_address_count_for(timeline, b)) for b, v in series.samples
    )
    return TimeSeries(series.measurement, f"{series.unit}/dark-address", samples)

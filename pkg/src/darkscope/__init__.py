"""Darknet telescope capture processing toolkit.

Coarse per-file metadata and fine per-packet header pipelines over hourly
.pcap.gz archives, with inventory, sampling, and longitudinal analytics.
"""

from .model import (
    AddressSpaceEpoch,
    CaptureFileName,
    CaptureSummary,
    MalformedName,
    PacketRecord,
    PacketType,
    TcpFlags,
    TimeSeries,
    UncoveredTimestamp,
    dark_address_count_for,
    load_config,
)
from .pcapio import (
    CorruptionKind,
    CorruptionReport,
    RawPacket,
    open_capture,
    parse_headers,
    render_tcp_flags,
)

__all__ = [
    "AddressSpaceEpoch",
    "CaptureFileName",
    "CaptureSummary",
    "CorruptionKind",
    "CorruptionReport",
    "MalformedName",
    "PacketRecord",
    "PacketType",
    "RawPacket",
    "TcpFlags",
    "TimeSeries",
    "UncoveredTimestamp",
    "dark_address_count_for",
    "load_config",
    "open_capture",
    "parse_headers",
    "render_tcp_flags",
]

__version__ = "0.1.0"

"""Streaming decompression and parsing of .pcap.gz capture files.

A capture is read in a single pass with bounded memory (the gzip window
plus one packet). Corruption never raises: the stream simply stops and a
CorruptionReport describes what happened, so partial data stays usable.
"""

import enum
import gzip
import os
import struct
import zlib
from dataclasses import dataclass
from typing import Iterator, Optional

from .model import FLAG_ORDER, CaptureFileName, PacketRecord, PacketType, TcpFlags

MAGIC_MICRO = 0xA1B2C3D4
MAGIC_NANO = 0xA1B23C4D

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

ETHERTYPE_IPV4 = 0x0800
IPPROTO_ICMP = 1
IPPROTO_TCP = 6
IPPROTO_UDP = 17


class IoError(OSError):
    """Path unreadable or other I/O failure outside the data itself."""


class CorruptionKind(enum.Enum):
    TRUNCATED_GZIP = "TRUNCATED_GZIP"
    BAD_GZIP_CRC = "BAD_GZIP_CRC"
    BAD_PCAP_MAGIC = "BAD_PCAP_MAGIC"
    TRUNCATED_PACKET = "TRUNCATED_PACKET"
    EMPTY_FILE = "EMPTY_FILE"


@dataclass(frozen=True)
class CorruptionReport:
    file_name: Optional[CaptureFileName]
    kind: CorruptionKind
    byte_offset: Optional[int]
    packets_recovered: int


@dataclass(frozen=True)
class RawPacket:
    timestamp_micro: int
    captured_length: int
    original_length: int
    link_layer_bytes: bytes


class CaptureStream:
    """Single-consumer iterator of RawPackets from one .pcap.gz file.

    After iteration finishes, ``corruption`` is None on clean EOF or a
    CorruptionReport describing the fault that ended the stream.
    """

    def __init__(self, path, file_name: Optional[CaptureFileName] = None):
        self.path = os.fspath(path)
        if file_name is None:
            try:
                file_name = CaptureFileName.parse(os.path.basename(self.path))
            except Exception:
                file_name = None
        self.file_name = file_name
        self.corruption: Optional[CorruptionReport] = None
        self.packets_recovered = 0

    def __iter__(self) -> Iterator[RawPacket]:
        try:
            size = os.path.getsize(self.path)
        except OSError as exc:
            raise IoError(str(exc)) from exc
        if size == 0:
            self._fail(CorruptionKind.EMPTY_FILE, 0)
            return
        try:
            f = gzip.open(self.path, "rb")
        except OSError as exc:
            raise IoError(str(exc)) from exc
        with f:
            offset = 0
            header, err = self._read(f, GLOBAL_HEADER_LEN)
            if err is not None:
                self._fail(err, offset)
                return
            if len(header) == 0:
                self._fail(CorruptionKind.EMPTY_FILE, 0)
                return
            if len(header) < GLOBAL_HEADER_LEN:
                self._fail(CorruptionKind.BAD_PCAP_MAGIC, 0)
                return
            layout = _classify_magic(header[:4])
            if layout is None:
                self._fail(CorruptionKind.BAD_PCAP_MAGIC, 0)
                return
            endian, nanos = layout
            offset += GLOBAL_HEADER_LEN
            rec_struct = struct.Struct(endian + "IIII")
            while True:
                rec, err = self._read(f, RECORD_HEADER_LEN)
                if err is not None:
                    self._fail(err, offset)
                    return
                if len(rec) == 0:
                    return  # clean EOF
                if len(rec) < RECORD_HEADER_LEN:
                    self._fail(CorruptionKind.TRUNCATED_PACKET, offset)
                    return
                ts_sec, ts_frac, incl_len, orig_len = rec_struct.unpack(rec)
                body, err = self._read(f, incl_len)
                if err is not None:
                    self._fail(err, offset)
                    return
                if len(body) < incl_len:
                    self._fail(CorruptionKind.TRUNCATED_PACKET, offset)
                    return
                frac_micro = ts_frac // 1000 if nanos else ts_frac
                yield RawPacket(
                    timestamp_micro=ts_sec * 1_000_000 + frac_micro,
                    captured_length=incl_len,
                    original_length=orig_len,
                    link_layer_bytes=body,
                )
                self.packets_recovered += 1
                offset += RECORD_HEADER_LEN + incl_len

    @staticmethod
    def _read(f, n):
        """Read exactly n decompressed bytes; map gzip faults to kinds."""
        chunks = []
        got = 0
        try:
            while got < n:
                chunk = f.read(min(n - got, 1 << 20))
                if not chunk:
                    break
                chunks.append(chunk)
                got += len(chunk)
        except EOFError:
            return b"".join(chunks), CorruptionKind.TRUNCATED_GZIP
        except (gzip.BadGzipFile, zlib.error) as exc:
            if "crc" in str(exc).lower():
                return b"".join(chunks), CorruptionKind.BAD_GZIP_CRC
            return b"".join(chunks), CorruptionKind.TRUNCATED_GZIP
        return b"".join(chunks), None

    def _fail(self, kind: CorruptionKind, offset: Optional[int]):
        self.corruption = CorruptionReport(
            file_name=self.file_name,
            kind=kind,
            byte_offset=offset,
            packets_recovered=self.packets_recovered,
        )


def open_capture(path, file_name: Optional[CaptureFileName] = None) -> CaptureStream:
    """Open a .pcap.gz file as a streaming single-pass packet source."""
    return CaptureStream(path, file_name)


def _classify_magic(magic4: bytes):
    """Return (struct endian prefix, is_nanosecond) or None."""
    for endian in ("<", ">"):
        (magic,) = struct.unpack(endian + "I", magic4)
        if magic == MAGIC_MICRO:
            return endian, False
        if magic == MAGIC_NANO:
            return endian, True
    return None


def parse_headers(raw: RawPacket) -> PacketRecord:
    """Decode Ethernet -> IPv4 -> TCP/UDP/ICMP; anything else is UNKNOWN.

    Total over arbitrary bytes: unparseable content degrades to UNKNOWN
    with whatever fields were decodable, it never raises.
    """
    data = raw.link_layer_bytes
    ts = max(raw.timestamp_micro, 0)
    if len(data) < 14:
        return PacketRecord(ts, PacketType.UNKNOWN)
    ethertype = int.from_bytes(data[12:14], "big")
    if ethertype != ETHERTYPE_IPV4:
        return PacketRecord(ts, PacketType.UNKNOWN)
    ip = data[14:]
    if len(ip) < 20 or ip[0] >> 4 != 4:
        return PacketRecord(ts, PacketType.UNKNOWN)
    ihl = (ip[0] & 0x0F) * 4
    if ihl < 20 or len(ip) < ihl:
        return PacketRecord(ts, PacketType.UNKNOWN)
    src_ip = ".".join(str(b) for b in ip[12:16])
    dst_ip = ".".join(str(b) for b in ip[16:20])
    proto = ip[9]
    l4 = ip[ihl:]
    if proto == IPPROTO_TCP:
        # Need through the flags byte (offset 13) to call it TCP.
        if len(l4) < 14:
            return PacketRecord(ts, PacketType.UNKNOWN, src_ip, dst_ip)
        return PacketRecord(
            ts,
            PacketType.TCP,
            src_ip,
            dst_ip,
            src_port=int.from_bytes(l4[0:2], "big"),
            dst_port=int.from_bytes(l4[2:4], "big"),
            tcp_flags=TcpFlags(l4[13]),
        )
    if proto == IPPROTO_UDP:
        if len(l4) < 4:
            return PacketRecord(ts, PacketType.UNKNOWN, src_ip, dst_ip)
        return PacketRecord(
            ts,
            PacketType.UDP,
            src_ip,
            dst_ip,
            src_port=int.from_bytes(l4[0:2], "big"),
            dst_port=int.from_bytes(l4[2:4], "big"),
        )
    if proto == IPPROTO_ICMP:
        return PacketRecord(ts, PacketType.ICMP, src_ip, dst_ip)
    return PacketRecord(ts, PacketType.UNKNOWN, src_ip, dst_ip)


def render_tcp_flags(flags: TcpFlags) -> str:
    """Canonical '|'-joined flag string; empty set renders empty."""
    return "|".join(f.name for f in FLAG_ORDER if flags & f)


def parse_tcp_flags(text: str) -> TcpFlags:
    """Inverse of render_tcp_flags."""
    flags = TcpFlags(0)
    if text:
        for part in text.split("|"):
            flags |= TcpFlags[part]
    return flags

"""Archive inventory: missing/corrupted hourly files and sampling.

Scans a directory tree for hourly .pcap.gz captures over an hour-aligned
range, classifies integrity with a cheap probe (full parse optional), and
implements the sampling scheduler used to scope the fine pipeline.
"""

import datetime
import gzip
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .model import MICROS_PER_HOUR, CaptureFileName
from .pcapio import (
    GLOBAL_HEADER_LEN,
    CorruptionKind,
    CorruptionReport,
    IoError,
    _classify_magic,
    open_capture,
)

WEEKDAYS = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]


def expected_hours(range_start: int, range_end: int) -> List[CaptureFileName]:
    """Every hourly capture name in [range_start, range_end), hour-aligned."""
    if range_start % MICROS_PER_HOUR or range_end % MICROS_PER_HOUR:
        raise ValueError("range must be hour-aligned")
    names = []
    t = range_start
    while t < range_end:
        dt = datetime.datetime.fromtimestamp(t // 1_000_000, tz=datetime.timezone.utc)
        names.append(CaptureFileName(dt.date(), dt.hour))
        t += MICROS_PER_HOUR
    return names


@dataclass(frozen=True)
class ArchiveInventory:
    range_start: int
    range_end: int
    present: frozenset
    missing: tuple  # ordered CaptureFileNames
    corrupted: tuple  # CorruptionReports
    per_year_missing: dict
    per_year_corrupted: dict

    def paths(self) -> Dict[CaptureFileName, Path]:
        return dict(self._paths)


@dataclass(frozen=True)
class SamplingPolicy:
    """Which expected hours the fine pipeline should process."""

    weekday: Optional[int] = None  # 0 = Monday .. 6 = Sunday (ISO)
    hour: Optional[int] = None
    week_stride: int = 1
    explicit_dates: Optional[tuple] = None

    def __post_init__(self):
        if (
            self.weekday is None
            and self.hour is None
            and self.explicit_dates is None
        ):
            raise ValueError("at least one selector must be set")
        if self.week_stride < 1:
            raise ValueError("week_stride must be >= 1")


def probe_capture(path, file_name: CaptureFileName) -> Optional[CorruptionReport]:
    """Cheap integrity probe: gzip framing/trailer presence + pcap magic.

    Avoids decompressing whole files; full verification is open_capture.
    """
    try:
        size = os.path.getsize(path)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if size == 0:
        return CorruptionReport(file_name, CorruptionKind.EMPTY_FILE, 0, 0)
    with open(path, "rb") as f:
        head = f.read(2)
    # 18 bytes = minimal gzip member (header + trailer); anything shorter
    # cannot carry the 8-byte CRC/ISIZE trailer.
    if head != b"\x1f\x8b" or size < 18:
        return CorruptionReport(file_name, CorruptionKind.TRUNCATED_GZIP, 0, 0)
    try:
        with gzip.open(path, "rb") as gz:
            header = gz.read(GLOBAL_HEADER_LEN)
    except (EOFError, gzip.BadGzipFile, OSError):
        return CorruptionReport(file_name, CorruptionKind.TRUNCATED_GZIP, 0, 0)
    if len(header) == 0:
        return CorruptionReport(file_name, CorruptionKind.EMPTY_FILE, 0, 0)
    if len(header) < GLOBAL_HEADER_LEN or _classify_magic(header[:4]) is None:
        return CorruptionReport(file_name, CorruptionKind.BAD_PCAP_MAGIC, 0, 0)
    return None


def full_scan_capture(path, file_name: CaptureFileName) -> Optional[CorruptionReport]:
    """Decompress and parse the whole file; authoritative but expensive."""
    stream = open_capture(path, file_name)
    for _ in stream:
        pass
    return stream.corruption


def scan_archive(
    root,
    range_start: int,
    range_end: int,
    full_scan: bool = False,
    probe_workers: int = 8,
) -> ArchiveInventory:
    """Inventory an archive tree over an hour-aligned range."""
    root = Path(root)
    if not root.is_dir():
        raise IoError(f"archive root not readable: {root}")
    on_disk: Dict[CaptureFileName, Path] = {}
    for path in root.rglob("*.pcap.gz"):
        try:
            name = CaptureFileName.parse(path.name)
        except ValueError:
            continue
        on_disk[name] = path
    expected = expected_hours(range_start, range_end)
    present = [n for n in expected if n in on_disk]
    missing = tuple(n for n in expected if n not in on_disk)
    check = full_scan_capture if full_scan else probe_capture
    with ThreadPoolExecutor(max_workers=probe_workers) as pool:
        reports = list(pool.map(lambda n: check(on_disk[n], n), present))
    corrupted = tuple(r for r in reports if r is not None)
    per_year_missing: Dict[int, int] = {}
    per_year_corrupted: Dict[int, int] = {}
    for year in range(
        _year_of(range_start), _year_of(range_end - MICROS_PER_HOUR) + 1
    ):
        per_year_missing[year] = 0
        per_year_corrupted[year] = 0
    for n in missing:
        per_year_missing[n.date.year] += 1
    for r in corrupted:
        per_year_corrupted[r.file_name.date.year] += 1
    inv = ArchiveInventory(
        range_start=range_start,
        range_end=range_end,
        present=frozenset(present),
        missing=missing,
        corrupted=corrupted,
        per_year_missing=per_year_missing,
        per_year_corrupted=per_year_corrupted,
    )
    object.__setattr__(inv, "_paths", dict(on_disk))
    return inv


def _year_of(t_micro: int) -> int:
    return datetime.datetime.fromtimestamp(
        t_micro // 1_000_000, tz=datetime.timezone.utc
    ).year


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple  # present on disk, time order
    unavailable: tuple  # expected by the policy but absent/never captured


def policy_matches(policy: SamplingPolicy, inventory_range, name: CaptureFileName) -> bool:
    if policy.explicit_dates is not None and name.date not in policy.explicit_dates:
        return False
    if policy.weekday is not None and name.date.weekday() != policy.weekday:
        return False
    if policy.hour is not None and name.hour != policy.hour:
        return False
    return True


def select_files(inventory: ArchiveInventory, policy: SamplingPolicy) -> SelectionResult:
    """Expected policy matches within the inventory range, in time order.

    Matches absent from disk go to the unavailable annex so sampling gaps
    stay explicit rather than silently shrinking the sample.
    """
    expected = expected_hours(inventory.range_start, inventory.range_end)
    matches = [
        n for n in expected if policy_matches(policy, (inventory.range_start, inventory.range_end), n)
    ]
    if policy.week_stride > 1:
        weeks = []
        for n in matches:
            week = n.date.isocalendar()[:2]
            if week not in weeks:
                weeks.append(week)
        kept_weeks = set(weeks[:: policy.week_stride])
        matches = [n for n in matches if n.date.isocalendar()[:2] in kept_weeks]
    selected = tuple(n for n in matches if n in inventory.present)
    unavailable = tuple(n for n in matches if n not in inventory.present)
    return SelectionResult(selected=selected, unavailable=unavailable)


def longest_gap(inventory: ArchiveInventory) -> Optional[Tuple[CaptureFileName, CaptureFileName, int]]:
    """Longest contiguous run of missing hours: (first, last, length)."""
    missing = set(inventory.missing)
    expected = expected_hours(inventory.range_start, inventory.range_end)
    best = None
    run_start = None
    run_len = 0
    for i, n in enumerate(expected):
        if n in missing:
            if run_start is None:
                run_start = i
                run_len = 0
            run_len += 1
            if best is None or run_len > best[2]:
                best = (expected[run_start], n, run_len)
        else:
            run_start = None
    return best


def outage_report(inventory: ArchiveInventory) -> Tuple[str, str]:
    """Human-readable report text and outages_per_year.csv content."""
    lines = []
    n_hours = (inventory.range_end - inventory.range_start) // MICROS_PER_HOUR
    lines.append(f"Archive inventory: {n_hours} expected hourly files")
    lines.append(f"  present:   {len(inventory.present)}")
    lines.append(f"  missing:   {len(inventory.missing)}")
    lines.append(f"  corrupted: {len(inventory.corrupted)}")
    gap = longest_gap(inventory)
    if gap:
        first, last, length = gap
        lines.append(f"  longest gap: {length} hours starting {first.render()} ending {last.render()}")
    else:
        lines.append("  longest gap: none")
    if inventory.corrupted:
        hist: Dict[str, int] = {}
        for r in inventory.corrupted:
            hist[r.kind.value] = hist.get(r.kind.value, 0) + 1
        lines.append("  corruption kinds:")
        for kind in sorted(hist):
            lines.append(f"    {kind}: {hist[kind]}")
    lines.append("")
    lines.append("  per-year:")
    for year in sorted(inventory.per_year_missing):
        lines.append(
            f"    {year}: missing={inventory.per_year_missing[year]}"
            f" corrupted={inventory.per_year_corrupted.get(year, 0)}"
        )
    csv_lines = ["year,missing,corrupted"]
    for year in sorted(inventory.per_year_missing):
        csv_lines.append(
            f"{year},{inventory.per_year_missing[year]},{inventory.per_year_corrupted.get(year, 0)}"
        )
    return "\n".join(lines) + "\n", "\n".join(csv_lines) + "\n"

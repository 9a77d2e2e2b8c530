"""Orchestration front-end for the telescope toolkit.

Subcommands: stage, inventory, meta, headers, sample, analyze, plotdata.
All take --config plus an hour-aligned --from/--to window. Files are
processed strictly sequentially by default (archive storage is faster
that way); --parallel exists for fast local disks.

Exit codes: 0 success, 1 usage/config error, 2 I/O failure,
3 completed with corruption or gaps.
"""

import argparse
import datetime
import hashlib
import json
import shutil
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import analytics, figures, headers, inventory, metadata
from .inventory import SamplingPolicy, WEEKDAYS, expected_hours, scan_archive, select_files
from .model import MICROS_PER_HOUR, CaptureFileName, TelescopeConfig, load_config
from .pcapio import IoError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_CORRUPT = 3


class InsufficientSpace(OSError):
    pass


class ChecksumMismatch(OSError):
    pass


def _parse_time(text: str) -> int:
    """YYYY-MM-DD or YYYY-MM-DDTHH -> hour-aligned micro-epoch UTC."""
    if "T" in text:
        dt = datetime.datetime.strptime(text, "%Y-%m-%dT%H")
    else:
        dt = datetime.datetime.strptime(text, "%Y-%m-%d")
    dt = dt.replace(tzinfo=datetime.timezone.utc)
    return int(dt.timestamp()) * 1_000_000


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _range_files(cfg: TelescopeConfig, start: int, end: int, prefer_staging=True):
    """(name, path) for every expected hour in range that exists on disk."""
    out = []
    for name in expected_hours(start, end):
        candidates = []
        if prefer_staging:
            candidates.append(cfg.staging_dir / name.render())
        candidates.append(cfg.archive_root / name.render())
        for p in candidates:
            if p.exists():
                out.append((name, p))
                break
    return out


def stage(cfg: TelescopeConfig, start: int, end: int) -> list:
    """Copy range files from the archive to local staging, verified.

    Already-staged files with matching size are skipped, so re-runs are
    idempotent. Copies are verified by SHA-256 against the source.
    """
    cfg.staging_dir.mkdir(parents=True, exist_ok=True)
    todo = []
    for name, src in _range_files(cfg, start, end, prefer_staging=False):
        dst = cfg.staging_dir / name.render()
        if dst.exists() and dst.stat().st_size == src.stat().st_size:
            continue
        todo.append((src, dst))
    needed = sum(src.stat().st_size for src, _ in todo)
    free = shutil.disk_usage(cfg.staging_dir).free
    if needed > free:
        raise InsufficientSpace(f"need {needed} bytes, {free} free in staging")
    staged = []
    for src, dst in todo:
        shutil.copyfile(src, dst)
        if _sha256(dst) != _sha256(src):
            raise ChecksumMismatch(f"checksum mismatch after staging {dst.name}")
        staged.append(dst)
    return staged


def _process_one(kind: str, name: CaptureFileName, path, cfg: TelescopeConfig, out_dir: Path):
    """One file through one sub-pipeline; returns a report entry."""
    t0 = time.monotonic()
    entry = {"file": name.render(), "status": "success", "rows": 0, "corruption_kind": None}
    if kind == "meta":
        summary, corruption = metadata.summarize_capture(path)
        (out_dir / f"{name.render()}.meta.csv").write_text(
            metadata.CSV_HEADER + "\n" + metadata.summary_to_csv(summary) + "\n"
        )
        line = metadata.summary_to_line_protocol(
            summary, fallback_time_micro=name.start_micro()
        )
        (out_dir / f"{name.render()}.lp").write_text(line + "\n")
        entry["rows"] = summary.num_packets
    else:
        csv_path = out_dir / f"{name.render()}.headers.csv"
        stats = headers.extract_headers_to_csv(path, csv_path)
        chunks = headers.split_csv(csv_path, cfg.csv_chunk_bytes)
        headers.emit_bulk_load(
            chunks,
            parallelism=cfg.import_parallelism,
            script_path=out_dir / f"import_{name.render()}.sql",
        )
        corruption = stats.corruption
        entry["rows"] = stats.total_rows
        entry["chunks"] = len(chunks)
    if corruption is not None:
        entry["status"] = "corrupt"
        entry["corruption_kind"] = corruption.kind.value
    entry["duration_ms"] = int((time.monotonic() - t0) * 1000)
    return entry


def run_pipeline(kind: str, selection, cfg: TelescopeConfig, parallel: int = 1) -> dict:
    """Run META or HEADERS over staged files, sequentially by default.

    A failed file never aborts the run: each gets one retry, then its
    status lands in the report. Files with completed outputs are skipped
    so interrupted runs resume where they left off.
    """
    out_dir = cfg.output_dir / ("meta" if kind == "meta" else "headers")
    out_dir.mkdir(parents=True, exist_ok=True)
    done_marker = (
        (lambda n: (out_dir / f"{n.render()}.lp").exists())
        if kind == "meta"
        else (lambda n: (out_dir / f"{n.render()}.headers.csv").exists())
    )

    def process(item):
        name, path = item
        if done_marker(name):
            return {
                "file": name.render(),
                "status": "skipped",
                "rows": 0,
                "duration_ms": 0,
                "corruption_kind": None,
            }
        try:
            return _process_one(kind, name, path, cfg, out_dir)
        except Exception:
            # one retry per file for flaky archive storage
            try:
                entry = _process_one(kind, name, path, cfg, out_dir)
                entry["retried"] = True
                return entry
            except Exception as exc:
                return {
                    "file": name.render(),
                    "status": "error",
                    "rows": 0,
                    "duration_ms": 0,
                    "corruption_kind": None,
                    "error": str(exc),
                }

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            entries = list(pool.map(process, selection))
    else:
        entries = [process(item) for item in selection]

    if kind == "meta":
        # combined line-protocol file rebuilt from the per-file outputs so
        # re-runs never duplicate points
        lines = []
        for lp in sorted(out_dir.glob("*.lp")):
            if lp.name == "metadata.lp":
                continue
            lines.extend(lp.read_text().splitlines())
        metadata.write_line_protocol(lines, out_dir / "metadata.lp")
    else:
        all_chunks = sorted(out_dir.glob("*.headers.csv.part*"))
        (out_dir / "schema.sql").write_text(headers.schema_sql())
        headers.emit_bulk_load(
            all_chunks,
            parallelism=cfg.import_parallelism,
            manifest_path=out_dir / "import_manifest.txt",
        )

    report = {"kind": kind.upper(), "files": entries}
    (out_dir / "run_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def _load_summaries(cfg: TelescopeConfig, start: int, end: int):
    meta_dir = cfg.output_dir / "meta"
    summaries = []
    for name in expected_hours(start, end):
        p = meta_dir / f"{name.render()}.meta.csv"
        if p.exists():
            row = p.read_text().splitlines()[1]
            summaries.append(metadata.summary_from_csv(row))
    return summaries


def _iter_header_records(cfg: TelescopeConfig, start: int, end: int):
    hdr_dir = cfg.output_dir / "headers"
    for name in expected_hours(start, end):
        p = hdr_dir / f"{name.render()}.headers.csv"
        if p.exists():
            yield from headers.iter_csv_records(p)


def analyze(cfg: TelescopeConfig, start: int, end: int) -> Path:
    """Aggregate, detect peaks and rank over the pipeline outputs."""
    out_dir = cfg.output_dir / "analytics"
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries = _load_summaries(cfg, start, end)
    if summaries:
        series_map = analytics.aggregate(summaries, analytics.Bucket.MONTH)
        for name, series in series_map.items():
            lines = ["bucket_start_micro,value"]
            lines += [f"{b},{v:.6f}" for b, v in series.samples]
            (out_dir / f"series_{name}.csv").write_text("\n".join(lines) + "\n")
        peak_lines = ["measurement,bucket_start_micro,value"]
        for name in sorted(series_map):
            try:
                peaks = analytics.find_peaks(series_map[name])
            except analytics.DegenerateSeries:
                continue
            peak_lines += [f"{name},{p.bucket_start},{p.value:.6f}" for p in peaks]
        (out_dir / "peaks.csv").write_text("\n".join(peak_lines) + "\n")

    ports = analytics.top_ports(_iter_header_records(cfg, start, end), n=10)
    lines = ["dst_port,total"]
    lines += [f"{r.port},{r.total}" for r in ports]
    (out_dir / "top_ports.csv").write_text("\n".join(lines) + "\n")

    geo = analytics.load_geo_table(cfg.geo_table) if cfg.geo_table else None
    sources, rollup = analytics.top_sources(
        _iter_header_records(cfg, start, end), n=10, geo=geo
    )
    lines = ["src_ip,total"]
    lines += [f"{r.src_ip},{r.total}" for r in sources]
    (out_dir / "top_sources.csv").write_text("\n".join(lines) + "\n")
    if rollup is not None:
        lines = ["region,total"]
        lines += [f"{region},{rollup[region]}" for region in sorted(rollup)]
        (out_dir / "heatmap_regions.csv").write_text("\n".join(lines) + "\n")
    return out_dir


def emit_plot_data(cfg: TelescopeConfig, start: int, end: int, render: bool = True) -> Path:
    """Assemble the plot-ready CSV bundle (and figures) from analytics."""
    src = cfg.output_dir / "analytics"
    out = cfg.output_dir / "plotdata"
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"panels": {}, "omitted": []}

    for name, _ in figures.PANELS:
        p = src / f"series_{name}.csv"
        if p.exists():
            shutil.copyfile(p, out / p.name)
            manifest["panels"][f"series_{name}.csv"] = {
                "x": "bucket_start_micro (UTC)",
                "y": name,
            }
        else:
            manifest["omitted"].append(f"series_{name}.csv")

    # peaks per year across all six monthly series
    summaries = _load_summaries(cfg, start, end)
    years = range(
        datetime.datetime.fromtimestamp(start // 1_000_000, tz=datetime.timezone.utc).year,
        datetime.datetime.fromtimestamp(
            (end - MICROS_PER_HOUR) // 1_000_000, tz=datetime.timezone.utc
        ).year
        + 1,
    )
    if summaries:
        series_map = analytics.aggregate(summaries, analytics.Bucket.MONTH)
        per_year = analytics.peaks_per_year(series_map, years)
        lines = ["year,peaks"] + [f"{y},{per_year[y]}" for y in sorted(per_year)]
        (out / "peaks_per_year.csv").write_text("\n".join(lines) + "\n")
        manifest["panels"]["peaks_per_year.csv"] = {"x": "year", "y": "peak count"}
    else:
        manifest["omitted"].append("peaks_per_year.csv")

    inv = scan_archive(cfg.archive_root, start, end)
    lines = ["year,missing"] + [
        f"{y},{inv.per_year_missing[y]}" for y in sorted(inv.per_year_missing)
    ]
    (out / "missing_per_year.csv").write_text("\n".join(lines) + "\n")
    manifest["panels"]["missing_per_year.csv"] = {"x": "year", "y": "missing files"}

    for stem in ("top_ports", "top_sources", "heatmap_regions"):
        p = src / f"{stem}.csv"
        if p.exists():
            shutil.copyfile(p, out / p.name)
            manifest["panels"][p.name] = {"x": stem, "y": "packets"}
        else:
            manifest["omitted"].append(f"{stem}.csv")

    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if render:
        figures.render_figures(out, cfg.output_dir / "figures")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="darkscope", description="Network telescope capture processing toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("stage", "inventory", "meta", "headers", "sample", "analyze", "plotdata"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--from", dest="time_from", required=True, metavar="YYYY-MM-DD[THH]")
        p.add_argument("--to", dest="time_to", required=True, metavar="YYYY-MM-DD[THH]")
        if name in ("meta", "headers"):
            p.add_argument("--parallel", type=int, default=1)
        if name == "inventory":
            p.add_argument("--full-scan", action="store_true")
        if name == "sample":
            p.add_argument("--weekday", choices=WEEKDAYS)
            p.add_argument("--hour", type=int)
            p.add_argument("--week-stride", type=int, default=1)
        if name == "plotdata":
            p.add_argument("--no-figures", action="store_true")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        start = _parse_time(args.time_from)
        end = _parse_time(args.time_to)
        if end <= start:
            print("error: --to must be after --from", file=sys.stderr)
            return EXIT_USAGE
    except (KeyError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "stage":
            staged = stage(cfg, start, end)
            print(f"staged {len(staged)} file(s) to {cfg.staging_dir}")
            return EXIT_OK
        if args.command == "inventory":
            inv = scan_archive(cfg.archive_root, start, end, full_scan=args.full_scan)
            text, csv_text = inventory.outage_report(inv)
            out_dir = cfg.output_dir / "inventory"
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "report.txt").write_text(text)
            (out_dir / "outages_per_year.csv").write_text(csv_text)
            print(text, end="")
            return EXIT_CORRUPT if (inv.missing or inv.corrupted) else EXIT_OK
        if args.command in ("meta", "headers"):
            selection = _range_files(cfg, start, end)
            report = run_pipeline(args.command, selection, cfg, parallel=args.parallel)
            n_bad = sum(1 for e in report["files"] if e["status"] in ("corrupt", "error"))
            print(f"{args.command}: {len(report['files'])} file(s), {n_bad} with problems")
            return EXIT_CORRUPT if n_bad else EXIT_OK
        if args.command == "sample":
            inv = scan_archive(cfg.archive_root, start, end)
            policy = SamplingPolicy(
                weekday=WEEKDAYS.index(args.weekday) if args.weekday else None,
                hour=args.hour,
                week_stride=args.week_stride,
            )
            result = select_files(inv, policy)
            out_dir = cfg.output_dir / "sample"
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "selected.txt").write_text(
                "".join(n.render() + "\n" for n in result.selected)
            )
            (out_dir / "unavailable.txt").write_text(
                "".join(n.render() + "\n" for n in result.unavailable)
            )
            print(f"selected {len(result.selected)}, unavailable {len(result.unavailable)}")
            return EXIT_OK
        if args.command == "analyze":
            out_dir = analyze(cfg, start, end)
            print(f"analytics written to {out_dir}")
            return EXIT_OK
        if args.command == "plotdata":
            out = emit_plot_data(cfg, start, end, render=not args.no_figures)
            print(f"plot data written to {out}")
            return EXIT_OK
    except (InsufficientSpace, ChecksumMismatch, IoError, OSError) as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

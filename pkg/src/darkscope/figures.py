"""Render plot-data CSVs to figure files.

Reads the CSV bundle written by the plotdata step and draws the standard
dashboard panels with matplotlib. Output is deterministic: no timestamps
or software metadata are embedded in the PNGs.
"""

import csv
import datetime
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.dates as mdates  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402

SAVE_KW = dict(dpi=110, metadata={"Software": None})

PANELS = [
    ("avg_pkt_rate_Mpps", "avg packet rate [Mpps]"),
    ("avg_pkt_size_bytes", "avg packet size [bytes]"),
    ("traffic_rate_Mbps", "traffic rate [Mbps]"),
    ("total_traffic_GB", "total traffic [GB]"),
    ("total_packets", "packets"),
    ("compressed_size_GB", "compressed size [GB]"),
]


def _read_series_csv(path):
    xs, ys = [], []
    with open(path) as f:
        reader = csv.reader(f)
        next(reader, None)
        for row in reader:
            t = datetime.datetime.fromtimestamp(
                int(row[0]) // 1_000_000, tz=datetime.timezone.utc
            )
            xs.append(t)
            ys.append(float(row[1]))
    return xs, ys


def _read_pairs(path):
    keys, vals = [], []
    with open(path) as f:
        reader = csv.reader(f)
        next(reader, None)
        for row in reader:
            keys.append(row[0])
            vals.append(float(row[1]))
    return keys, vals


def render_figures(plotdata_dir, figures_dir) -> list:
    """Draw one PNG per available CSV group; returns written paths."""
    plotdata_dir = Path(plotdata_dir)
    figures_dir = Path(figures_dir)
    figures_dir.mkdir(parents=True, exist_ok=True)
    written = []

    panel_files = [
        (name, label, plotdata_dir / f"series_{name}.csv") for name, label in PANELS
    ]
    available = [(n, l, p) for n, l, p in panel_files if p.exists()]
    if available:
        fig, axes = plt.subplots(3, 2, figsize=(11, 9), sharex=True)
        for ax in axes.flat:
            ax.set_visible(False)
        for ax, (name, label, path) in zip(axes.flat, available):
            ax.set_visible(True)
            xs, ys = _read_series_csv(path)
            ax.plot(xs, ys, lw=0.9)
            ax.set_ylabel(label, fontsize=8)
            ax.grid(alpha=0.3)
            ax.xaxis.set_major_formatter(mdates.DateFormatter("%Y-%m"))
            ax.tick_params(labelsize=7)
        fig.autofmt_xdate()
        fig.suptitle("Telescope traffic measurements")
        out = figures_dir / "measurements.png"
        fig.savefig(out, **SAVE_KW)
        plt.close(fig)
        written.append(out)

    for stem, xlabel, ylabel, title in [
        ("peaks_per_year", "year", "peaks", "Traffic peaks per year"),
        ("missing_per_year", "year", "missing files", "Missing files per year"),
    ]:
        path = plotdata_dir / f"{stem}.csv"
        if path.exists():
            keys, vals = _read_pairs(path)
            fig, ax = plt.subplots(figsize=(8, 4))
            ax.bar(keys, vals, color="steelblue")
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            ax.set_title(title)
            ax.tick_params(axis="x", rotation=45, labelsize=8)
            fig.tight_layout()
            out = figures_dir / f"{stem}.png"
            fig.savefig(out, **SAVE_KW)
            plt.close(fig)
            written.append(out)

    for stem, title in [
        ("top_ports", "Top destination ports"),
        ("top_sources", "Top source IPs"),
        ("heatmap_regions", "Traffic by region (top sources)"),
    ]:
        path = plotdata_dir / f"{stem}.csv"
        if path.exists():
            keys, vals = _read_pairs(path)
            fig, ax = plt.subplots(figsize=(8, 4))
            ax.barh(keys[::-1], vals[::-1], color="darkred")
            ax.set_xlabel("packets")
            ax.set_title(title)
            ax.tick_params(labelsize=8)
            fig.tight_layout()
            out = figures_dir / f"{stem}.png"
            fig.savefig(out, **SAVE_KW)
            plt.close(fig)
            written.append(out)

    return written

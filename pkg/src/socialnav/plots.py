"""Minimal SVG/CSV emitters for trajectory overlays and deviation spreads.

Plain hand-rolled SVG keeps the artifact dependency-free; these are batch
outputs, not an interactive UI.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]

_SIZE = 640
_MARGIN = 50


def _svg_open(digest: str, width: int = _SIZE, height: int = _SIZE) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<!-- config_digest: {digest} -->",
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]


def _world_mapper(all_xy: np.ndarray):
    lo = all_xy.min(axis=0)
    hi = all_xy.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    scale = (_SIZE - 2 * _MARGIN) / span.max()
    mid = 0.5 * (lo + hi)

    def to_px(x: float, y: float) -> tuple[float, float]:
        # y axis flipped: SVG y grows downward.
        px = _SIZE / 2 + (x - mid[0]) * scale
        py = _SIZE / 2 - (y - mid[1]) * scale
        return px, py

    return to_px


def trajectory_overlay_svg(
    named_trajectories: list[tuple[str, list[tuple[float, float, float]]]],
    out_path: str | Path,
    digest: str = "",
) -> None:
    """Overlay of (t, x, y) trajectories, one polyline per method/episode."""
    if not named_trajectories or all(not tr for _, tr in named_trajectories):
        raise ValueError("no trajectory samples to plot")
    pts = np.array([(x, y) for _, tr in named_trajectories for _, x, y in tr])
    to_px = _world_mapper(pts)
    lines = _svg_open(digest)
    seen_labels: list[str] = []
    for i, (label, traj) in enumerate(named_trajectories):
        if not traj:
            continue
        color = PALETTE[(seen_labels.index(label) if label in seen_labels
                         else len(seen_labels)) % len(PALETTE)]
        if label not in seen_labels:
            seen_labels.append(label)
        coords = " ".join(f"{px:.2f},{py:.2f}" for px, py in (to_px(x, y) for _, x, y in traj))
        lines.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        sx, sy = to_px(traj[0][1], traj[0][2])
        gx, gy = to_px(traj[-1][1], traj[-1][2])
        lines.append(f'<circle cx="{sx:.2f}" cy="{sy:.2f}" r="3" fill="{color}"/>')
        lines.append(f'<circle cx="{gx:.2f}" cy="{gy:.2f}" r="3" fill="none" stroke="{color}"/>')
    for i, label in enumerate(seen_labels):
        color = PALETTE[i % len(PALETTE)]
        y = 20 + 16 * i
        lines.append(f'<rect x="12" y="{y - 9}" width="10" height="10" fill="{color}"/>')
        lines.append(f'<text x="28" y="{y}" font-size="12" font-family="sans-serif">{label}</text>')
    lines.append("</svg>")
    Path(out_path).write_text("\n".join(lines) + "\n")


def deviation_csv(rows: list[dict], out_path: str | Path, digest: str = "") -> None:
    """CSV of per-sample deviations: one data row per trajectory sample."""
    with open(out_path, "w", newline="") as fh:
        fh.write(f"# config_digest: {digest}\n")
        writer = csv.DictWriter(fh, fieldnames=["method", "episode", "sample", "deviation"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def deviation_spread_svg(
    per_method: dict[str, list[float]],
    out_path: str | Path,
    digest: str = "",
) -> None:
    """Box + strip summary of deviation distributions, one column per method."""
    if not per_method or all(len(v) == 0 for v in per_method.values()):
        raise ValueError("no deviation samples to plot")
    vmax = max(max(v) for v in per_method.values() if v)
    vmax = max(vmax, 1e-9)
    n = len(per_method)
    lines = _svg_open(digest)

    def ypix(v: float) -> float:
        return _SIZE - _MARGIN - (v / vmax) * (_SIZE - 2 * _MARGIN)

    slot = (_SIZE - 2 * _MARGIN) / n
    for i, (label, values) in enumerate(per_method.items()):
        cx = _MARGIN + slot * (i + 0.5)
        color = PALETTE[i % len(PALETTE)]
        arr = np.array(values, dtype=float)
        if arr.size:
            q0, q1, q2, q3, q4 = np.percentile(arr, [0, 25, 50, 75, 100])
            half = min(30.0, slot * 0.3)
            lines.append(f'<line x1="{cx:.1f}" y1="{ypix(q0):.1f}" x2="{cx:.1f}" '
                         f'y2="{ypix(q4):.1f}" stroke="{color}"/>')
            lines.append(f'<rect x="{cx - half:.1f}" y="{ypix(q3):.1f}" width="{2 * half:.1f}" '
                         f'height="{max(ypix(q1) - ypix(q3), 0.5):.1f}" '
                         f'fill="{color}" fill-opacity="0.25" stroke="{color}"/>')
            lines.append(f'<line x1="{cx - half:.1f}" y1="{ypix(q2):.1f}" x2="{cx + half:.1f}" '
                         f'y2="{ypix(q2):.1f}" stroke="{color}" stroke-width="2"/>')
            for j, v in enumerate(arr):
                jitter = ((j * 2654435761) % 41 - 20) / 20.0 * min(20.0, slot * 0.2)
                lines.append(f'<circle cx="{cx + jitter:.1f}" cy="{ypix(float(v)):.1f}" '
                             f'r="2" fill="{color}" fill-opacity="0.6"/>')
        lines.append(f'<text x="{cx:.1f}" y="{_SIZE - _MARGIN / 3:.1f}" font-size="12" '
                     f'font-family="sans-serif" text-anchor="middle">{label}</text>')
    lines.append(f'<text x="{_MARGIN / 4:.1f}" y="{_MARGIN:.1f}" font-size="11" '
                 f'font-family="sans-serif">{vmax:.3g} m</text>')
    lines.append("</svg>")
    Path(out_path).write_text("\n".join(lines) + "\n")

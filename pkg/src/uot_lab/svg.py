"""Minimal SVG 1.1 writers: point clouds, signal overlays and loss curves."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["scatter_svg", "overlay_svg", "curve_svg"]

W, H, PAD = 480, 480, 40
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _header(width, height, title):
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="13">{escape(title)}</text>',
    ]


def _scaler(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (np.asarray(v) - lo) / span * (b - a)


def _legend(names, width):
    out = []
    for i, name in enumerate(names):
        y = 36 + 14 * i
        out.append(f'<rect x="{width - 130}" y="{y - 8}" width="9" height="9" fill="{PALETTE[i % len(PALETTE)]}"/>')
        out.append(f'<text x="{width - 116}" y="{y}" font-family="sans-serif" font-size="11">{escape(name)}</text>')
    return out


def _frame(width, height):
    return f'<rect x="{PAD}" y="{PAD}" width="{width - 2 * PAD}" height="{height - 2 * PAD}" fill="none" stroke="#999"/>'


def _write(path, lines):
    path = Path(path)
    path.write_text("\n".join(lines + ["</svg>"]) + "\n")
    return path


def scatter_svg(path, clouds: dict, title="", max_points=600, radius=2.0):
    """Scatter of named 2-D point clouds (first two coordinates)."""
    arrays = {k: np.asarray(v, dtype=np.float64)[:max_points, :2] for k, v in clouds.items()}
    allpts = np.vstack(list(arrays.values()))
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    margin = 0.05 * np.maximum(hi - lo, 1e-9)
    sx = _scaler(lo[0] - margin[0], hi[0] + margin[0], PAD, W - PAD)
    sy = _scaler(lo[1] - margin[1], hi[1] + margin[1], H - PAD, PAD)
    lines = _header(W, H, title) + [_frame(W, H)]
    for i, pts in enumerate(arrays.values()):
        color = PALETTE[i % len(PALETTE)]
        lines.append(f'<g fill="{color}" fill-opacity="0.55">')
        for x, y in zip(sx(pts[:, 0]), sy(pts[:, 1])):
            lines.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius}"/>')
        lines.append("</g>")
    lines += _legend(list(arrays), W)
    return _write(path, lines)


def _polyline(xs, ys, color, width=1.5, dash=None):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{extra}/>'


def overlay_svg(path, signals: dict, title="", n_show=3):
    """Stacked panels overlaying named 1-D signals; one panel per sample."""
    arrays = {k: np.atleast_2d(np.asarray(v, dtype=np.float64)) for k, v in signals.items()}
    n_show = min(n_show, *(a.shape[0] for a in arrays.values()))
    panel_h = 140
    height = PAD + panel_h * n_show + 10
    lo = min(a[:n_show].min() for a in arrays.values())
    hi = max(a[:n_show].max() for a in arrays.values())
    lines = _header(W, height, title)
    for p in range(n_show):
        top = PAD + p * panel_h
        lines.append(f'<rect x="{PAD}" y="{top}" width="{W - 2 * PAD}" height="{panel_h - 12}" fill="none" stroke="#999"/>')
        sy = _scaler(lo, hi, top + panel_h - 16, top + 4)
        for i, arr in enumerate(arrays.values()):
            sig = arr[p]
            sx = _scaler(0, len(sig) - 1, PAD + 4, W - PAD - 4)
            lines.append(_polyline(sx(np.arange(len(sig))), sy(sig), PALETTE[i % len(PALETTE)], dash="4,2" if i == 1 else None))
    lines += _legend(list(arrays), W)
    return _write(path, lines)


def curve_svg(path, xs, series: dict, title=""):
    """Line plot of named series against a shared x axis."""
    xs = np.asarray(xs, dtype=np.float64)
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in series.items()}
    finite = np.concatenate([a[np.isfinite(a)] for a in arrays.values()] + [np.zeros(1)])
    sx = _scaler(xs.min() if xs.size else 0, xs.max() if xs.size else 1, PAD, W - PAD)
    sy = _scaler(finite.min(), finite.max(), H - PAD, PAD)
    lines = _header(W, H, title) + [_frame(W, H)]
    for i, arr in enumerate(arrays.values()):
        ok = np.isfinite(arr)
        lines.append(_polyline(sx(xs[ok]), sy(arr[ok]), PALETTE[i % len(PALETTE)], width=1.0))
    lines += _legend(list(arrays), W)
    return _write(path, lines)

"""Run manifests and minimal SVG power plots."""

from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

MANIFEST_SCHEMA = 1
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str
    runtime_seconds: float = 0.0
    outputs: dict = field(default_factory=dict)
    python: str = field(default_factory=platform.python_version)
    schema_version: int = MANIFEST_SCHEMA

    def add_output(self, path) -> None:
        self.outputs[str(path)] = sha256(path)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        if data.get("schema_version") != MANIFEST_SCHEMA:
            raise ValueError(f"unsupported manifest schema {data.get('schema_version')!r}")
        return cls(**data)


def _ticks(lo, hi, count=5):
    return np.linspace(lo, hi, count)


def power_svg(curves, title: str, path=None, alpha: float = 0.05, width: int = 520, height: int = 360) -> str:
    """Rejection rate against sample size with 95% CI bars and an alpha line.

    ``curves`` is a sequence of ``(label, PowerCurve)`` pairs.
    """
    left, right, top, bottom = 60, 150, 40, 50
    pw, ph = width - left - right, height - top - bottom
    sizes = [n for _, c in curves for n in c.sizes]
    xlo, xhi = min(sizes), max(sizes)
    if xhi == xlo:
        xlo, xhi = xlo - 1, xhi + 1

    def sx(n):
        return left + (n - xlo) / (xhi - xlo) * pw

    def sy(rate):
        return top + (1 - rate) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(0, 1, 6):
        y = sy(t)
        out.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 7}" y="{y + 4:.1f}" text-anchor="end">{t:.1f}</text>')
    for n in sorted(set(sizes)):
        x = sx(n)
        out.append(f'<line x1="{x:.1f}" y1="{top + ph}" x2="{x:.1f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{top + ph + 16}" text-anchor="middle">{n}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">number of vertices</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">rejection rate</text>')
    ya = sy(alpha)
    out.append(f'<line x1="{left}" y1="{ya:.1f}" x2="{left + pw}" y2="{ya:.1f}" stroke="gray" '
               f'stroke-dasharray="5,4"/>')

    for k, (label, curve) in enumerate(curves):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{sx(n):.1f},{sy(r):.1f}" for n, r in zip(curve.sizes, curve.rates))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for n, r, (lo, hi) in zip(curve.sizes, curve.rates, curve.ci):
            x = sx(n)
            out.append(f'<line x1="{x:.1f}" y1="{sy(lo):.1f}" x2="{x:.1f}" y2="{sy(hi):.1f}" stroke="{color}"/>')
            out.append(f'<circle cx="{x:.1f}" cy="{sy(r):.1f}" r="2.5" fill="{color}"/>')
        ly = top + 12 + 16 * k
        lx = left + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{escape(label)}</text>')
    ly = top + 12 + 16 * len(curves)
    out.append(f'<line x1="{left + pw + 12}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" stroke="gray" '
               f'stroke-dasharray="5,4"/>')
    out.append(f'<text x="{left + pw + 36}" y="{ly}">alpha = {alpha:g}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text

"""Deterministic SVG renderings of explanations: bar, waterfall and scatter."""

from __future__ import annotations

import numpy as np

__all__ = ["bar_svg", "waterfall_svg", "scatter_svg", "PlotError"]

WIDTH = 720
BAR_HEIGHT = 24
BAR_GAP = 8
MARGIN_LEFT = 160
MARGIN_TOP = 40
MARGIN_BOTTOM = 30
POSITIVE = "#2a7de1"
NEGATIVE = "#e1572a"
NEUTRAL = "#888888"


class PlotError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(round(float(x), 10))


def _svg(width: int, height: int, body: list[str], title: str) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="12">',
        f'<title>{title}</title>',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    return "\n".join(head + body + ["</svg>"])


def _hbar(y: float, x0: float, x1: float, color: str, label: str, value: float) -> list[str]:
    left, right = (x0, x1) if x1 >= x0 else (x1, x0)
    width = max(right - left, 0.5)
    return [
        f'<text x="{MARGIN_LEFT - 8}" y="{y + BAR_HEIGHT * 0.7}" text-anchor="end">{label}</text>',
        f'<rect x="{_fmt(left)}" y="{_fmt(y)}" width="{_fmt(width)}" height="{BAR_HEIGHT}" fill="{color}"/>',
        f'<text x="{_fmt(right + 6)}" y="{y + BAR_HEIGHT * 0.7}">{_fmt(value)}</text>',
    ]


def _scale(values: np.ndarray):
    lo = min(0.0, float(np.min(values)))
    hi = max(0.0, float(np.max(values)))
    if hi == lo:
        hi = lo + 1.0
    span = WIDTH - MARGIN_LEFT - 90
    return lambda v: MARGIN_LEFT + (float(v) - lo) / (hi - lo) * span


def bar_svg(feature_names, phi, top_k: int | None = None) -> str:
    """Global importance bars: mean |phi| per feature, largest first.

    With ``top_k`` set, the remaining features collapse into one aggregated
    remainder bar whose value is the sum of their mean absolute contributions.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    if phi.shape[1] != len(feature_names):
        raise PlotError(f"phi has {phi.shape[1]} columns for {len(feature_names)} features")
    importance = np.abs(phi).mean(axis=0)
    order = np.argsort(-importance, kind="stable")
    entries = [(feature_names[j], importance[j]) for j in order]
    if top_k is not None and 0 < top_k < len(entries):
        rest = entries[top_k:]
        entries = entries[:top_k] + [(f"other ({len(rest)} features)", sum(v for _, v in rest))]
    scale = _scale(np.array([v for _, v in entries]))
    body = []
    y = MARGIN_TOP
    for label, value in entries:
        body += _hbar(y, scale(0.0), scale(value), POSITIVE, label, value)
        y += BAR_HEIGHT + BAR_GAP
    return _svg(WIDTH, y + MARGIN_BOTTOM, body, "mean(|contribution|) per feature")


def waterfall_svg(feature_names, phi_row, phi0: float) -> str:
    """Cumulative walk from the baseline to the prediction.

    Contributions appear in increasing absolute value, starting at the
    baseline bar; the final bar lands on the prediction.
    """
    phi_row = np.asarray(phi_row, dtype=float).ravel()
    if phi_row.size != len(feature_names):
        raise PlotError(f"phi row has {phi_row.size} entries for {len(feature_names)} features")
    order = np.argsort(np.abs(phi_row), kind="stable")
    levels = [float(phi0)]
    for j in order:
        levels.append(levels[-1] + float(phi_row[j]))
    scale = _scale(np.array(levels))
    body = []
    y = MARGIN_TOP
    body += _hbar(y, scale(0.0), scale(phi0), NEUTRAL, "baseline", phi0)
    y += BAR_HEIGHT + BAR_GAP
    for step, j in enumerate(order):
        color = POSITIVE if phi_row[j] >= 0 else NEGATIVE
        body += _hbar(y, scale(levels[step]), scale(levels[step + 1]), color,
                      feature_names[j], float(phi_row[j]))
        y += BAR_HEIGHT + BAR_GAP
    body += _hbar(y, scale(0.0), scale(levels[-1]), NEUTRAL, "prediction", levels[-1])
    y += BAR_HEIGHT + BAR_GAP
    return _svg(WIDTH, y + MARGIN_BOTTOM, body, "contribution walk from baseline to prediction")


def scatter_svg(feature_name: str, feature_values, phi_values) -> str:
    """One point per explicand: feature value against its contribution."""
    x = np.asarray(feature_values, dtype=float).ravel()
    yv = np.asarray(phi_values, dtype=float).ravel()
    if x.size != yv.size:
        raise PlotError(f"{x.size} feature values but {yv.size} contributions")
    if x.size == 0:
        raise PlotError("nothing to plot: no explicands")
    height = 360
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = min(0.0, float(yv.min())), max(0.0, float(yv.max()))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 50

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (WIDTH - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad - MARGIN_TOP)

    body = [
        f'<line x1="{pad}" y1="{_fmt(sy(0.0))}" x2="{WIDTH - pad}" y2="{_fmt(sy(0.0))}" stroke="#cccccc"/>',
        f'<text x="{WIDTH / 2}" y="{height - 12}" text-anchor="middle">{feature_name}</text>',
    ]
    for xi, yi in zip(x, yv):
        body.append(f'<circle cx="{_fmt(sx(xi))}" cy="{_fmt(sy(yi))}" r="3" fill="{POSITIVE}"/>')
    return _svg(WIDTH, height, body, f"contribution of {feature_name} per explicand")

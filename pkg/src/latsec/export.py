"""CSV and SVG output for traces.

Both writers are deterministic: the same trace gives the same bytes. Files
are written to a temporary sibling and renamed into place, so a reader
never sees a half-written file.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .sim import Trace

STATE_CHANNELS = ("vy", "r_state")
_BASE_COLUMNS = ("t", "vy_true", "r_true", "vy_nom", "r_nom",
                 "mz_nom", "mz_inj", "delta_nom", "delta_inj")


class UnknownChannel(KeyError):
    pass


def _fmt(v: float) -> str:
    # '%.17g' round-trips doubles; adding 0.0 folds -0.0 into 0.0
    return "%.17g" % (float(v) + 0.0)


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_header(channels: Sequence[str]) -> list[str]:
    cols = list(_BASE_COLUMNS)
    for ch in channels:
        cols += [f"y_true_{ch}", f"y_recv_{ch}", f"y_nom_{ch}"]
    return cols + ["clipped"]


def trace_to_csv(trace: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(trace.channels))
    for k in range(len(trace)):
        row = [trace.t[k], *trace.x_true[k], *trace.x_nominal[k],
               trace.u_nominal[k, 0], trace.u_injected[k, 0],
               trace.u_nominal[k, 1], trace.u_injected[k, 1]]
        for j in range(len(trace.channels)):
            row += [trace.y_true[k, j], trace.y_received[k, j], trace.y_nominal[k, j]]
        w.writerow([_fmt(v) for v in row] + ["1" if trace.clipped[k] else "0"])
    return buf.getvalue()


def emit_csv(trace: Trace, path) -> Path:
    path = Path(path)
    _atomic_write(path, trace_to_csv(trace).encode("utf-8"))
    return path


def read_csv(path) -> Trace:
    """Inverse of :func:`emit_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n_base = len(_BASE_COLUMNS)
    if tuple(header[:n_base]) != _BASE_COLUMNS or header[-1] != "clipped":
        raise ValueError("not a trace file")
    y_cols = header[n_base:-1]
    if len(y_cols) % 3:
        raise ValueError("malformed output columns")
    channels = tuple(c[len("y_true_"):] for c in y_cols[::3])
    data = np.array([[float(v) for v in r[:-1]] for r in body]).reshape(len(body), len(header) - 1)
    y = data[:, n_base:]
    return Trace(t=data[:, 0], x_true=data[:, 1:3], x_nominal=data[:, 3:5],
                 u_nominal=data[:, [5, 7]], u_injected=data[:, [6, 8]],
                 y_true=y[:, 0::3], y_received=y[:, 1::3], y_nominal=y[:, 2::3],
                 clipped=np.array([r[-1] == "1" for r in body], dtype=bool),
                 channels=channels)


# --- SVG -------------------------------------------------------------------

_W, _H, _PAD = 640, 180, 40
_MAX_POINTS = 1500


def _series(trace: Trace, ch: str) -> list[tuple[str, np.ndarray, str]]:
    if ch in trace.channels:
        j = trace.channels.index(ch)
        return [("received", trace.y_received[:, j], "#c0392b"),
                ("nominal", trace.y_nominal[:, j], "#2c3e50"),
                ("true", trace.y_true[:, j], "#27ae60")]
    if ch in STATE_CHANNELS:
        j = STATE_CHANNELS.index(ch)
        return [("attacked", trace.x_true[:, j], "#c0392b"),
                ("nominal", trace.x_nominal[:, j], "#2c3e50")]
    raise UnknownChannel(f"{ch!r} is not one of {list(trace.channels) + list(STATE_CHANNELS)}")


def _polyline(t, v, t_lo, t_hi, v_lo, v_hi, y_off) -> str:
    stride = max(1, int(np.ceil(len(t) / _MAX_POINTS)))
    idx = np.arange(0, len(t), stride)
    if idx[-1] != len(t) - 1:
        idx = np.append(idx, len(t) - 1)
    sx = (_W - 2 * _PAD) / (t_hi - t_lo if t_hi > t_lo else 1.0)
    sy = (_H - 2 * _PAD) / (v_hi - v_lo if v_hi > v_lo else 1.0)
    pts = " ".join(f"{_PAD + (t[i] - t_lo) * sx + 0.0:.2f},"
                   f"{y_off + _H - _PAD - (v[i] - v_lo) * sy + 0.0:.2f}" for i in idx)
    return pts


def trace_to_svg(trace: Trace, channels: Optional[Sequence[str]] = None,
                 title: str = "") -> str:
    channels = list(channels) if channels is not None else list(trace.channels)
    panels = [(ch, _series(trace, ch)) for ch in channels] or [("", [])]
    height = _H * len(panels) + 30
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{height}" '
           f'viewBox="0 0 {_W} {height}">',
           f'<text x="{_PAD}" y="20" font-family="monospace" font-size="13">{_esc(title)}</text>']
    t = trace.t
    t_lo, t_hi = (float(t[0]), float(t[-1])) if len(t) else (0.0, 1.0)
    for p, (ch, series) in enumerate(panels):
        y_off = 30 + p * _H
        vals = np.concatenate([s for _, s, _ in series]) if len(t) and series else np.zeros(1)
        v_lo, v_hi = float(vals.min()), float(vals.max())
        out.append(f'<rect x="{_PAD}" y="{y_off + _PAD}" width="{_W - 2 * _PAD}" '
                   f'height="{_H - 2 * _PAD}" fill="none" stroke="#999"/>')
        out.append(f'<text x="{_PAD}" y="{y_off + _PAD - 6}" font-family="monospace" '
                   f'font-size="11">{_esc(ch)} [{v_lo:.4g}, {v_hi:.4g}]</text>')
        out.append(f'<text x="{_PAD}" y="{y_off + _H - _PAD + 14}" font-family="monospace" '
                   f'font-size="10">t = {t_lo:.4g} s</text>')
        out.append(f'<text x="{_W - _PAD - 70}" y="{y_off + _H - _PAD + 14}" '
                   f'font-family="monospace" font-size="10">t = {t_hi:.4g} s</text>')
        for i, (label, _, colour) in enumerate(series):
            lx = _W - _PAD - 90
            ly = y_off + _PAD + 12 + 12 * i
            out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 14}" y2="{ly - 4}" '
                       f'stroke="{colour}"/>')
            out.append(f'<text x="{lx + 18}" y="{ly}" font-family="monospace" '
                       f'font-size="10">{label}</text>')
        for label, s, colour in series:
            if len(t) == 0:
                continue
            pts = _polyline(t, s, t_lo, t_hi, v_lo, v_hi, y_off)
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1" '
                       f'points="{pts}"><title>{label}</title></polyline>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def emit_plot(trace: Trace, channels: Optional[Sequence[str]], path,
              title: str = "") -> Path:
    """Write an SVG with one panel per channel; raises :class:`UnknownChannel`."""
    svg = trace_to_svg(trace, channels, title)
    path = Path(path)
    _atomic_write(path, svg.encode("utf-8"))
    return path

"""Render a bench CSV as response-time and traffic curves."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "FS": {"color": "#1f77b4", "marker": "o"},
    "DS": {"color": "#d62728", "marker": "s"},
}
DASHES = {"none": "-", "bernoulli": "-", "cluster": "--"}
XLABELS = {
    "distinct_b": "distinct cardinality of R.b",
    "worker_cores": "worker cores",
    "queries": "queries in batch",
}


def _curves(rows):
    curves = {}
    for r in rows:
        key = (r.mode, r.sampling)
        pts = curves.setdefault(key, {})
        pts.setdefault(r.sweep_value, (r.response_time_s, r.bytes_transferred))
    return {k: sorted(v.items()) for k, v in curves.items()}


def render(rows: Sequence, path: Union[str, Path], title: str = "") -> Path:
    """Two stacked panels: response time and bytes moved, one line per mode/sampling."""
    path = Path(path)
    if not rows:
        raise ValueError("nothing to plot")
    param = rows[0].sweep_param
    fig, (ax_t, ax_b) = plt.subplots(2, 1, figsize=(6.4, 6.4), sharex=True)
    for (mode, sampling), pts in sorted(_curves(rows).items()):
        xs = [x for x, _ in pts]
        label = mode if sampling == "none" else f"{mode} {sampling}"
        kw = dict(STYLE.get(mode, {}), linestyle=DASHES.get(sampling, "-"), label=label)
        ax_t.plot(xs, [t * 1e3 for _, (t, _) in pts], **kw)
        ax_b.plot(xs, [b / 2**20 for _, (_, b) in pts], **kw)
    if param == "distinct_b":
        ax_t.set_xscale("log")
    times = [r.response_time_s for r in rows if r.response_time_s > 0]
    if times and max(times) / min(times) > 50:
        ax_t.set_yscale("log")
    ax_t.set_ylabel("response time (ms, virtual)")
    ax_b.set_ylabel("bytes transferred (MiB)")
    ax_b.set_xlabel(XLABELS.get(param, param))
    ax_t.legend(frameon=False, fontsize="small")
    for ax in (ax_t, ax_b):
        ax.grid(alpha=0.3)
    if title:
        ax_t.set_title(title)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

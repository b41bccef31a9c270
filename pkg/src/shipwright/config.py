"""Cluster setup and the key=value calibration profile format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Union

from .relation import DEFAULT_CLUSTER_SIZE
from .transport import LinkModel, as_fraction

BACKENDS = ("sim", "socket")
NS = Fraction(1, 10**9)


@dataclass(frozen=True)
class ClusterSetup:
    """Core budgets, link, and per-core CPU cost coefficients (seconds)."""

    coordinator_cores: int = 28
    worker_cores: int = 14
    workers: int = 1
    link: LinkModel = field(default_factory=LinkModel)
    per_tuple_scan_s: Fraction = 23 * NS
    per_tuple_agg_s: Fraction = 19 * NS
    per_entry_merge_s: Fraction = 200 * NS
    cluster_size: int = DEFAULT_CLUSTER_SIZE
    timeout_s: Fraction = Fraction(60)
    backend: str = "sim"

    def __post_init__(self):
        for name in ("per_tuple_scan_s", "per_tuple_agg_s", "per_entry_merge_s", "timeout_s"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.coordinator_cores < 1 or self.worker_cores < 1:
            raise ValueError("core budgets must be >= 1")
        if self.workers < 1:
            raise ValueError("need at least one worker")
        if self.cluster_size < 1:
            raise ValueError("cluster_size must be >= 1")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")

    def replace(self, **changes) -> "ClusterSetup":
        return dataclasses.replace(self, **changes)


_KEYS = {
    "per_tuple_scan_ns", "per_tuple_agg_ns", "per_entry_merge_ns",
    "link.latency_us", "link.bandwidth_gbps",
    "coordinator_cores", "worker_cores", "workers", "cluster_size", "timeout_s", "backend",
}


def parse_profile(text: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"profile line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ValueError(f"profile line {lineno}: unknown key {key!r}")
        values[key] = value
    return values


def setup_from_profile(values: dict[str, str], base: ClusterSetup = ClusterSetup()) -> ClusterSetup:
    changes = {}
    for key, coef in (("per_tuple_scan_ns", "per_tuple_scan_s"),
                      ("per_tuple_agg_ns", "per_tuple_agg_s"),
                      ("per_entry_merge_ns", "per_entry_merge_s")):
        if key in values:
            changes[coef] = as_fraction(values[key]) * NS
    if "link.latency_us" in values or "link.bandwidth_gbps" in values:
        changes["link"] = LinkModel.from_config(
            values.get("link.latency_us", base.link.latency_us),
            values.get("link.bandwidth_gbps", base.link.bandwidth_gbps),
        )
    for key in ("coordinator_cores", "worker_cores", "workers", "cluster_size"):
        if key in values:
            changes[key] = int(values[key])
    if "timeout_s" in values:
        changes["timeout_s"] = as_fraction(values["timeout_s"])
    if "backend" in values:
        changes["backend"] = values["backend"]
    return base.replace(**changes)


def load_profile(source: Union[str, Path]) -> ClusterSetup:
    """Load a profile by path, or a bundled one by name (e.g. ``"baseline"``)."""
    path = Path(source)
    if path.exists():
        text = path.read_text()
    else:
        bundled = resources.files("shipwright") / "profiles" / f"{source}.profile"
        if not bundled.is_file():
            raise FileNotFoundError(f"no profile file or bundled profile named {source!r}")
        text = bundled.read_text()
    return setup_from_profile(parse_profile(text))


def baseline_profile() -> ClusterSetup:
    return load_profile("baseline")


def _fmt(x: Fraction) -> str:
    if x.denominator == 1:
        return str(x.numerator)
    return repr(float(x))


def format_profile(setup: ClusterSetup) -> str:
    lines = [
        f"per_tuple_scan_ns = {_fmt(setup.per_tuple_scan_s / NS)}",
        f"per_tuple_agg_ns = {_fmt(setup.per_tuple_agg_s / NS)}",
        f"per_entry_merge_ns = {_fmt(setup.per_entry_merge_s / NS)}",
        f"link.latency_us = {_fmt(setup.link.latency_us)}",
        f"link.bandwidth_gbps = {_fmt(setup.link.bandwidth_gbps)}",
        f"coordinator_cores = {setup.coordinator_cores}",
        f"worker_cores = {setup.worker_cores}",
        f"workers = {setup.workers}",
        f"cluster_size = {setup.cluster_size}",
        f"timeout_s = {_fmt(setup.timeout_s)}",
        f"backend = {setup.backend}",
    ]
    return "\n".join(lines) + "\n"


def save_profile(setup: ClusterSetup, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(format_profile(setup))
    return path

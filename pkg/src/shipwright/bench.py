"""Desk-scale reproductions of the three shipping experiments.

Each experiment sweeps one parameter, runs both shipping modes at every
point, and writes one CSV row per (sampling method, mode, sweep value,
repetition). Times are virtual seconds from the cluster simulator.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

from .clusternode import Cluster, Telemetry
from .config import ClusterSetup, baseline_profile
from .execution import Query
from .planner import CostEstimate, Mode, WorkloadStats, choose_mode, estimate, expected_result_entries
from .relation import GenSpec, Order, Relation, generate
from .sampling import Method, SampleSpec

log = logging.getLogger(__name__)

CSV_HEADER = (
    "experiment,mode,sampling,sweep_param,sweep_value,response_time_s,"
    "bytes_transferred,worker_cpu_s,coordinator_cpu_s,result_entries,timed_out"
)
CSV_FIELDS = tuple(CSV_HEADER.split(","))


class Experiment(str, enum.Enum):
    VARY_CARDINALITY = "vary_cardinality"
    VARY_CORES = "vary_cores"
    VARY_QUERIES = "vary_queries"


SWEEP_PARAM = {
    Experiment.VARY_CARDINALITY: "distinct_b",
    Experiment.VARY_CORES: "worker_cores",
    Experiment.VARY_QUERIES: "queries",
}


@dataclass
class ExperimentSpec:
    name: Experiment
    sweep: Sequence[int]
    gen: GenSpec
    setup: ClusterSetup
    methods: Sequence[Method]
    rate: float = 0.1
    sample_seed: int = 7
    repetitions: int = 3
    out: Optional[Path] = None
    modes: Sequence[Mode] = (Mode.FS, Mode.DS)

    def __post_init__(self):
        self.name = Experiment(self.name)
        self.methods = [Method(m) for m in self.methods]
        if not self.sweep:
            raise ValueError("sweep must be nonempty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    @property
    def sweep_param(self) -> str:
        return SWEEP_PARAM[self.name]


@dataclass(frozen=True)
class CsvRow:
    experiment: str
    mode: str
    sampling: str
    sweep_param: str
    sweep_value: int
    response_time_s: float
    bytes_transferred: int
    worker_cpu_s: float
    coordinator_cpu_s: float
    result_entries: int
    timed_out: bool

    @classmethod
    def from_telemetry(cls, spec: ExperimentSpec, method: Method, value: int, tel: Telemetry):
        return cls(spec.name.value, tel.mode.value, method.value, spec.sweep_param, value,
                   float(tel.response_time_s), tel.bytes_transferred, float(tel.worker_cpu_s),
                   float(tel.coordinator_cpu_s), tel.result_entries, tel.timed_out)

    def as_csv(self) -> list[str]:
        out = []
        for f in CSV_FIELDS:
            v = getattr(self, f)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            out.append(str(v))
        return out


def default_spec(
    name: Union[Experiment, str],
    setup: Optional[ClusterSetup] = None,
    rows: int = 10**7,
    seed: int = 1,
    **overrides,
) -> ExperimentSpec:
    """Desk-scale defaults: 10^7 rows stand in for the 10^10-row table."""
    name = Experiment(name)
    setup = setup or baseline_profile()
    if name is Experiment.VARY_CARDINALITY:
        spec = ExperimentSpec(
            name, [10**k for k in range(1, 7)], GenSpec(rows, 10, Order.SHUFFLED, seed),
            setup.replace(coordinator_cores=28, worker_cores=14), [Method.NONE], rate=1.0,
        )
    elif name is Experiment.VARY_CORES:
        spec = ExperimentSpec(
            name, list(range(1, 29)), GenSpec(rows, 2, Order.SHUFFLED, seed),
            setup.replace(coordinator_cores=28), [Method.BERNOULLI, Method.CLUSTER],
        )
    else:
        # groups of 20 tuples, clustered by b, as 512M groups over 10^10 rows
        distinct = min(rows, max(1, rows // 20))
        spec = ExperimentSpec(
            name, [1, 2, 3, 4, 5], GenSpec(rows, distinct, Order.SORTED_BY_B, seed),
            setup.replace(coordinator_cores=28, worker_cores=28), [Method.BERNOULLI, Method.CLUSTER],
        )
    return dataclasses.replace(spec, **overrides) if overrides else spec


@dataclass
class SweepPoint:
    method: Method
    value: int
    setup: ClusterSetup
    gen: GenSpec
    batch: list[Query]

    def workload(self) -> WorkloadStats:
        sampling = self.batch[0].sample
        entries = expected_result_entries(self.gen.row_count, self.gen.distinct_b, self.gen.order,
                                          sampling, self.setup.cluster_size)
        return WorkloadStats(self.gen.row_count, entries, sampling, len(self.batch))

    def estimate(self) -> CostEstimate:
        return estimate(self.setup, self.workload())


def sweep_points(spec: ExperimentSpec) -> Iterator[SweepPoint]:
    for method in spec.methods:
        sampling = SampleSpec(method, spec.rate, spec.sample_seed)
        for value in spec.sweep:
            gen, setup, queries = spec.gen, spec.setup, 1
            if spec.name is Experiment.VARY_CARDINALITY:
                gen = dataclasses.replace(gen, distinct_b=value)
            elif spec.name is Experiment.VARY_CORES:
                setup = setup.replace(worker_cores=value)
            else:
                queries = value
            batch = [Query(i, sampling) for i in range(queries)]
            yield SweepPoint(method, value, setup, gen, batch)


class _RelationCache:
    def __init__(self):
        self._key = None
        self._rel = None

    def get(self, gen: GenSpec) -> Relation:
        if gen != self._key:
            self._rel = None
            self._rel = generate(gen)
            self._key = gen
        return self._rel


@dataclass
class PointResult:
    point: SweepPoint
    telemetry: dict = field(default_factory=dict)


def run_points(spec: ExperimentSpec) -> list[PointResult]:
    """Run both modes at every sweep point.

    Virtual-time runs are deterministic, so the sim backend runs each point
    once; the socket backend repeats ``spec.repetitions`` times.
    """
    cache = _RelationCache()
    out = []
    for point in sweep_points(spec):
        rel = cache.get(point.gen)
        res = PointResult(point)
        reps = spec.repetitions if point.setup.backend == "socket" else 1
        with Cluster(point.setup, rel) as cluster:
            for mode in spec.modes:
                runs = [cluster.dispatch(point.batch, mode)[1] for _ in range(reps)]
                res.telemetry[mode] = runs
        log.info("%s %s=%s done", spec.name.value, spec.sweep_param, point.value)
        out.append(res)
    return out


def rows_from_points(spec: ExperimentSpec, results: Sequence[PointResult]) -> list[CsvRow]:
    rows = []
    for res in results:
        for mode in spec.modes:
            runs = res.telemetry[mode]
            for rep in range(spec.repetitions):
                tel = runs[rep % len(runs)]
                rows.append(CsvRow.from_telemetry(spec, res.point.method, res.point.value, tel))
    return rows


def run_experiment(spec: ExperimentSpec) -> list[CsvRow]:
    rows = rows_from_points(spec, run_points(spec))
    if spec.out is not None:
        write_csv(rows, spec.out)
    return rows


def exp_vary_cardinality(spec: ExperimentSpec) -> list[CsvRow]:
    if any(m is not Method.NONE for m in spec.methods):
        raise ValueError("vary_cardinality runs with sampling turned off")
    if spec.setup.coordinator_cores <= spec.setup.worker_cores:
        raise ValueError("vary_cardinality needs more coordinator cores than worker cores")
    return run_experiment(spec)


def exp_vary_cores(spec: ExperimentSpec) -> list[CsvRow]:
    if spec.gen.distinct_b != 2:
        raise ValueError("vary_cores runs with two distinct b values")
    return run_experiment(spec)


def exp_vary_queries(spec: ExperimentSpec) -> list[CsvRow]:
    if spec.setup.coordinator_cores != spec.setup.worker_cores:
        raise ValueError("vary_queries runs with equal core budgets on both nodes")
    return run_experiment(spec)


RUNNERS = {
    Experiment.VARY_CARDINALITY: exp_vary_cardinality,
    Experiment.VARY_CORES: exp_vary_cores,
    Experiment.VARY_QUERIES: exp_vary_queries,
}


def format_csv(rows: Sequence[CsvRow]) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow(row.as_csv())
    return buf.getvalue()


def write_csv(rows: Sequence[CsvRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_csv(rows))
    return path


def read_csv(path: Union[str, Path]) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def series(rows: Sequence[CsvRow], mode: str, sampling: str) -> list[tuple[int, float]]:
    """(sweep_value, response_time_s) pairs of one curve, first repetition only."""
    seen = {}
    for r in rows:
        if r.mode == mode and r.sampling == sampling and r.sweep_value not in seen:
            seen[r.sweep_value] = r.response_time_s
    return sorted(seen.items())


def crossovers(rows: Sequence[CsvRow], sampling: str) -> list[int]:
    """Sweep values where the faster mode differs from the previous point."""
    fs = dict(series(rows, "FS", sampling))
    ds = dict(series(rows, "DS", sampling))
    winners = [(v, "FS" if fs[v] < ds[v] else "DS") for v in sorted(fs)]
    return [v for (v, w), (_, prev) in zip(winners[1:], winners[:-1]) if w != prev]


def planner_agreement(spec: ExperimentSpec, results: Sequence[PointResult], band: float = 0.1):
    """Per sweep point: planner choice, simulator's faster mode, and whether they must agree."""
    out = []
    for res in results:
        est = res.point.estimate()
        fs = res.telemetry[Mode.FS][0].response_time_s
        ds = res.telemetry[Mode.DS][0].response_time_s
        faster = Mode.DS if fs > ds else Mode.FS
        out.append({
            "sampling": res.point.method.value,
            "value": res.point.value,
            "planned": choose_mode(est),
            "simulated": faster,
            "gap": est.relative_gap,
            "binding": est.relative_gap > band,
        })
    return out


GNUPLOT_TEMPLATE = """\
# columns: {header}
set datafile separator ","
set key outside
set xlabel "{xlabel}"
set ylabel "response time (s)"
{logx}set terminal pngcairo size 900,600
set output "{png}"
plot {plots}
"""


def gnuplot_script(spec: ExperimentSpec, csv_path: Union[str, Path]) -> str:
    csv_path = Path(csv_path)
    plots = []
    for method in spec.methods:
        for mode in spec.modes:
            cond = f'(strcol(2) eq "{mode.value}" && strcol(3) eq "{method.value}") ? $6 : 1/0'
            plots.append(f'"{csv_path.name}" every ::1 using 5:({cond}) '
                         f'with linespoints title "{mode.value} {method.value}"')
    return GNUPLOT_TEMPLATE.format(
        header=CSV_HEADER,
        xlabel=spec.sweep_param,
        logx="set logscale x\n" if spec.name is Experiment.VARY_CARDINALITY else "",
        png=csv_path.with_suffix(".gnuplot.png").name,
        plots=", \\\n     ".join(plots),
    )

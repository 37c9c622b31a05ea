"""Per-source reports and fleet-level benchmark summaries.

Aggregation uses the population standard-deviation convention (divide by
n); every emitted file states it in the header.  Output ordering is
always by source label so reruns are byte-identical.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass

from .model import TransitionKind

STD_CONVENTION = "population (divide by n)"

_METRICS = ("g2", "overlap_corrected", "first_lens_brightness", "wavelength_nm", "tau_fit_ps")


@dataclass(frozen=True)
class SourceReport:
    """Figures of merit for one source, each with a symmetric error bar."""

    label: str
    kind: TransitionKind
    g2: float
    g2_err: float
    v_raw: float
    v_raw_err: float
    overlap_corrected: float
    overlap_err: float
    first_lens_brightness: float
    fibered_rate_cps: float
    tau_fit_ps: float
    tau_fit_err_ps: float
    wavelength_nm: float
    delta_fss_fit_uev: float | None = None
    delta_fss_fit_err_uev: float | None = None

    def __post_init__(self):
        for name in ("g2_err", "v_raw_err", "overlap_err", "tau_fit_err_ps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.kind is TransitionKind.EXCITON and self.delta_fss_fit_uev is None:
            raise ValueError("exciton reports must carry delta_fss_fit_uev")
        if self.kind is TransitionKind.TRION and self.delta_fss_fit_uev is not None:
            raise ValueError("trion reports must not carry delta_fss_fit_uev")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @staticmethod
    def from_dict(d: dict) -> "SourceReport":
        d = dict(d)
        d["kind"] = TransitionKind(d["kind"])
        return SourceReport(**d)


@dataclass(frozen=True)
class MetricStats:
    mean: float
    std: float
    n: int


@dataclass(frozen=True)
class BenchmarkSummary:
    """Mean/std of each metric per source kind and over the whole fleet."""

    stats: dict
    counts: dict
    std_convention: str = STD_CONVENTION


def _population_stats(values) -> MetricStats:
    # Sorting makes the reduction order, and therefore the float result,
    # independent of the order reports were supplied in.
    vals = sorted(v for v in values if v is not None)
    n = len(vals)
    if n == 0:
        return MetricStats(mean=math.nan, std=math.nan, n=0)
    mean = sum(vals) / n
    var = sum((v - mean) ** 2 for v in vals) / n
    return MetricStats(mean=mean, std=math.sqrt(var), n=n)


def aggregate_benchmark(reports: list[SourceReport]) -> BenchmarkSummary:
    """Fleet statistics per kind and overall, for every reported metric."""
    if not reports:
        raise ValueError("cannot aggregate an empty report list")
    groups = {
        "exciton": [r for r in reports if r.kind is TransitionKind.EXCITON],
        "trion": [r for r in reports if r.kind is TransitionKind.TRION],
        "all": list(reports),
    }
    stats: dict = {}
    for group_name, members in groups.items():
        per_metric = {}
        for metric in _METRICS:
            per_metric[metric] = _population_stats(getattr(r, metric) for r in members)
        per_metric["delta_fss_fit_uev"] = _population_stats(
            r.delta_fss_fit_uev for r in members
        )
        stats[group_name] = per_metric
    counts = {name: len(members) for name, members in groups.items()}
    return BenchmarkSummary(stats=stats, counts=counts)


def _sorted_reports(reports):
    return sorted(reports, key=lambda r: r.label)


_CSV_FIELDS = (
    "label",
    "kind",
    "g2",
    "g2_err",
    "v_raw",
    "v_raw_err",
    "overlap_corrected",
    "overlap_err",
    "first_lens_brightness",
    "fibered_rate_cps",
    "tau_fit_ps",
    "tau_fit_err_ps",
    "wavelength_nm",
    "delta_fss_fit_uev",
    "delta_fss_fit_err_uev",
)


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, TransitionKind):
        return value.value
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def render_report(
    summary: BenchmarkSummary,
    reports: list[SourceReport],
    fmt: str,
    header: str | None = None,
) -> str:
    """Render the fleet report in one of: table-text, structured-json, csv.

    ``header`` (tool version, seed, config hash) becomes a leading comment
    line for text formats and a "_header" field for JSON.
    """
    reports = _sorted_reports(reports)
    if fmt == "structured-json":
        payload = {
            "std_convention": summary.std_convention,
            "counts": summary.counts,
            "stats": {
                g: {m: asdict(s) for m, s in metrics.items()}
                for g, metrics in summary.stats.items()
            },
            "sources": [r.to_dict() for r in reports],
        }
        if header is not None:
            payload["_header"] = header.lstrip("# ").strip()
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    prefix = "" if header is None else (header if header.startswith("#") else "# " + header)
    if fmt == "csv":
        buf = io.StringIO()
        if prefix:
            buf.write(prefix.strip() + "\n")
        buf.write(",".join(_CSV_FIELDS) + "\n")
        for r in reports:
            d = r.to_dict()
            buf.write(",".join(_csv_cell(d[field]) for field in _CSV_FIELDS) + "\n")
        return buf.getvalue()
    if fmt == "table-text":
        lines = []
        if prefix:
            lines.append(prefix.strip())
        lines.append(f"std convention: {summary.std_convention}")
        header = (
            f"{'label':<10}{'kind':<9}{'g2':>9}{'V_raw':>9}{'M':>9}"
            f"{'B_lens':>9}{'tau_ps':>9}{'lambda_nm':>11}"
        )
        lines.append(header)
        lines.append("-" * len(header))
        for r in reports:
            lines.append(
                f"{r.label:<10}{r.kind.value:<9}{r.g2:>9.4f}{r.v_raw:>9.4f}"
                f"{r.overlap_corrected:>9.4f}{r.first_lens_brightness:>9.4f}"
                f"{r.tau_fit_ps:>9.1f}{r.wavelength_nm:>11.2f}"
            )
        lines.append("-" * len(header))
        for group in ("exciton", "trion", "all"):
            st = summary.stats[group]
            lines.append(
                f"{group:<10}{'n=' + str(summary.counts[group]):<9}"
                f"{st['g2'].mean:>9.4f}{'':>9}{st['overlap_corrected'].mean:>9.4f}"
                f"{st['first_lens_brightness'].mean:>9.4f}{st['tau_fit_ps'].mean:>9.1f}"
                f"{st['wavelength_nm'].mean:>11.2f}"
            )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}; use table-text, structured-json or csv")


def emit_report(
    summary: BenchmarkSummary,
    reports: list[SourceReport],
    fmt: str,
    path,
    header: str | None = None,
):
    with open(path, "w") as f:
        f.write(render_report(summary, reports, fmt, header=header))


def parse_reports_csv(text: str) -> list[SourceReport]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    fields = lines[0].split(",")
    if tuple(fields) != _CSV_FIELDS:
        raise ValueError("unexpected csv columns")
    out = []
    for ln in lines[1:]:
        cells = ln.split(",")
        d = {}
        for field, cell in zip(fields, cells):
            if field == "label":
                d[field] = cell
            elif field == "kind":
                d[field] = cell
            elif cell == "":
                d[field] = None
            else:
                d[field] = float(cell)
        out.append(SourceReport.from_dict(d))
    return out


def parse_reports_json(text: str) -> list[SourceReport]:
    payload = json.loads(text)
    return [SourceReport.from_dict(d) for d in payload["sources"]]

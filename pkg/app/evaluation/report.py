from typing import List

from app.models.schemas import EvalReport


def _row(label: str, cells: List[str], width: int) -> str:
    return f"{label:<24}" + "".join(f"{cell:>{width}}" for cell in cells)


def render_table(report: EvalReport) -> str:
    """Plain-text comparison table: MAP, response time, t-test against rxp, stability."""
    names = list(report.methods)
    width = max(14, *(len(name) + 2 for name in names)) if names else 14

    def cell(name: str, attr: str, fmt: str) -> str:
        value = getattr(report.methods[name], attr)
        return "-" if value is None else format(value, fmt)

    def ttest(name: str, attr: str, fmt: str) -> str:
        result = report.pairwise.get(name)
        return "-" if result is None else format(getattr(result, attr), fmt)

    runs = report.runs
    lines = [
        f"{runs.rounds} rounds x {runs.samples_per_round} samples, top-{runs.top_k}, "
        f"pool {runs.pool_size} ({runs.false_positives_excluded} false positives excluded), seed {runs.seed}",
        "",
        _row("", names, width),
        _row("MAP", [cell(n, "map", ".4f") for n in names], width),
        _row("MAP std", [cell(n, "map_std", ".4f") for n in names], width),
        _row("Mean response (ms)", [cell(n, "mean_response_ms", ".3f") for n in names], width),
        _row("Response std (ms)", [cell(n, "std_response_ms", ".3f") for n in names], width),
        _row("Paired t vs rxp", [ttest(n, "t_statistic", ".4f") for n in names], width),
        _row("p-value", [ttest(n, "p_value", ".4g") for n in names], width),
        _row("Top-K stability", [cell(n, "stability", ".4f") for n in names], width),
        _row("Failures", [str(report.methods[n].failures) for n in names], width),
        "",
    ]
    det = report.detection
    precision = f"{det.precision:.4f}" if det.precision_defined else "undefined"
    recall = f"{det.recall:.4f}" if det.recall_defined else "undefined"
    lines.append(
        f"Detection: precision {precision}, recall {recall} "
        f"(TP {det.tp}, FP {det.fp}, FN {det.fn}, TN {det.tn})"
    )
    return "\n".join(lines) + "\n"

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from jinja2 import Environment, FileSystemLoader, select_autoescape

from app.core.exceptions import IoError
from app.models.schemas import Explanation

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"
CHART_TEMPLATE = "relevance_chart.svg.j2"

BAR_HEIGHT = 14
BAR_GAP = 4
LABEL_WIDTH = 190
PLOT_WIDTH = 220
MARGIN = 12
TOP = 44


def _environment() -> Environment:
    return Environment(
        loader=FileSystemLoader(str(TEMPLATE_DIR)),
        autoescape=select_autoescape(["svg", "j2"]),
        trim_blocks=True,
        lstrip_blocks=True
    )


def render_relevance_chart(
    explanations: Dict[str, Explanation],
    feature_names: Sequence[str],
    title: str,
    top_n: int = 10,
    causes: Optional[Sequence[int]] = None
) -> str:
    """
    Horizontal bar chart of the top relevances, one panel per method.

    Args:
        explanations: Method name -> explanation of the same record
        feature_names: Names indexed by feature
        title: Chart title
        top_n: Bars per panel
        causes: Ground-truth cause indices, highlighted when given

    Returns:
        SVG document text
    """
    cause_set = set(causes or ())
    panel_width = LABEL_WIDTH + PLOT_WIDTH + 60
    panels: List[dict] = []
    for position, (method, expl) in enumerate(explanations.items()):
        peak = max(expl.relevance) or 1.0
        bars = []
        for row, index in enumerate(expl.ranking[:top_n]):
            value = expl.relevance[index]
            bars.append({
                "name": feature_names[index],
                "value": value,
                "width": round(PLOT_WIDTH * value / peak, 2),
                "y": row * (BAR_HEIGHT + BAR_GAP),
                "cause": index in cause_set,
            })
        panels.append({"method": method, "x": MARGIN + position * panel_width, "bars": bars})

    rows = max((len(panel["bars"]) for panel in panels), default=0)
    return _environment().get_template(CHART_TEMPLATE).render(
        title=title,
        panels=panels,
        width=MARGIN * 2 + max(len(panels), 1) * panel_width,
        height=TOP + rows * (BAR_HEIGHT + BAR_GAP) + MARGIN,
        margin=MARGIN,
        top=TOP,
        label_width=LABEL_WIDTH,
        bar_height=BAR_HEIGHT
    )


def write_chart(svg: str, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(svg, encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write chart {path}: {e}") from e
    logger.debug(f"Wrote chart {path}")
    return path

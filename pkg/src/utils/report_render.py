import logging
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd
from jinja2 import Environment, FileSystemLoader, select_autoescape

PROJECT_ROOT = Path(__file__).resolve().parent.parent.parent
REPORTS_DIR = PROJECT_ROOT / "resources" / "reports"
TEMPLATES_DIR = PROJECT_ROOT / "src" / "template"

logger = logging.getLogger(__name__)


def retrieval_table(report: Dict[str, Any]) -> pd.DataFrame:
    """One row per task type (plus "All"), columns Acc@k / Recall@k for every k, in percent."""
    rows = {"All": report["per_k"]}
    rows.update(report.get("per_task") or {})
    records = {}
    for name, per_k in rows.items():
        record = {}
        for k in report["ks"]:
            values = per_k[str(k)]
            record[f"Acc@{k}"] = round(100 * values["acc"], 1)
            record[f"Recall@{k}"] = round(100 * values["recall"], 1)
        records[name] = record
    return pd.DataFrame.from_dict(records, orient="index")


def answer_table(report: Dict[str, Any]) -> pd.DataFrame:
    rows = {"All": {"em": report["em"], "f1": report["f1"], "n": report["n"]}}
    rows.update(report.get("per_task") or {})
    df = pd.DataFrame.from_dict(rows, orient="index")
    df["EM"] = (100 * df["em"]).round(1)
    df["F1"] = (100 * df["f1"]).round(1)
    return df[["EM", "F1", "n"]].astype({"n": int})


def render_text_table(report: Dict[str, Any]) -> str:
    """Human-readable table for either report kind."""
    df = retrieval_table(report) if "per_k" in report else answer_table(report)
    return df.to_string()


def render_html_report(data: Dict[str, Any], chart_path: Optional[str] = None, template_name: str = "eval_report.html") -> str:
    env = Environment(loader=FileSystemLoader(str(TEMPLATES_DIR)), autoescape=select_autoescape(["html"]))
    template = env.get_template(template_name)
    table = retrieval_table(data) if "per_k" in data else answer_table(data)
    return template.render(
        report=data,
        table_html=table.to_html(border=0),
        kind="retrieval" if "per_k" in data else "answers",
        chart_path=chart_path,
    )


def save_html_report(html_content: str, output_path: Optional[str] = None) -> str:
    out = Path(output_path) if output_path else REPORTS_DIR / "eval_report.html"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        f.write(html_content)
    logger.info(f"HTML saved at: {out}")
    return str(out)


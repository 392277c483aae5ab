import logging
from pathlib import Path
from typing import Any, Dict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

from src.tools.eval_tools import RetrievalReport
from src.tools.hypergraph_tools import HypergraphIndex

logger = logging.getLogger(__name__)


class VisualizationTool:
    """Charts for index inspection and retrieval evaluation."""

    def __init__(self, output_dir: str = "resources/charts"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self._setup_style()

    def _setup_style(self):
        self.colors = ["#001F3F", "#7099A8", "#AAAAAA", "#334C66", "#D8D8D8"]
        sns.set_style("darkgrid", {"grid.color": ".5", "grid.linestyle": ":"})
        sns.set_palette(sns.color_palette(self.colors))

    def _save_and_close_plot(self, fig, filename: str) -> Path:
        output_path = self.output_dir / filename
        fig.tight_layout()
        fig.savefig(output_path)
        plt.close(fig)
        logger.info(f"Chart saved at: {output_path}")
        return output_path

    def create_cluster_size_chart(self, ix: HypergraphIndex) -> Dict[str, Any]:
        """Bar chart of cluster sizes, one group per feature family."""
        df = pd.DataFrame(
            [
                {"family": phi, "cluster": cluster, "size": size}
                for phi, family in ix.families.items()
                for cluster, size in enumerate(family.sizes())
            ]
        )
        fig, ax = plt.subplots(figsize=(10, 4))
        sns.barplot(x="cluster", y="size", hue="family", data=df, ax=ax)
        ax.set_xlabel("Cluster")
        ax.set_ylabel("Tables")
        output_path = self._save_and_close_plot(fig, "cluster_sizes.png")
        return {"image_path": str(output_path), "data": df.to_dict(orient="records")}

    def create_recall_chart(self, report: RetrievalReport) -> Dict[str, Any]:
        """Acc@k and Recall@k as a function of k."""
        df = pd.DataFrame(
            [
                {"k": k, "metric": metric, "value": report.per_k[k][key]}
                for k in report.ks
                for metric, key in (("Acc@k", "acc"), ("Recall@k", "recall"))
            ]
        )
        if len(report.ks) < 2:
            logger.warning("A single k value gives a degenerate curve.")
        fig, ax = plt.subplots(figsize=(6, 4))
        sns.lineplot(x="k", y="value", hue="metric", data=df, marker="o", ax=ax)
        ax.set_ylim(0.0, 1.05)
        ax.set_xlabel("k")
        ax.set_ylabel("Score")
        output_path = self._save_and_close_plot(fig, "retrieval_at_k.png")
        return {"image_path": str(output_path), "data": df.to_dict(orient="records")}

"""Figure rendering for the CLI report paths.

Figures are written next to the delimited outputs with fixed size, dpi, and
PNG metadata so byte-identical reruns stay byte-identical.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .anomaly import MODULE_NAMES, AnomalyReport  # noqa: E402
from .retrieval import RetrievalResult  # noqa: E402

_SAVEFIG_KWARGS = {"dpi": 100, "metadata": {"Software": "aisc"}}


def save_anomaly_figure(report: AnomalyReport, probe_ids: Sequence[str], path: str | Path) -> None:
    """Histogram panel of the raw module scores and the fused probability."""
    fig, axes = plt.subplots(1, len(MODULE_NAMES) + 1, figsize=(16, 3))
    for ax, name in zip(axes, MODULE_NAMES):
        values = [report.module_scores(name)[sid] for sid in probe_ids]
        ax.hist(values, bins=20, color="tab:blue")
        ax.set_title(name)
        ax.set_xlabel("raw score")
    axes[-1].hist([report.fused[sid] for sid in probe_ids], bins=20, color="tab:red")
    axes[-1].set_title("fused")
    axes[-1].set_xlabel("novelty probability")
    axes[0].set_ylabel("probes")
    fig.tight_layout()
    fig.savefig(Path(path), **_SAVEFIG_KWARGS)
    plt.close(fig)


def save_trace_figure(trace: Sequence[float], path: str | Path) -> None:
    """Loss-vs-iteration curve for an optimization run."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(trace)), trace, color="tab:blue")
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean loss")
    ax.set_title("patch optimization trace")
    fig.tight_layout()
    fig.savefig(Path(path), **_SAVEFIG_KWARGS)
    plt.close(fig)


def save_similarity_figure(results: Sequence[RetrievalResult], path: str | Path) -> None:
    """Distribution of top-1 retrieval similarities."""
    top1 = [res.hits[0][1] for res in results if res.hits]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(top1, bins=20, color="tab:green")
    ax.set_xlabel("top-1 cosine similarity")
    ax.set_ylabel("probes")
    ax.set_title("retrieval similarity distribution")
    fig.tight_layout()
    fig.savefig(Path(path), **_SAVEFIG_KWARGS)
    plt.close(fig)

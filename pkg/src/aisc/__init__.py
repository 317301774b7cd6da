"""Numeric core for the three-track AI security competition: open-set
attribution over embeddings, anomaly scoring, official track metrics,
patch constraint validation, and adversarial-patch optimization math."""

from . import anomaly, attribution, dataio, metrics, patchcheck, patchopt, retrieval, synth

__version__ = "0.1.0"

__all__ = [
    "anomaly",
    "attribution",
    "dataio",
    "metrics",
    "patchcheck",
    "patchopt",
    "retrieval",
    "synth",
    "__version__",
]

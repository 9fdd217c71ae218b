"""flowkernel: price-impact kernel deconvolution, Hawkes surge dynamics,
entropy-production inference, and the associated diagnostic battery for
daily order-flow panels, validated against a built-in synthetic market
generator."""

from . import deconv, econometrics, epr, hawkes, memory, panel, pipeline, synth
from .pipeline import RunConfig, run_recipe

__version__ = "0.1.0"

__all__ = [
    "deconv",
    "econometrics",
    "epr",
    "hawkes",
    "memory",
    "panel",
    "pipeline",
    "synth",
    "RunConfig",
    "run_recipe",
    "__version__",
]

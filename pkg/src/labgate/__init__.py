"""labgate: schema-gated, deterministic laboratory analysis tools.

Two workflows (photoluminescence power-series fitting and SEM
periodicity / particle sizing) exposed through a typed tool server,
plus a reproducibility harness that proves byte-identical results
across repeated identical calls.
"""

from labgate.backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]

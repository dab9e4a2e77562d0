"""Certified arbitrary-precision machinery for Thue-Morse trace polynomials.

Subpackages by task:

- ``tracepoly``: trace polynomial words, evaluation (recurrence + independent
  transfer-matrix oracle), truncated jets.
- ``rootfind``: certified zero enclosures, directional first/last zero
  queries with germ-scale hints.
- ``germ``: tangency germs, rescaled deviation jets, (delta, beta) regularity
  certificates, closeness levels, exact constants ledger.
- ``cantor``: nested interval tree construction with ratio/gap verification
  and dimension bound reports.
- ``spectrum``: approximant band spectra, point samples of the zero set,
  box-counting dimension estimates.
- ``cli``: the ``tmtrace`` command.
"""

from .cantor import (
    CantorNode,
    CantorTree,
    GapError,
    RatioError,
    TreeCertificateError,
    build_root,
    build_tree,
    dimension_lower_bound,
    dimension_report,
    split_node,
)
from .germ import (
    Closeness,
    ConstantsLedger,
    DegenerateGermError,
    Germ,
    GermConsistencyError,
    RegularityCheck,
    check_regularity,
    closeness,
    germ_from_zero,
    initial_germ,
    initial_point,
    rescaled_delta,
    rescaled_delta_pair,
    verify_constants,
)
from .reals import PrecisionError, Real
from .rootfind import (
    Enclosure,
    NotFoundError,
    ScanPolicy,
    UnresolvedWindowError,
    bracket_point,
    first_zero_after,
    isolate_zeros,
    last_zero_before,
    newton_polish,
)
from .spectrum import (
    Band,
    SigmaSample,
    approximant_bands,
    box_dimension,
    sigma_points,
)
from .tracepoly import (
    Jet,
    ModelParams,
    TransferMatrix,
    eval_trace,
    eval_trace_dev,
    eval_trace_oracle,
    tm_word,
    trace_jet,
    trace_jet_dev,
)

__version__ = "0.1.0"

__all__ = [
    "PrecisionError",
    "Real",
    "Jet",
    "ModelParams",
    "TransferMatrix",
    "eval_trace",
    "eval_trace_dev",
    "eval_trace_oracle",
    "tm_word",
    "trace_jet",
    "trace_jet_dev",
    "Enclosure",
    "NotFoundError",
    "ScanPolicy",
    "UnresolvedWindowError",
    "bracket_point",
    "first_zero_after",
    "isolate_zeros",
    "last_zero_before",
    "newton_polish",
    "Closeness",
    "ConstantsLedger",
    "DegenerateGermError",
    "Germ",
    "GermConsistencyError",
    "RegularityCheck",
    "check_regularity",
    "closeness",
    "germ_from_zero",
    "initial_germ",
    "initial_point",
    "rescaled_delta",
    "rescaled_delta_pair",
    "verify_constants",
    "CantorNode",
    "CantorTree",
    "GapError",
    "RatioError",
    "TreeCertificateError",
    "build_root",
    "build_tree",
    "dimension_lower_bound",
    "dimension_report",
    "split_node",
    "Band",
    "SigmaSample",
    "approximant_bands",
    "box_dimension",
    "sigma_points",
    "__version__",
]

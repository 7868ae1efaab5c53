"""Estimator selection for piecewise-constant regression in one-parameter
exponential families, applied to changepoint detection.

The package is organised around a small pipeline:

- :mod:`stepselect.expfam` -- the supported observation families (Gaussian
  with known sigma, Poisson, exponential, Bernoulli): densities, sampling,
  segment maximum-likelihood fits and closed-form Hellinger distances.
- :mod:`stepselect.stepfn` -- partitions of the index grid ``1..n`` and
  piecewise-constant candidate functions, plus the complexity and weight
  maps used by the selection penalty.
- :mod:`stepselect.selector` -- the pairwise selection engine: bounded
  log-ratio scores, penalties, per-candidate upsilon values and the final
  argmin choice.
- :mod:`stepselect.segmenters` -- candidate generators (exact k-segment
  dynamic programming, PELT, binary / wild binary segmentation, robust
  Huber and biweight DP), variance-stabilising transforms, the MAD scale
  estimator, and candidate-file import/export.
- :mod:`stepselect.simkit` -- declarative truth signals, samplers and
  outlier injection for simulation studies.
- :mod:`stepselect.evalkit` -- Hellinger risk, segment-count error and
  contribution tables aggregated over Monte-Carlo replications.
- :mod:`stepselect.cli` -- the command-line driver (``simulate``,
  ``segment``, ``select``, ``experiment``, ``calibrate``).
"""

from stepselect.evalkit import pseudo_hellinger_risk
from stepselect.expfam import (
    Bernoulli,
    ExpFamily,
    ExponentialRate,
    GaussianKnownSigma,
    Poisson,
    family_from_string,
)
from stepselect.selector import (
    PenaltyConfig,
    SelectionResult,
    psi,
    select,
    t_statistic,
    upsilon_scores,
)
from stepselect.simkit import OutlierSpec, SignalSpec, builtin_signal, sample_series
from stepselect.stepfn import Partition, StepFn

__version__ = "0.1.0"

__all__ = [
    "Bernoulli",
    "ExpFamily",
    "ExponentialRate",
    "GaussianKnownSigma",
    "OutlierSpec",
    "Partition",
    "PenaltyConfig",
    "Poisson",
    "SelectionResult",
    "SignalSpec",
    "StepFn",
    "builtin_signal",
    "family_from_string",
    "pseudo_hellinger_risk",
    "psi",
    "sample_series",
    "select",
    "t_statistic",
    "upsilon_scores",
    "__version__",
]

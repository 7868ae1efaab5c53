"""Truth signals, samplers and outlier injection for simulation studies.

A :class:`SignalSpec` describes a piecewise-constant ground truth: the
observation family, the series length, the segment-start changepoints and
one parameter per segment.  ``builtin_signal`` provides the benchmark
signals used by the calibration and evaluation experiments:

- ``fms-type`` (Poisson, n=497): seven segments with means
  4, 6, 10, 3, 7, 1, 5; the matching outlier scenario replaces five
  random observations by 30.
- ``mix-type`` (Poisson, n=560): fourteen segments with means
  30, 2, 26, 4, ..., 16, 14.
- ``teeth-type`` (exponential, n=140): fourteen segments with rates
  alternating 0.5 and 5; outlier scenario replaces two observations by 20.
- ``stairs-type`` (exponential, n=500): five segments with rates
  2^4, 2^2, 1, 2^-2, 2^-4.
- ``calib-{gauss,pois,exp}-N{5,10,20}`` (n=500): N equal segments; the
  j-th segment has Gaussian mean (j+1)/2 with sigma 1, Poisson mean j, or
  exponential rate 0.01*j.

Sampling is a pure function of (spec, generator state); replications
derive independent Philox streams from their seed path, so results are
reproducible regardless of how work is distributed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.random import Generator

from stepselect.expfam import (
    ExpFamily,
    ExponentialRate,
    GaussianKnownSigma,
    Poisson,
    family_from_string,
)
from stepselect.stepfn import Partition, StepFn


@dataclass(frozen=True)
class SignalSpec:
    """Declarative piecewise-constant truth."""

    family: ExpFamily
    n: int
    changepoints: tuple[int, ...]
    seg_params: tuple[float, ...]
    name: str = ""

    def __post_init__(self):
        part = Partition(self.n, self.changepoints)  # validates bounds/order
        if len(self.seg_params) != part.segment_count:
            raise ValueError(
                f"{len(self.seg_params)} parameters for {part.segment_count} segments"
            )
        self.family._check_param(np.asarray(self.seg_params, dtype=float))

    def partition(self) -> Partition:
        return Partition(self.n, self.changepoints)

    def truth(self) -> StepFn:
        """The truth as a candidate-shaped step function."""
        return StepFn(self.partition(), self.seg_params, label="truth")

    @property
    def segment_count(self) -> int:
        return len(self.changepoints) + 1


@dataclass(frozen=True)
class OutlierSpec:
    """Replace ``count`` uniformly chosen observations by ``value``."""

    count: int
    value: float

    def __post_init__(self):
        if self.count < 0:
            raise ValueError(f"outlier count must be >= 0, got {self.count}")
        if not math.isfinite(self.value):
            raise ValueError("outlier value must be finite")


def sample_series(spec: SignalSpec, rng: Generator) -> np.ndarray:
    """Draw one series: y_i from the family at the truth's value at i."""
    params = spec.truth().values_by_index()
    return np.asarray(spec.family.sample(params, rng), dtype=float)


def inject_outliers(
    y: np.ndarray, spec: OutlierSpec, rng: Generator
) -> tuple[np.ndarray, tuple[int, ...]]:
    """Return a copy of ``y`` with outliers planted, plus their 1-based
    positions (sorted).  The input series is left untouched."""
    yy = np.asarray(y, dtype=float)
    if spec.count > yy.size:
        raise ValueError(f"cannot place {spec.count} outliers in {yy.size} points")
    out = yy.copy()
    if spec.count == 0:
        return out, ()
    idx = np.sort(rng.choice(yy.size, size=spec.count, replace=False))
    out[idx] = spec.value
    return out, tuple(int(i) + 1 for i in idx)


# ---------------------------------------------------------------------------
# Built-in signals
# ---------------------------------------------------------------------------


def _equal_segments(n: int, segments: int) -> tuple[int, ...]:
    if n % segments:
        raise ValueError(f"{n} points do not split into {segments} equal segments")
    length = n // segments
    return tuple(length * j + 1 for j in range(1, segments))


def _calib(kind: str, segments: int) -> SignalSpec:
    n = 500
    cps = _equal_segments(n, segments)
    js = range(1, segments + 1)
    if kind == "gauss":
        fam, params = GaussianKnownSigma(1.0), tuple((j + 1) / 2.0 for j in js)
    elif kind == "pois":
        fam, params = Poisson(), tuple(math.log(j) for j in js)
    else:
        fam, params = ExponentialRate(), tuple(0.01 * j for j in js)
    return SignalSpec(fam, n, cps, params, name=f"calib-{kind}-N{segments}")


def _builtin_table() -> dict[str, SignalSpec]:
    table = {}

    # Changepoints are recorded as the 1-based start of each new segment;
    # a jump "at position p/n" on the unit grid w_i = (i-1)/n means the
    # new segment starts at index p + 1.
    table["fms-type"] = SignalSpec(
        Poisson(),
        497,
        tuple(p + 1 for p in (139, 226, 243, 300, 309, 333)),
        tuple(math.log(m) for m in (4, 6, 10, 3, 7, 1, 5)),
        name="fms-type",
    )
    table["mix-type"] = SignalSpec(
        Poisson(),
        560,
        tuple(p + 1 for p in (11, 21, 41, 61, 91, 121, 161, 201, 251, 301, 361, 421, 491)),
        tuple(math.log(m) for m in (30, 2, 26, 4, 24, 6, 22, 8, 20, 10, 18, 12, 16, 14)),
        name="mix-type",
    )
    table["teeth-type"] = SignalSpec(
        ExponentialRate(),
        140,
        tuple(p + 1 for p in range(11, 132, 10)),
        tuple(0.5 if j % 2 == 0 else 5.0 for j in range(14)),
        name="teeth-type",
    )
    table["stairs-type"] = SignalSpec(
        ExponentialRate(),
        500,
        tuple(p + 1 for p in (101, 201, 301, 401)),
        tuple(2.0**e for e in (4, 2, 0, -2, -4)),
        name="stairs-type",
    )
    for kind in ("gauss", "pois", "exp"):
        for segments in (5, 10, 20):
            spec = _calib(kind, segments)
            table[spec.name] = spec
    return table


_BUILTINS = _builtin_table()

# Outlier scenarios tied to specific built-in signals.
BUILTIN_OUTLIERS = {
    "fms-type": OutlierSpec(count=5, value=30.0),
    "teeth-type": OutlierSpec(count=2, value=20.0),
}


def builtin_signal(name: str) -> SignalSpec:
    """Look up a built-in signal by name; raises with the list of known
    names on a miss."""
    try:
        return _BUILTINS[name]
    except KeyError:
        known = ", ".join(sorted(_BUILTINS))
        raise ValueError(f"unknown signal {name!r}; available: {known}") from None


def builtin_signal_names() -> tuple[str, ...]:
    return tuple(sorted(_BUILTINS))


# ---------------------------------------------------------------------------
# Signal file I/O (same conventions as the candidate file)
# ---------------------------------------------------------------------------


def signal_to_dict(spec: SignalSpec) -> dict:
    return {
        "name": spec.name,
        "family": spec.family.to_string(),
        "n": spec.n,
        "changepoints": list(spec.changepoints),
        "values": list(spec.seg_params),
    }


def signal_from_dict(doc: dict) -> SignalSpec:
    for key in ("family", "n", "changepoints", "values"):
        if key not in doc:
            raise ValueError(f"signal document is missing field {key!r}")
    return SignalSpec(
        family=family_from_string(doc["family"]),
        n=int(doc["n"]),
        changepoints=tuple(int(c) for c in doc["changepoints"]),
        seg_params=tuple(float(v) for v in doc["values"]),
        name=str(doc.get("name", "")),
    )


def load_signal(path: str | Path) -> SignalSpec:
    with open(path, encoding="utf-8") as fh:
        return signal_from_dict(json.load(fh))


def save_signal(spec: SignalSpec, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(signal_to_dict(spec), fh, indent=2)
        fh.write("\n")

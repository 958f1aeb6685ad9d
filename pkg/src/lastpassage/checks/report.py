"""Check reports and the statistics shared by the checks."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Part", "CheckReport", "ks_distance", "mean_and_stderr", "reports_to_json", "reports_to_csv"]

JSON_FIELDS = ("name", "estimate", "reference", "stderr", "bias_bound", "n_paths",
               "wall_time_s", "verdict", "paper_anchor")


@dataclass
class Part:
    """One comparison ``|estimate - reference| <= m * stderr + bias + tolerance``."""

    label: str
    estimate: float
    reference: float
    stderr: float = 0.0
    bias_bound: float = 0.0
    tolerance: float = 0.0
    multiplier: float = 3.0

    @property
    def allowance(self) -> float:
        return self.multiplier * self.stderr + self.bias_bound + self.tolerance

    @property
    def passed(self) -> bool:
        d = abs(self.estimate - self.reference)
        return bool(np.isfinite(d) and d <= self.allowance)

    @property
    def excess(self) -> float:
        d = abs(self.estimate - self.reference)
        if not np.isfinite(d):
            return math.inf
        return d / self.allowance if self.allowance > 0 else (0.0 if d == 0 else math.inf)

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "estimate": _num(self.estimate),
            "reference": _num(self.reference),
            "stderr": _num(self.stderr),
            "bias_bound": _num(self.bias_bound),
            "tolerance": _num(self.tolerance),
            "multiplier": _num(self.multiplier),
            "verdict": "pass" if self.passed else "fail",
        }


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class CheckReport:
    """Outcome of one identity check.

    The headline ``estimate``/``reference`` pair is the part with the
    largest deviation relative to its allowance; the verdict is ``pass``
    only if every part passes.
    """

    name: str
    parts: list[Part]
    n_paths: int
    paper_anchor: str
    wall_time: float = 0.0
    tolerance_multiplier: float = 3.0
    details: dict = field(default_factory=dict)

    @property
    def headline(self) -> Part:
        return max(self.parts, key=lambda p: p.excess)

    @property
    def estimate(self) -> float:
        return self.headline.estimate

    @property
    def reference(self) -> float:
        return self.headline.reference

    @property
    def stderr(self) -> float:
        return self.headline.stderr

    @property
    def bias_bound(self) -> float:
        return self.headline.bias_bound

    @property
    def verdict(self) -> str:
        return "pass" if all(p.passed for p in self.parts) else "fail"

    def as_dict(self, timing: bool = False) -> dict:
        h = self.headline
        return {
            "name": self.name,
            "estimate": _num(h.estimate),
            "reference": _num(h.reference),
            "stderr": _num(h.stderr),
            "bias_bound": _num(h.bias_bound),
            "n_paths": int(self.n_paths),
            "wall_time_s": round(self.wall_time, 3) if timing else None,
            "verdict": self.verdict,
            "paper_anchor": self.paper_anchor,
            "parts": [p.as_dict() for p in self.parts],
            "details": self.details,
        }

    def summary(self) -> str:
        h = self.headline
        return (f"{self.name:<22} {self.verdict.upper():<4}  est={h.estimate:.6g}  ref={h.reference:.6g}"
                f"  stderr={h.stderr:.3g}  bias<={h.bias_bound:.3g}  [{h.label}]")


def reports_to_json(reports, timing: bool = False) -> str:
    return json.dumps([r.as_dict(timing) for r in reports], indent=2) + "\n"


def reports_to_csv(reports, timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "part", "estimate", "reference", "stderr", "bias_bound", "tolerance",
                "n_paths", "wall_time_s", "verdict"])
    for r in reports:
        for p in r.parts:
            w.writerow([r.name, p.label, repr(float(p.estimate)), repr(float(p.reference)),
                        repr(float(p.stderr)), repr(float(p.bias_bound)), repr(float(p.tolerance)),
                        r.n_paths, f"{r.wall_time:.3f}" if timing else "",
                        "pass" if p.passed else "fail"])
    return buf.getvalue()


def mean_and_stderr(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    n = x.size
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf


def ks_distance(samples, cdf, n_total: int | None = None, upper: float | None = None,
                cdf_left=None) -> float:
    """Kolmogorov-Smirnov distance allowing right-censored draws.

    ``samples`` holds observed values; censored draws (known to exceed
    ``upper``) are encoded as ``inf`` or simply counted in ``n_total``.
    The distance is taken over ``t <= upper``, where the empirical
    distribution function is exact.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    x = x[np.isfinite(x)]
    n = int(n_total) if n_total is not None else int(np.asarray(samples).size)
    if upper is not None:
        x = x[x <= upper]
    m = x.size
    if m == 0:
        return float(cdf(upper)) if upper is not None else 0.0
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, m + 1)
    fl = f if cdf_left is None else np.asarray(cdf_left(x), dtype=float)
    d = max(float(np.max(i / n - f)), float(np.max(fl - (i - 1) / n)))
    if upper is not None:
        d = max(d, float(cdf(upper)) - m / n)
    return d

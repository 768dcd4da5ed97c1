"""Comparison pipeline and Wald inference on fitted models.

Orchestrates: exposure synthesis -> duplication -> design -> stratified fit
with cluster-robust variance -> Wald test(s) on the exposure-by-type
interaction coefficients -> per-exposure hazard ratios, rendered either as a
JSON-compatible tree or as a human table (exposures by effect columns, with a
final difference row).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc, ndtri

from .cox import CoxFit, FitOptions, fit as cox_fit
from .data import Dataset
from .design import (
    ExposureSpec,
    build_design_matrix,
    duplicate_augment,
    _exposure_term_columns,
)
from .errors import AliasedCoefficientError, ConfigError, SingularMatrixError

COVARIANCE_KINDS = ("robust", "model")


def chi_square_upper_tail(q: float, df: int) -> float:
    """Upper-tail chi-square probability via the regularized incomplete gamma.

    Computed as ``Q(df/2, q/2)`` directly, never as ``1 - cdf``, so small
    tail probabilities do not cancel; relative accuracy is at the 1e-12
    level of the underlying gamma routine.
    """
    if df < 1:
        raise ConfigError(f"degrees of freedom must be >= 1, got {df}")
    if q < 0:
        raise ConfigError(f"chi-square statistic must be >= 0, got {q}")
    return float(gammaincc(df / 2.0, q / 2.0))


@dataclass(frozen=True)
class TestResult:
    """A Wald test: statistic, degrees of freedom, upper-tail p-value."""

    statistic: float
    df: int
    p_value: float
    tested_coefficients: tuple[str, ...]
    covariance_used: str


@dataclass(frozen=True)
class PrunedFit:
    """Coefficients and covariances with aliased entries removed."""

    names: tuple[str, ...]
    coefficients: np.ndarray
    model_covariance: np.ndarray
    robust_covariance: np.ndarray | None


def prune_aliased(fit_result: CoxFit, required: tuple[str, ...] | None = None) -> PrunedFit:
    """Drop aliased coefficients and their covariance rows/columns.

    If any name in ``required`` was aliased, refuse with an error instead of
    silently testing a reduced hypothesis.
    """
    names = fit_result.column_names
    if required:
        unknown = [n for n in required if n not in names]
        if unknown:
            raise ConfigError(f"unknown coefficient name(s): {unknown}")
        dropped = [n for n in required
                   if fit_result.aliased_mask[names.index(n)]]
        if dropped:
            raise AliasedCoefficientError(
                f"coefficient(s) {dropped} were dropped for collinearity; "
                "the requested test cannot be performed on this fit"
            )
    keep = np.flatnonzero(~fit_result.aliased_mask)
    robust = fit_result.robust_covariance
    return PrunedFit(
        names=tuple(names[i] for i in keep),
        coefficients=fit_result.coefficients[keep],
        model_covariance=fit_result.model_covariance[np.ix_(keep, keep)],
        robust_covariance=None if robust is None else robust[np.ix_(keep, keep)],
    )


def _select_covariance(pruned: PrunedFit, covariance: str) -> np.ndarray:
    if covariance not in COVARIANCE_KINDS:
        raise ConfigError(f"covariance must be one of {COVARIANCE_KINDS}, got {covariance!r}")
    if covariance == "robust":
        if pruned.robust_covariance is None:
            raise ConfigError("robust covariance unavailable; fit with robust=True first")
        return pruned.robust_covariance
    return pruned.model_covariance


# Eigenvalues of the tested covariance block below this fraction of the
# model-variance scale are numerically zero: the corresponding contrast is
# deterministic (e.g. comparing an exposure with an exact copy of itself).
_VARIANCE_FLOOR_RATIO = 1e-10


def _quadratic_form(b: np.ndarray, block: np.ndarray, reference_scale: float) -> float:
    """``b' block^-1 b`` with numerically-zero variance directions handled.

    A direction whose variance is zero at the reference scale must carry a
    zero estimate (it then contributes nothing); a materially nonzero
    estimate there means the contrast is deterministic and cannot be
    Wald-tested.
    """
    if len(b) == 1:
        variance = float(block[0, 0])
        if variance > _VARIANCE_FLOOR_RATIO * reference_scale:
            return float(b[0] * (b[0] / variance))
        z = b
        live = np.array([False])
        vals = np.array([variance])
    else:
        vals, vecs = np.linalg.eigh(block)
        z = vecs.T @ b
        live = vals > _VARIANCE_FLOOR_RATIO * reference_scale
    dead = ~live
    if dead.any() and np.any(np.abs(z[dead]) > 1e-6 * math.sqrt(reference_scale)):
        cond = float(np.linalg.cond(block))
        raise SingularMatrixError(
            "test covariance block is singular along a direction with a "
            f"nonzero estimate (condition number {cond:.3e})",
            condition_number=cond,
        )
    if not live.any():
        return 0.0
    return float(np.sum(z[live] ** 2 / vals[live]))


def wald_multivariate(fit_result: CoxFit, test_names, covariance: str = "robust") -> TestResult:
    """Multivariate Wald test that the named coefficients are jointly zero.

    ``Q = (C b)' (C V C')^-1 (C b)`` with ``C`` the selection matrix for
    ``test_names``; under the null ``Q`` is chi-square with one degree of
    freedom per tested coefficient.
    """
    test_names = tuple(test_names)
    if not test_names:
        raise ConfigError("no coefficients to test")
    pruned = prune_aliased(fit_result, required=test_names)
    cov = _select_covariance(pruned, covariance)

    idx = [pruned.names.index(n) for n in test_names]
    b = pruned.coefficients[idx]
    block = cov[np.ix_(idx, idx)]
    scale = float(np.max(np.diag(pruned.model_covariance[np.ix_(idx, idx)])))
    q = max(_quadratic_form(b, block, scale), 0.0)
    return TestResult(
        statistic=q,
        df=len(idx),
        p_value=chi_square_upper_tail(q, len(idx)),
        tested_coefficients=test_names,
        covariance_used=covariance,
    )


def wald_univariate(fit_result: CoxFit, name: str, covariance: str = "robust") -> TestResult:
    """One-coefficient Wald test: ``Q = b^2 / V[name, name]``, df = 1."""
    return wald_multivariate(fit_result, (name,), covariance)


@dataclass(frozen=True)
class HazardRatio:
    value: float
    ci_lower: float
    ci_upper: float


def _combo_hazard_ratio(pruned: PrunedFit, covariance: str, names, weights,
                        scale: float, confidence: float):
    """Estimate, standard error, and HR interval for a coefficient combination."""
    cov = _select_covariance(pruned, covariance)
    idx = [pruned.names.index(n) for n in names]
    weights = np.asarray(weights, dtype=float)
    est = float(weights @ pruned.coefficients[idx])
    var = float(weights @ cov[np.ix_(idx, idx)] @ weights)
    se = math.sqrt(max(var, 0.0))
    z = float(ndtri((1.0 + confidence) / 2.0))
    hr = HazardRatio(
        value=math.exp(scale * est),
        ci_lower=math.exp(scale * (est - z * se)),
        ci_upper=math.exp(scale * (est + z * se)),
    )
    return est, se, hr


def hazard_ratio(fit_result: CoxFit, name: str, scale: float = 1.0,
                 confidence: float = 0.95, covariance: str = "robust") -> HazardRatio:
    """Hazard ratio ``exp(scale * b)`` with a symmetric Wald interval.

    ``scale`` is the exposure increment per reported ratio (e.g. the
    10th-to-90th-percentile increment).
    """
    if scale <= 0:
        raise ConfigError(f"scale must be > 0, got {scale}")
    if not 0 < confidence < 1:
        raise ConfigError(f"confidence must be in (0, 1), got {confidence}")
    pruned = prune_aliased(fit_result, required=(name,))
    _, _, hr = _combo_hazard_ratio(pruned, covariance, (name,), (1.0,), scale, confidence)
    return hr


@dataclass(frozen=True)
class ExposureTerm:
    """One reported effect: a main term (reference type) or main+interaction."""

    term: str
    coefficient: float
    se: float
    scale: float
    hazard_ratio: float
    ci_lower: float
    ci_upper: float


@dataclass(frozen=True)
class ExposureSummary:
    name: str
    terms: tuple[ExposureTerm, ...]


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    """Everything a comparison run produced, JSON-serializable via to_dict."""

    exposures: tuple[ExposureSummary, ...]
    difference_test: TestResult | None
    fit: CoxFit
    spec: ExposureSpec
    confidence: float
    covariance_used: str
    dataset_fingerprint: str
    n_rows: int
    n_events: int
    seed: int | None = None

    def to_dict(self) -> dict:
        diag = self.fit.diagnostics
        test = None
        if self.difference_test is not None:
            test = {
                "statistic": _json_float(self.difference_test.statistic),
                "df": self.difference_test.df,
                "p_value": _json_float(self.difference_test.p_value),
                "tested_coefficients": list(self.difference_test.tested_coefficients),
                "covariance": self.difference_test.covariance_used,
            }
        return {
            "dataset": {
                "fingerprint": self.dataset_fingerprint,
                "n_rows": self.n_rows,
                "n_events": self.n_events,
            },
            "exposure_spec": {
                "kind": self.spec.kind,
                "source_columns": list(self.spec.source_columns),
                "n_levels": self.spec.n_levels,
                "reference_level": self.spec.reference_level,
            },
            "fit": {
                "converged": self.fit.converged,
                "iterations": self.fit.iterations,
                "tie_method": self.fit.options.tie_method,
                "gradient_tolerance": self.fit.options.gradient_tolerance,
                "log_partial_likelihood": _json_float(self.fit.log_partial_likelihood),
                "n_strata_used": diag.n_strata_used,
                "n_strata_skipped": diag.n_strata_skipped,
                "separation_suspected": diag.separation_suspected,
                "aliased": [n for n, a in zip(self.fit.column_names, self.fit.aliased_mask) if a],
                "message": diag.message,
            },
            "exposures": [
                {
                    "name": e.name,
                    "terms": [
                        {
                            "term": t.term,
                            "coefficient": _json_float(t.coefficient),
                            "se": _json_float(t.se),
                            "scale": _json_float(t.scale),
                            "hazard_ratio": _json_float(t.hazard_ratio),
                            "ci_lower": _json_float(t.ci_lower),
                            "ci_upper": _json_float(t.ci_upper),
                        }
                        for t in e.terms
                    ],
                }
                for e in self.exposures
            ],
            "difference_test": test,
            "confidence": self.confidence,
            "seed": self.seed,
        }


def _json_float(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def _per_exposure_scales(dataset: Dataset, spec: ExposureSpec, scale) -> list[float]:
    """Resolve the reporting scale per exposure; 'p10-p90' uses the modeled column."""
    m = spec.n_compared
    if spec.kind == "categorical":
        return [1.0] * m
    if isinstance(scale, str):
        if scale != "p10-p90":
            raise ConfigError(f"scale must be a positive number or 'p10-p90', got {scale!r}")
        blocks, _ = _exposure_term_columns(dataset, spec)
        out = []
        for j, name in enumerate(spec.source_columns):
            width = float(np.quantile(blocks[j][:, 0], 0.9) - np.quantile(blocks[j][:, 0], 0.1))
            if width <= 0:
                raise ConfigError(
                    f"exposure {name!r} has a zero 10th-to-90th percentile increment"
                )
            out.append(width)
        return out
    scale = float(scale)
    if scale <= 0:
        raise ConfigError(f"scale must be > 0, got {scale}")
    return [scale] * m


def _stage(stage_name: str, exc: Exception) -> Exception:
    exc.args = (f"[{stage_name}] {exc.args[0]}",) + exc.args[1:] if exc.args \
        else (f"[{stage_name}]",)
    return exc


def compare_exposures(dataset: Dataset, spec: ExposureSpec,
                      options: FitOptions | None = None, *,
                      covariance: str = "robust",
                      confidence: float = 0.95,
                      scale=1.0,
                      seed: int | None = None) -> ComparisonReport:
    """Run the full duplication-method comparison on one cohort.

    Pipeline: synthesize exposure terms per ``spec.kind`` (quantile
    categories, dummies, or trend scores where applicable), duplicate the
    cohort, build the stratified interaction design, fit, form the cluster
    sandwich, and Wald-test all exposure-by-type interaction coefficients
    (univariate for a single term, multivariate otherwise).  Per-exposure
    hazard ratios come from the main(+interaction) parameterization.

    A non-converged fit yields a report with diagnostics and no test rather
    than an exception.
    """
    if not 0 < confidence < 1:
        raise ConfigError(f"confidence must be in (0, 1), got {confidence}")
    options = options or FitOptions()

    try:
        scales = _per_exposure_scales(dataset, spec, scale)
        augmented = duplicate_augment(dataset, spec)
    except Exception as exc:
        raise _stage("design", exc)
    try:
        design = build_design_matrix(augmented, spec)
    except Exception as exc:
        raise _stage("design", exc)
    try:
        fit_result = cox_fit(design, options, robust=True)
    except Exception as exc:
        raise _stage("fit", exc)

    fingerprint = dataset.fingerprint()
    if not fit_result.converged:
        return ComparisonReport(
            exposures=(),
            difference_test=None,
            fit=fit_result,
            spec=spec,
            confidence=confidence,
            covariance_used=covariance,
            dataset_fingerprint=fingerprint,
            n_rows=len(dataset),
            n_events=int(dataset.event.sum()),
            seed=seed,
        )

    try:
        test = wald_multivariate(fit_result, design.interaction_columns, covariance)
    except Exception as exc:
        raise _stage("wald", exc)

    pruned = prune_aliased(fit_result)
    available = set(pruned.names)
    exposures = []
    for j, source in enumerate(spec.source_columns):
        terms = []
        for term in augmented.term_names:
            names: tuple[str, ...]
            if j == 0:
                names, weights = (term,), (1.0,)
            else:
                names, weights = (term, f"{term}:A_type{j + 1}"), (1.0, 1.0)
            if any(n not in available for n in names):
                terms.append(ExposureTerm(term, math.nan, math.nan, scales[j],
                                          math.nan, math.nan, math.nan))
                continue
            est, se, hr = _combo_hazard_ratio(pruned, covariance, names, weights,
                                              scales[j], confidence)
            terms.append(ExposureTerm(term, est, se, scales[j],
                                      hr.value, hr.ci_lower, hr.ci_upper))
        exposures.append(ExposureSummary(name=source, terms=tuple(terms)))

    return ComparisonReport(
        exposures=tuple(exposures),
        difference_test=test,
        fit=fit_result,
        spec=spec,
        confidence=confidence,
        covariance_used=covariance,
        dataset_fingerprint=fingerprint,
        n_rows=len(dataset),
        n_events=int(dataset.event.sum()),
        seed=seed,
    )


def format_hr_ci(hr: float, lower: float, upper: float) -> str:
    """Render a hazard ratio like ``0.83 [0.79, 0.87]``."""
    if not (math.isfinite(hr) and math.isfinite(lower) and math.isfinite(upper)):
        return "NA"
    return f"{hr:.2f} [{lower:.2f}, {upper:.2f}]"


def format_p(p: float) -> str:
    if not math.isfinite(p):
        return "P = NA"
    if p < 1e-4:
        return "P < 0.0001"
    return f"P = {p:.3g}"


def render_table(report: ComparisonReport) -> str:
    """Human-readable table: exposures by effect columns plus a difference row.

    Continuous-style comparisons get a single ``Continuous`` column;
    categorical comparisons get one column per quantile group with a dash at
    the reference level.
    """
    spec = report.spec
    if not report.fit.converged:
        lines = ["Fit did not converge; no comparison available."]
        lines.append(f"  iterations: {report.fit.iterations}")
        if report.fit.diagnostics.message:
            lines.append(f"  {report.fit.diagnostics.message}")
        return "\n".join(lines)

    if spec.kind == "categorical":
        k = spec.n_levels
        headers = [""] + [f"Q{c}" for c in range(1, k + 1)]
        rows = []
        for summary in report.exposures:
            cells = [summary.name]
            by_level = {int(t.term.removeprefix("Exposures")): t for t in summary.terms}
            for c in range(1, k + 1):
                if c == spec.reference_level:
                    cells.append("-")
                else:
                    t = by_level[c]
                    cells.append(format_hr_ci(t.hazard_ratio, t.ci_lower, t.ci_upper))
            rows.append(cells)
    else:
        headers = ["", "Continuous"]
        rows = [
            [summary.name,
             format_hr_ci(summary.terms[0].hazard_ratio,
                          summary.terms[0].ci_lower,
                          summary.terms[0].ci_upper)]
            for summary in report.exposures
        ]
    diff = ["Difference"] + [""] * (len(headers) - 1)
    if report.difference_test is not None:
        diff[1] = format_p(report.difference_test.p_value)
    rows.append(diff)

    widths = [max(len(str(r[i])) for r in [headers] + rows) for i in range(len(headers))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*headers)] + [fmt.format(*r) for r in rows]
    pct = round(report.confidence * 100)
    lines.append("")
    lines.append(f"Numbers are hazard ratios [{pct}% confidence intervals].")
    if report.difference_test is not None:
        t = report.difference_test
        lines.append(
            f"Difference test: Q = {t.statistic:.4g} on {t.df} df "
            f"({t.covariance_used} covariance)."
        )
    return "\n".join(lines)

"""Closed-form per-subject metrics for individual, two-stage, and retested pooling.

The procedures:

* individual: everyone gets one test, classification is the test result.
* dorfman: pools of n are tested once; only positive pools go to individual
  testing, negatives are classified negative wholesale.
* modified: like dorfman, but a pool that reads negative is retested, up to
  r tests of the pool in total, stopping early at the first positive read.
  Subjects in a pool whose every read was negative are classified negative;
  positives are never retested. r = 1 is exactly dorfman.

All metrics are per subject: expected tests E(T), expected false negatives
E(FN), expected false positives E(FP). Conditioning on the number of
positives k in a pool makes everything a finite sum over the binomial pmf;
the identity Pr(k; n, p | subject s positive) = Pr(k-1; n-1, p) turns the
subject-level error rates into sums over the reduced pmf row.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dilution import DilutionModel, TestKit
from .kernels import (
    binomial_pmf_row,
    check_pool_size,
    check_prevalence,
    check_retest_count,
    pool_positive_prob,
    pool_test_outcome_probs,
)

__all__ = [
    "Procedure",
    "ProcedureConfig",
    "Metrics",
    "eval_individual",
    "eval_dorfman",
    "eval_modified",
    "evaluate",
    "posterior_given_negative_pool",
    "posterior_given_positive_pool",
]


class Procedure(str, Enum):
    """The three testing procedures this package evaluates."""

    INDIVIDUAL = "individual"
    DORFMAN = "dorfman"
    MODIFIED = "modified"


@dataclass(frozen=True)
class ProcedureConfig:
    """A procedure plus its shape: pool size n and total pool-test budget r.

    Individual testing fixes n = r = 1, dorfman fixes r = 1, and the
    modified procedure allows any r >= 1 (r = 1 being dorfman itself).
    """

    kind: Procedure
    n: int = 1
    r: int = 1

    def __post_init__(self) -> None:
        kind = Procedure(self.kind)
        object.__setattr__(self, "kind", kind)
        n = check_pool_size(self.n)
        r = check_retest_count(self.r)
        if kind is Procedure.INDIVIDUAL:
            if n != 1 or r != 1:
                raise ValueError(f"individual testing requires n = r = 1, got n={n}, r={r}")
        elif kind is Procedure.DORFMAN:
            if n < 2:
                raise ValueError(f"dorfman requires pool size n >= 2, got n={n}")
            if r != 1:
                raise ValueError(f"dorfman tests each pool once, got r={r}")
        else:
            if n < 2:
                raise ValueError(f"modified procedure requires pool size n >= 2, got n={n}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "r", r)


@dataclass(frozen=True)
class Metrics:
    """Per-subject expectations for one procedure configuration.

    The three stage diagnostics are optional because persisted sweeps only
    carry the headline numbers; when present they satisfy
    e_fn_pool_stage + e_fn_individual_stage == e_fn and
    e_tests_individual_stage <= e_tests.
    """

    e_tests: float
    e_fn: float
    e_fp: float
    e_tests_individual_stage: float | None = None
    e_fn_pool_stage: float | None = None
    e_fn_individual_stage: float | None = None

    def __post_init__(self) -> None:
        for name in ("e_tests", "e_fn", "e_fp"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value!r}")
            object.__setattr__(self, name, value)
        for name in (
            "e_tests_individual_stage",
            "e_fn_pool_stage",
            "e_fn_individual_stage",
        ):
            value = getattr(self, name)
            if value is None:
                continue
            value = float(value)
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value!r}")
            object.__setattr__(self, name, value)
        if self.e_tests_individual_stage is not None:
            if self.e_tests_individual_stage > self.e_tests + 1e-12:
                raise ValueError(
                    "individual-stage tests cannot exceed total expected tests: "
                    f"{self.e_tests_individual_stage} > {self.e_tests}"
                )
        if self.e_fn_pool_stage is not None and self.e_fn_individual_stage is not None:
            total = self.e_fn_pool_stage + self.e_fn_individual_stage
            if abs(total - self.e_fn) > 1e-12:
                raise ValueError(
                    f"stage false negatives {total} do not add up to e_fn {self.e_fn}"
                )


def eval_individual(kit: TestKit, p: float) -> Metrics:
    """Metrics for one-test-per-subject classification.

    E(T) = 1, E(FN) = p (1 - Se_I), E(FP) = (1 - p)(1 - Sp).
    """
    p = check_prevalence(p)
    e_fn = p * (1.0 - kit.se_i)
    return Metrics(
        e_tests=1.0,
        e_fn=e_fn,
        e_fp=(1.0 - p) * (1.0 - kit.sp),
        e_tests_individual_stage=1.0,
        e_fn_pool_stage=0.0,
        e_fn_individual_stage=e_fn,
    )


def _pooled_metrics(model: DilutionModel, p: float, n: int, r: int) -> Metrics:
    """Shared dorfman / modified computation; dorfman is the r = 1 case."""
    kit = model.kit

    # Probability the pool is declared positive (some read positive within r).
    p_declared_pos, _ = pool_test_outcome_probs(model, n, p, kit.sp, r)

    k = np.arange(1, n + 1)
    se = np.array([model.sensitivity(n, int(j)) for j in k])
    se_rep = 1.0 - (1.0 - se) ** r

    pmf = binomial_pmf_row(n, p)            # Pr(k; n, p), k = 0..n
    pmf_pos = binomial_pmf_row(n - 1, p)    # Pr(k-1; n-1, p) for k = 1..n

    # A positive subject is missed either because its pool never reads
    # positive, or because the follow-up individual test misses it.
    e_fn_pool = p * float((1.0 - se_rep) @ pmf_pos)
    e_fn_individual = p * (1.0 - kit.se_i) * float(se_rep @ pmf_pos)

    # A negative subject is falsely flagged only in the individual stage, so
    # its pool must read positive first: that pool-positive probability for a
    # negative subject is P(T=1) minus the positive-subject share.
    e_fp = (1.0 - kit.sp) * (p_declared_pos - p * float(se_rep @ pmf_pos))

    # Pool tests per subject: the first test always happens; test l in 2..r
    # happens only if reads 1..l-1 all came back negative.
    p_pool_any_pos = pool_positive_prob(p, n)
    extra_reads = 0.0
    for l in range(2, r + 1):
        all_neg_clean = (1.0 - p_pool_any_pos) * kit.sp ** (l - 1)
        all_neg_diluted = float(((1.0 - se) ** (l - 1)) @ pmf[1:])
        extra_reads += all_neg_clean + all_neg_diluted
    e_tests = (1.0 + extra_reads) / n + p_declared_pos

    return Metrics(
        e_tests=e_tests,
        e_fn=e_fn_pool + e_fn_individual,
        e_fp=e_fp,
        e_tests_individual_stage=p_declared_pos,
        e_fn_pool_stage=e_fn_pool,
        e_fn_individual_stage=e_fn_individual,
    )


def eval_dorfman(model: DilutionModel, p: float, n: int) -> Metrics:
    """Metrics for classic two-stage pooling: one pool test, no retests."""
    p = check_prevalence(p)
    n = check_pool_size(n, minimum=2)
    return _pooled_metrics(model, p, n, r=1)


def eval_modified(model: DilutionModel, p: float, n: int, r: int) -> Metrics:
    """Metrics for pooling with up to r pool tests, early-stopped on a positive."""
    p = check_prevalence(p)
    n = check_pool_size(n, minimum=2)
    r = check_retest_count(r)
    return _pooled_metrics(model, p, n, r)


def evaluate(model: DilutionModel, p: float, config: ProcedureConfig) -> Metrics:
    """Dispatch to the evaluator matching config.kind."""
    if config.kind is Procedure.INDIVIDUAL:
        return eval_individual(model.kit, p)
    if config.kind is Procedure.DORFMAN:
        return eval_dorfman(model, p, config.n)
    return eval_modified(model, p, config.n, config.r)


def _pool_read_probabilities(
    model: DilutionModel, p: float, n: int, r: int
) -> tuple[float, float]:
    """(P(pool declared positive), detection share of a positive subject's pool)."""
    p_declared_pos, _ = pool_test_outcome_probs(model, n, p, model.kit.sp, r)
    k = np.arange(1, n + 1)
    se_rep = 1.0 - (1.0 - np.array([model.sensitivity(n, int(j)) for j in k])) ** r
    pmf_pos = binomial_pmf_row(n - 1, p)
    detected_share = float(se_rep @ pmf_pos)
    return p_declared_pos, detected_share


def posterior_given_negative_pool(
    model: DilutionModel, p: float, n: int, r: int = 1
) -> float:
    """P(subject positive | its pool was declared negative).

    This is the per-subject leakage of the pool stage; with no dilution and a
    perfect kit it would be zero.
    """
    p = check_prevalence(p)
    n = check_pool_size(n, minimum=2)
    r = check_retest_count(r)
    p_declared_pos, detected_share = _pool_read_probabilities(model, p, n, r)
    return p * (1.0 - detected_share) / (1.0 - p_declared_pos)


def posterior_given_positive_pool(
    model: DilutionModel, p: float, n: int, r: int = 1
) -> float:
    """P(subject positive | its pool was declared positive)."""
    p = check_prevalence(p)
    n = check_pool_size(n, minimum=2)
    r = check_retest_count(r)
    p_declared_pos, detected_share = _pool_read_probabilities(model, p, n, r)
    return p * detected_share / p_declared_pos

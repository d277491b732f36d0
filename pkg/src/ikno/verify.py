"""Self-contained correctness suites with machine-readable results.

Each suite pits the fast structured code paths against slow independent
oracles (dense inversion, finite differences, explicit eigenvalues) and
records the worst observed deviation. The CLI ``verify`` command runs all
of them and fails loudly on any regression.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .kernels import AxisKernelParams, PointCloud, product_kernel_eval, axis_gram
from .model import ModelConfig, init_params
from .resolvent import (
    apply_naive_inverse,
    apply_tp,
    apply_vanilla,
    build_tp,
    build_vanilla,
    inverse_power_partial_sum,
)
from .rng import Rng64
from .tensor_linalg import kron_materialize
from .training import batch_loss, grad_analytic, grad_fd

__all__ = [
    "CheckResult",
    "VerifyReport",
    "suite_oracle_equivalence",
    "suite_neumann_convergence",
    "suite_inverse_power",
    "suite_dimension_split",
    "suite_positive_definite",
    "suite_gradient",
    "run_all",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_deviation: float
    threshold: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "max_deviation": float(self.max_deviation),
            "threshold": float(self.threshold),
            "detail": self.detail,
        }


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)
    cases: int = 0
    wall_time_s: float = 0.0

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "report": "verify",
            "cases": int(self.cases),
            "all_passed": self.all_passed,
            "wall_time_s": float(self.wall_time_s),
            "checks": [c.to_dict() for c in self.checks],
        }


def _random_params(rng: Rng64) -> AxisKernelParams:
    return AxisKernelParams(
        c=float(np.exp(rng.uniform(-1.0, 1.0))),
        beta=float(rng.uniform(0.3, 3.0) * (1 if rng.uniform() < 0.5 else -1)),
        gamma=float(rng.uniform(0.3, 3.0) * (1 if rng.uniform() < 0.5 else -1)),
    )


def _random_axis_grams(rng: Rng64, d: int, n_max: int = 8):
    grams = []
    for _ in range(d):
        n = 2 + rng.integer(n_max - 1)
        coords = np.sort(rng.uniform_array(n, -1.0, 1.0))
        # nudge any near-duplicates apart so the Gram stays strictly PD
        for i in range(1, n):
            if coords[i] - coords[i - 1] < 1e-3:
                coords[i] = coords[i - 1] + 1e-3
        grams.append(axis_gram(_random_params(rng), coords))
    return grams


def _spectral_radius(grams) -> float:
    rho = 1.0
    for g in grams:
        rho *= float(np.abs(np.linalg.eigvalsh(g)).max())
    return rho


def suite_oracle_equivalence(
    cases: int = 100, seed: int = 0, inject_fault: str | None = None
) -> CheckResult:
    """Fast Kronecker resolvents vs. explicit dense inversion, random instances.

    Alpha alternates between the negative regime [-2, 0) and the positive
    Neumann-valid regime (0, 0.9/rho(K)]. The optional ``tp-as-vanilla``
    fault swaps the tensor-product apply into the full-resolvent check so
    the suite demonstrably catches that substitution.
    """
    rng = Rng64(seed ^ 0x0E0A)
    worst = 0.0
    detail = ""
    for i in range(cases):
        d = 1 + rng.integer(3)
        grams = _random_axis_grams(rng, d)
        if i % 2 == 0:
            alpha = rng.uniform(-2.0, -1e-3)
        else:
            alpha = rng.uniform(1e-3, 0.9 / _spectral_radius(grams))
        sizes = tuple(g.shape[0] for g in grams)
        t = rng.uniform_array(sizes + (2,), -1.0, 1.0)

        rv = build_vanilla(grams, alpha)
        fast = apply_vanilla(rv, t)
        if inject_fault == "tp-as-vanilla" and d >= 2:
            fast = apply_tp(build_tp(grams, alpha), t)
        ref = apply_naive_inverse(grams, alpha, t)
        dev = float(np.abs(fast - ref).max() / max(np.abs(ref).max(), 1.0))

        # tensor-product variant against its own dense oracle
        rt = build_tp(grams, alpha)
        dense_tp = kron_materialize(
            [np.linalg.inv(np.eye(g.shape[0]) - alpha * g) for g in grams]
        )
        m = int(np.prod(sizes))
        ref_tp = (dense_tp @ t.reshape(m, -1)).reshape(t.shape)
        dev_tp = float(
            np.abs(apply_tp(rt, t) - ref_tp).max() / max(np.abs(ref_tp).max(), 1.0)
        )
        if max(dev, dev_tp) > worst:
            worst = max(dev, dev_tp)
            detail = f"case {i}: d={d} sizes={sizes} alpha={alpha:.4f}"
    return CheckResult(
        name="resolvent-oracle-equivalence",
        passed=worst <= 1e-8,
        max_deviation=worst,
        threshold=1e-8,
        detail=detail,
    )


# Stored convergence instance: eigenvalues {0.5, 1.5}, alpha = +0.6, so the
# series ratio is rho(alpha*K) = 0.9 and the geometric bound is tight.
_CONV_GRAM = np.array([[1.0, 0.5], [0.5, 1.0]])
_CONV_ALPHA = 0.6


def suite_neumann_convergence() -> CheckResult:
    k = _CONV_GRAM
    alpha = _CONV_ALPHA
    rho = alpha * float(np.linalg.eigvalsh(k).max())
    resolvent = np.linalg.inv(np.eye(2) - alpha * k)
    worst_ratio = 1.0
    ok = abs(rho - 0.9) <= 0.02
    detail = f"rho={rho:.3f}"
    for p in (1, 5, 10, 20, 50):
        rp = np.eye(2)
        for _ in range(p):
            rp = np.eye(2) + alpha * k @ rp
        err = float(np.linalg.norm(rp - resolvent, 2))
        bound = rho ** (p + 1) / (1.0 - rho)
        ratio = max(err / bound, bound / err)
        worst_ratio = max(worst_ratio, ratio)
        ok = ok and err <= 3.0 * bound and err >= bound / 3.0
        detail += f" p={p}:err/bound={err / bound:.3f}"
    return CheckResult(
        name="neumann-geometric-bound",
        passed=ok,
        max_deviation=worst_ratio,
        threshold=3.0,
        detail=detail,
    )


def _rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


# Stored inverse-power instances: eigenvalues {2, 3} (|alpha|*lambda_min = 2,
# convergent) and {0.5, 1.5} (|alpha|*lambda_min = 0.5, divergent), alpha = -1.
_U_INV = _rotation(0.3)
_INV_GRAM_CONV = _U_INV @ np.diag([2.0, 3.0]) @ _U_INV.T
_INV_GRAM_DIV = _U_INV @ np.diag([0.5, 1.5]) @ _U_INV.T
_INV_ALPHA = -1.0


def suite_inverse_power() -> CheckResult:
    alpha = _INV_ALPHA
    resolvent = np.linalg.inv(np.eye(2) - alpha * _INV_GRAM_CONV)
    dev = None
    for n in range(1, 26):
        s = inverse_power_partial_sum([_INV_GRAM_CONV], alpha, n)
        dev = float(np.linalg.norm(s - resolvent, 2))
        if dev <= 1e-6:
            break
    converged = dev is not None and dev <= 1e-6

    norms = [
        float(np.linalg.norm(inverse_power_partial_sum([_INV_GRAM_DIV], alpha, n), 2))
        for n in (1, 5, 10, 15, 20, 25)
    ]
    diverges = all(b > a for a, b in zip(norms, norms[1:]))
    return CheckResult(
        name="inverse-power-regimes",
        passed=converged and diverges,
        max_deviation=float(dev),
        threshold=1e-6,
        detail=f"terms<=25 dev={dev:.3e}; divergent norms {norms[0]:.2e}->{norms[-1]:.2e}",
    )


# Stored d=2 witness where the tensor-product and full resolvents differ.
_WITNESS_GRAM = np.array([[1.0, 0.5], [0.5, 1.0]])
_WITNESS_ALPHA = -1.0


def suite_dimension_split(cases: int = 20, seed: int = 0) -> CheckResult:
    """d=1: TP and Vanilla coincide to 1e-9. d=2 witness: gap > 1e-3."""
    rng = Rng64(seed ^ 0xD51)
    worst_d1 = 0.0
    for _ in range(cases):
        grams = _random_axis_grams(rng, 1)
        alpha = rng.uniform(-2.0, -1e-3)
        t = rng.uniform_array((grams[0].shape[0], 2), -1.0, 1.0)
        a = apply_vanilla(build_vanilla(grams, alpha), t)
        b = apply_tp(build_tp(grams, alpha), t)
        worst_d1 = max(worst_d1, float(np.abs(a - b).max()))

    grams2 = [_WITNESS_GRAM, _WITNESS_GRAM]
    t2 = np.arange(8.0).reshape(2, 2, 2)
    gap = float(
        np.abs(
            apply_vanilla(build_vanilla(grams2, _WITNESS_ALPHA), t2)
            - apply_tp(build_tp(grams2, _WITNESS_ALPHA), t2)
        ).max()
    )
    return CheckResult(
        name="d1-coincidence-d2-gap",
        passed=worst_d1 <= 1e-9 and gap > 1e-3,
        max_deviation=worst_d1,
        threshold=1e-9,
        detail=f"d=2 witness gap {gap:.3e} (> 1e-3 required)",
    )


def suite_positive_definite(cases: int = 200, seed: int = 0) -> CheckResult:
    """Random valid kernel parameterizations give PSD Grams on distinct points."""
    rng = Rng64(seed ^ 0x9D)
    worst = 0.0  # most negative (min_eig / trace) seen, sign-flipped
    detail = ""
    for i in range(cases):
        d = 1 + rng.integer(3)
        n = 2 + rng.integer(15)
        params = [_random_params(rng) for _ in range(d)]
        pts = rng.uniform_array((n, d), -1.0, 1.0)
        gram = np.empty((n, n))
        for a in range(n):
            for b in range(a, n):
                gram[a, b] = gram[b, a] = product_kernel_eval(params, pts[a], pts[b])
        eigs = np.linalg.eigvalsh(gram)
        rel = -float(eigs.min()) / float(np.trace(gram))
        if rel > worst:
            worst = rel
            detail = f"case {i}: d={d} n={n} min_eig/trace={-rel:.3e}"
    return CheckResult(
        name="gram-positive-definite",
        passed=worst <= 1e-10,
        max_deviation=worst,
        threshold=1e-10,
        detail=detail,
    )


def suite_gradient(seed: int = 0, variants=("tp", "vanilla", "truncated")) -> CheckResult:
    """Analytic gradient vs. central finite differences on a toy model."""
    rng = Rng64(seed ^ 0x6AD)
    worst = 0.0
    detail = ""
    for variant in variants:
        cfg = ModelConfig(
            dim=2, grid_l=4, hidden=8, branches=2, in_channels=1,
            processor="identity", variant=variant,
        )
        pv = init_params(cfg, seed)
        pv.values += rng.uniform_array(pv.size, -0.05, 0.05)
        cloud = PointCloud(
            rng.uniform_array((6, 2), -1.0, 1.0),
            channels=rng.uniform_array((6, 1), -1.0, 1.0),
        )
        queries = PointCloud(rng.uniform_array((5, 2), -1.0, 1.0))
        target = rng.uniform_array((5, 1), -1.0, 1.0)
        batch = [(cloud, queries, target)]
        g = grad_analytic(cfg, pv, batch)

        def closure(values, cfg=cfg, pv=pv, batch=batch):
            probe = pv.copy()
            probe.values = values
            return batch_loss(cfg, probe, batch)

        g_fd = grad_fd(closure, pv.values)
        mask = np.abs(g_fd) >= 1e-6
        rel = np.abs(g - g_fd)[mask] / np.abs(g_fd)[mask]
        dev = float(rel.max()) if mask.any() else 0.0
        if dev > worst:
            worst = dev
            detail = f"variant={variant} params={pv.size}"
    return CheckResult(
        name="analytic-vs-fd-gradient",
        passed=worst <= 1e-4,
        max_deviation=worst,
        threshold=1e-4,
        detail=detail,
    )


def run_all(cases: int = 100, seed: int = 0, inject_fault: str | None = None) -> VerifyReport:
    t0 = time.monotonic()
    report = VerifyReport(cases=cases)
    report.checks = [
        suite_oracle_equivalence(cases=cases, seed=seed, inject_fault=inject_fault),
        suite_neumann_convergence(),
        suite_inverse_power(),
        suite_dimension_split(seed=seed),
        suite_positive_definite(seed=seed),
        suite_gradient(seed=seed),
    ]
    report.wall_time_s = time.monotonic() - t0
    return report

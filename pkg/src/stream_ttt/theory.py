"""Closed-form oracles and Monte-Carlo checks of the window bias-variance bound.

Setting: ``l_m(theta; x) = (alpha/2) ||theta - W x||^2`` with
``W = (beta/alpha) I`` on a linear-drift stream ``x_t = x_1 + (t-1) eta u``.
Test-time training on a window of ``k`` frames converges to the stationary
point of the window-averaged self-supervised gradient,
``theta~ = W xbar + deltabar / alpha``. Its excess risk at frame ``t`` splits
into a deterministic bias from stale frames and a variance from the noise
average; both have closed forms here.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .models.quadratic import QuadModelSpec, ssl_noise_block
from .parallel import pmap


def theorem_bound(alpha: float, beta: float, eta: float, sigma: float, k: int) -> float:
    """``(1 / 2 alpha) (k^2 beta^2 eta^2 + sigma^2 / k)``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return (k * k * beta * beta * eta * eta + sigma * sigma / k) / (2.0 * alpha)


@dataclass(frozen=True)
class OptimalK:
    """Continuous minimizer of the bound and its best integer neighbor."""

    continuous: float
    integer: int | None

    def __float__(self) -> float:
        return self.continuous


def optimal_k(alpha: float, beta: float, eta: float, sigma: float) -> OptimalK:
    """``(sigma^2 / (beta^2 eta^2))^(1/3)`` and the better of its floor/ceil.

    With ``beta * eta = 0`` the bound decreases forever, so the continuous
    optimum is ``inf`` and there is no integer optimum.
    """
    if beta * eta == 0:
        return OptimalK(math.inf, None)
    k = (sigma * sigma / (beta * beta * eta * eta)) ** (1.0 / 3.0)
    cands = {max(1, math.floor(k)), max(1, math.ceil(k))}
    best = min(sorted(cands), key=lambda c: theorem_bound(alpha, beta, eta, sigma, c))
    return OptimalK(k, best)


def closed_form_window_solution(spec: QuadModelSpec, window_frames, deltas) -> np.ndarray:
    """``W xbar + deltabar / alpha``: where the window-averaged inner loss is stationary."""
    X = np.atleast_2d(np.asarray([getattr(f, "values", f) for f in window_frames], dtype=float))
    D = np.atleast_2d(np.asarray(deltas, dtype=float))
    if len(X) == 0:
        raise ValueError("window must be nonempty")
    return spec.W @ X.mean(0) + D.mean(0) / spec.alpha


def window_ssl_grad(spec: QuadModelSpec, theta, window_frames, deltas) -> np.ndarray:
    """Window average of ``alpha (theta - W x) - delta``."""
    X = np.atleast_2d(np.asarray([getattr(f, "values", f) for f in window_frames], dtype=float))
    D = np.atleast_2d(np.asarray(deltas, dtype=float))
    return spec.alpha * (theta - spec.W @ X.mean(0)) - D.mean(0)


def expected_excess_risk_oracle(spec: QuadModelSpec, k: int, eta: float,
                                direction=None, drift: str = "linear-drift") -> tuple[float, float]:
    """``(bias_term, variance_term)`` for a window of ``k`` frames ending at ``t``.

    On linear drift with unit ``direction`` ``u`` the window mean sits
    ``(k - 1) eta / 2`` behind the current frame, so
    ``bias = (alpha/2) ||W u||^2 ((k-1) eta / 2)^2``. The variance term is
    ``sigma^2 / (2 alpha k)``. Without a direction, ``||W u||`` is taken as
    ``||W||_2`` (the worst direction).
    """
    if drift not in ("linear-drift", "constant"):
        raise ValueError(f"no closed-form oracle for stream kind {drift!r}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if drift == "constant":
        eta = 0.0
    if direction is None:
        gain = np.linalg.norm(spec.W, 2)
    else:
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)
        gain = np.linalg.norm(spec.W @ u)
    lag = (k - 1) * eta / 2.0
    bias = 0.5 * spec.alpha * (gain * lag) ** 2
    variance = spec.sigma ** 2 / (2.0 * spec.alpha * k)
    return float(bias), float(variance)


# ---------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class TheoremInstance:
    """One grid point of a sweep: parameters, window, stream length and seed."""

    alpha: float
    beta: float
    eta: float
    sigma: float
    k: int
    d: int = 8
    T: int | None = None
    drift: str = "linear-drift"
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.eta < 0 or self.sigma < 0 or self.beta < 0:
            raise ValueError("beta, eta and sigma must be non-negative")
        if self.k < 1 or self.d < 1:
            raise ValueError("k and d must be >= 1")

    def quad_spec(self) -> QuadModelSpec:
        return QuadModelSpec.isotropic(self.alpha, self.beta, self.d, self.sigma)


@dataclass
class BoundReport:
    """Measured and analytic excess risk at one window size."""

    k: int
    measured_mean: float
    measured_stderr: float
    bound: float
    oracle_expectation: float
    bias_term: float
    variance_term: float
    cross_term_mean: float = 0.0
    cross_term_stderr: float = 0.0
    trials: int = 0
    beta_realized: float = float("nan")


def _cell(args):
    """Mean excess risk and cross-term of one ``(k, trial)`` cell."""
    inst, trial, eval_frames = args
    spec = inst.quad_spec()
    k, d = inst.k, inst.d
    T = k + eval_frames - 1
    cell_seed = [inst.seed & (2**64 - 1), k, trial]
    rng = np.random.default_rng(cell_seed + [0x57])
    noise_seed = int(np.random.SeedSequence(cell_seed + [0x5E]).generate_state(1, np.uint64)[0])
    x1 = rng.standard_normal(d)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    if inst.drift == "constant":
        step = np.zeros(d)
    elif inst.drift == "linear-drift":
        step = inst.eta * u
    else:
        raise ValueError(f"sweeps support linear-drift and constant streams, not {inst.drift!r}")
    X = x1 + np.arange(T)[:, None] * step
    delta = ssl_noise_block(np.arange(1, T + 1), noise_seed, d, inst.sigma)
    cx = np.vstack([np.zeros(d), np.cumsum(X, axis=0)])
    cd = np.vstack([np.zeros(d), np.cumsum(delta, axis=0)])
    ends = np.arange(k, T + 1)  # 1-based t whose window is full
    xbar = (cx[ends] - cx[ends - k]) / k
    dsum = cd[ends] - cd[ends - k]
    xt = X[ends - 1]
    theta = xbar @ spec.W.T + dsum / (k * spec.alpha)
    r = theta - xt @ spec.W.T
    excess = 0.5 * spec.alpha * np.sum(r * r, axis=1)
    A = k * spec.alpha * (xt - xbar) @ spec.W.T
    B = -dsum
    cross = np.sum(A * B, axis=1) / (k * k)
    return float(excess.mean()), float(cross.mean())


def theorem_sweep(alpha: float, beta: float, eta: float, sigma: float, k_grid,
                  trials: int, d: int = 8, eval_frames: int = 16, seed: int = 0,
                  drift: str = "linear-drift", jobs: int = 1) -> list[BoundReport]:
    """Monte-Carlo excess risk of the converged window solution for each ``k``.

    Each ``(k, trial)`` cell draws its own stream start, drift direction and
    noise from ``(seed, k, trial)``, then averages the excess risk over the
    ``eval_frames`` frames whose window is full. Mean and standard error are
    taken across trials.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    insts = [TheoremInstance(alpha, beta, eta, sigma, int(k), d, int(k) + eval_frames - 1,
                             drift, seed) for k in k_grid]
    cells = [(inst, trial, eval_frames) for inst in insts for trial in range(trials)]
    if jobs > 1:
        chunks = [cells[i:i + trials] for i in range(0, len(cells), trials)]
        results = [r for chunk in pmap(_cells, chunks, jobs) for r in chunk]
    else:
        results = [_cell(c) for c in cells]
    reports = []
    for i, inst in enumerate(insts):
        vals = np.array(results[i * trials:(i + 1) * trials])
        exc, cross = vals[:, 0], vals[:, 1]
        spec = inst.quad_spec()
        bias, var = expected_excess_risk_oracle(spec, inst.k, eta if drift == "linear-drift" else 0.0)
        se = float(exc.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
        cse = float(cross.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
        reports.append(BoundReport(
            k=inst.k, measured_mean=math.fsum(exc) / trials, measured_stderr=se,
            bound=theorem_bound(alpha, spec.beta(), eta, sigma, inst.k),
            oracle_expectation=bias + var, bias_term=bias, variance_term=var,
            cross_term_mean=math.fsum(cross) / trials, cross_term_stderr=cse,
            trials=trials, beta_realized=spec.beta()))
    return reports


def _cells(chunk):
    return [_cell(c) for c in chunk]


SWEEP_COLUMNS = ("k", "measured_mean", "measured_stderr", "oracle", "bias_term",
                 "variance_term", "bound")


def sweep_csv(reports: list[BoundReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in reports:
        w.writerow([str(r.k)] + ["%.17g" % v for v in (
            r.measured_mean, r.measured_stderr, r.oracle_expectation, r.bias_term,
            r.variance_term, r.bound)])
    return buf.getvalue()


# ---------------------------------------------------------------- lemma

@dataclass(frozen=True)
class LemmaResult:
    gap: float
    bound: float
    holds: bool


def verify_lemma(H, b, v, alpha: float, tol: float = 1e-10) -> LemmaResult:
    """Compare the minima of ``f(x) = x^T H x / 2 + b^T x`` and of ``f + v^T x``.

    With ``x* = -H^{-1} b`` and ``x~* = -H^{-1} (b + v)`` the gap
    ``f(x~*) - f(x*)`` never exceeds ``||v||^2 / (2 alpha)`` when
    ``lambda_min(H) >= alpha``.
    """
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    v = np.asarray(v, dtype=float)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not np.allclose(H, H.T, atol=1e-12 * max(1.0, np.abs(H).max())):
        raise ValueError("H must be symmetric")
    lam_min = float(np.linalg.eigvalsh(H)[0])
    if lam_min <= tol:
        raise ValueError(f"H is singular to tolerance (lambda_min={lam_min:.3e})")
    if lam_min < alpha * (1 - 1e-12):
        raise ValueError(f"lambda_min(H)={lam_min} is below alpha={alpha}")
    L = np.linalg.cholesky(H)

    def solve(rhs):
        return np.linalg.solve(L.T, np.linalg.solve(L, rhs))

    x_star = -solve(b)
    x_tilde = -solve(b + v)

    def f(x):
        return 0.5 * x @ H @ x + b @ x

    gap = float(f(x_tilde) - f(x_star))
    bound = float(v @ v) / (2.0 * alpha)
    return LemmaResult(gap, bound, gap <= bound + 1e-9)


def random_lemma_instance(rng: np.random.Generator, alpha: float, max_dim: int = 10):
    """A random ``(H, b, v)`` with ``d <= max_dim`` and spectrum in ``[alpha, 10 alpha]``."""
    d = int(rng.integers(1, max_dim + 1))
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = alpha * rng.uniform(1.0, 10.0, d)
    lam[rng.integers(d)] = alpha  # make the constraint tight
    H = (Q * lam) @ Q.T
    H = 0.5 * (H + H.T)
    b = rng.standard_normal(d) * rng.uniform(0.1, 10.0)
    v = rng.standard_normal(d) * rng.uniform(0.01, 10.0)
    return H, b, v


@dataclass
class LemmaSummary:
    instances: int
    holding: int
    max_ratio: float
    isotropic_gap: float
    isotropic_bound: float
    results: list[LemmaResult] = field(default_factory=list, repr=False)

    @property
    def isotropic_error(self) -> float:
        return abs(self.isotropic_gap - self.isotropic_bound)


def lemma_check(instances: int = 1000, alpha: float = 1.0, max_dim: int = 10,
                seed: int = 0) -> LemmaSummary:
    """Run :func:`verify_lemma` on random instances plus the isotropic equality case."""
    rng = np.random.default_rng([seed & (2**64 - 1), 0x1E44A])
    results = []
    for _ in range(instances):
        H, b, v = random_lemma_instance(rng, alpha, max_dim)
        results.append(verify_lemma(H, b, v, alpha))
    d = max_dim
    v = rng.standard_normal(d)
    iso = verify_lemma(alpha * np.eye(d), np.zeros(d), v, alpha)
    ratios = [r.gap / r.bound for r in results if r.bound > 0]
    return LemmaSummary(instances, sum(r.holds for r in results),
                        max(ratios) if ratios else 0.0, iso.gap, iso.bound, results)

"""Monte Carlo engine, GARCH(1,1) modelling, and i.i.d. model fitting.

``mc_null`` reproduces the null distributions of the nominal backtest
statistics: each run draws an n-day sample, secures it with the analytic
reserve for the requested level, and tallies the resulting counts. Runs
derive their random streams from (seed, run_index), so the aggregate is
reproducible and identical under any worker count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import optimize
from scipy.signal import lfilter
from scipy.special import expit

from .dist import DistSpec, Normal, RngStream, SkewT, StudentT
from .estimators import true_risk

__all__ = [
    "GARCH_BURN_IN",
    "McConfig",
    "NullDistribution",
    "GarchSpec",
    "FitError",
    "mc_null",
    "garch_simulate",
    "garch_fit",
    "fit_iid",
    "garch_to_json",
    "garch_from_json",
    "fit_and_simulate",
]

GARCH_BURN_IN = 500
_MAXFEV = 2000


@dataclass(frozen=True)
class GarchSpec:
    """GARCH(1,1) with unit-variance innovations.

    Recursion: sigma2_t = omega + a1 * eps_{t-1}^2 + b1 * sigma2_{t-1},
    eps_t = sigma_t * z_t, return_t = mu + eps_t. Innovations z_t are
    standardized to zero mean and unit variance, so sigma_t is the
    conditional standard deviation for both normal and skew-t kinds.
    """

    mu: float
    omega: float
    a1: float
    b1: float
    innovation: str = "normal"
    nu: Optional[float] = None
    xi: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.a1 < 0 or self.b1 < 0:
            raise ValueError("a1 and b1 must be nonnegative")
        if not self.a1 + self.b1 < 1:
            raise ValueError(
                f"need a1 + b1 < 1 for stationarity, got {self.a1 + self.b1}"
            )
        if self.innovation == "normal":
            if self.nu is not None or self.xi is not None:
                raise ValueError("normal innovations take no nu/xi")
        elif self.innovation == "skew_t":
            if self.nu is None or self.xi is None:
                raise ValueError("skew_t innovations need nu and xi")
            SkewT(self.nu, self.xi)  # reuse parameter validation
        else:
            raise ValueError(f"unknown innovation kind {self.innovation!r}")

    def stationary_variance(self) -> float:
        return self.omega / (1.0 - self.a1 - self.b1)


def garch_to_json(g: GarchSpec) -> dict:
    out = {
        "mu": g.mu,
        "omega": g.omega,
        "a1": g.a1,
        "b1": g.b1,
        "innovation": g.innovation,
    }
    if g.innovation == "skew_t":
        out["nu"] = g.nu
        out["xi"] = g.xi
    return out


def garch_from_json(obj: dict) -> GarchSpec:
    if not isinstance(obj, dict):
        raise ValueError("GARCH JSON must be an object")
    allowed = {"mu", "omega", "a1", "b1", "innovation", "nu", "xi"}
    extra = set(obj) - allowed
    if extra:
        raise ValueError(f"unknown GARCH fields {sorted(extra)}")
    try:
        return GarchSpec(**obj)
    except TypeError as exc:
        raise ValueError(f"bad GARCH parameters: {exc}") from None


class _Innovation:
    """Unit-variance innovation law with its tail risk values."""

    def __init__(self, kind: str, nu: Optional[float] = None, xi: Optional[float] = None):
        self.kind = kind
        if kind == "normal":
            self.base = Normal()
            self.shift = 0.0
            self.spread = 1.0
        else:
            self.base = SkewT(nu, xi)
            self.shift = self.base.mean()
            self.spread = math.sqrt(self.base.variance())

    @classmethod
    def of(cls, g: GarchSpec) -> "_Innovation":
        return cls(g.innovation, g.nu, g.xi)

    def sample(self, n: int, stream: RngStream) -> np.ndarray:
        raw = self.base.sample(n, stream)
        return (raw - self.shift) / self.spread

    def quantile(self, p: float) -> float:
        return (float(self.base.quantile(p)) - self.shift) / self.spread

    def expected_shortfall(self, alpha: float) -> float:
        return (true_risk(self.base, alpha, "ES") + self.shift) / self.spread

    def logpdf(self, z: np.ndarray) -> np.ndarray:
        # density of (base - shift) / spread
        return self.base.logpdf(self.shift + self.spread * z) + math.log(self.spread)


def garch_simulate(
    g: GarchSpec, n: int, stream: RngStream, burn_in: int = GARCH_BURN_IN
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate n returns and the conditional-sd path that generated them.

    The recursion starts from the stationary variance and discards
    ``burn_in`` warm-up steps, so the retained path is effectively a draw
    from the stationary law.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    innov = _Innovation.of(g)
    z = innov.sample(burn_in + n, stream)
    total = burn_in + n
    sigma = np.empty(total)
    s2 = g.stationary_variance()
    omega, a1, b1 = g.omega, g.a1, g.b1
    for t in range(total):
        sd = math.sqrt(s2)
        sigma[t] = sd
        eps = sd * z[t]
        s2 = omega + a1 * eps * eps + b1 * s2
    returns = g.mu + sigma * z
    return returns[burn_in:], sigma[burn_in:]


def _conditional_variance(
    x: np.ndarray, mu: float, omega: float, a1: float, b1: float
) -> tuple[np.ndarray, np.ndarray]:
    """Variance path implied by observed returns, seeded at the sample variance."""
    e = x - mu
    s0 = float(np.var(x, ddof=1))
    drive = omega + a1 * e[:-1] ** 2
    rest, _state = lfilter([1.0], [1.0, -b1], drive, zi=np.array([b1 * s0]))
    s2 = np.concatenate(([s0], rest))
    return s2, e


def _garch_nll(theta: np.ndarray, x: np.ndarray, kind: str) -> float:
    mu = theta[0]
    omega = math.exp(theta[1])
    persistence = expit(theta[2])
    frac = expit(theta[3])
    a1 = persistence * frac
    b1 = persistence * (1.0 - frac)
    s2, e = _conditional_variance(x, mu, omega, a1, b1)
    if not np.all(np.isfinite(s2)) or np.any(s2 <= 0):
        return 1e12
    if kind == "normal":
        ll = -0.5 * np.sum(np.log(2.0 * math.pi * s2) + e * e / s2)
    else:
        innov = _Innovation("skew_t", nu=2.0 + math.exp(theta[4]), xi=math.exp(theta[5]))
        sd = np.sqrt(s2)
        ll = np.sum(innov.logpdf(e / sd) - np.log(sd))
    if not np.isfinite(ll):
        return 1e12
    return -float(ll)


class FitError(RuntimeError):
    """Raised when an optimizer exhausts its budget without converging.

    Carries the best parameter point seen (``best``) and the optimizer
    diagnostics (``diagnostics``) for post-mortems.
    """

    def __init__(self, message: str, best: dict, diagnostics: dict):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics


def _multistart_minimize(fun, starts: Sequence[np.ndarray], args=()) -> np.ndarray:
    best = None
    best_converged = None
    for x0 in starts:
        res = optimize.minimize(
            fun,
            np.asarray(x0, dtype=float),
            args=args,
            method="Nelder-Mead",
            options={"maxfev": _MAXFEV, "xatol": 1e-8, "fatol": 1e-10},
        )
        if best is None or res.fun < best.fun:
            best = res
        if res.success and (best_converged is None or res.fun < best_converged.fun):
            best_converged = res
    if best_converged is None:
        raise FitError(
            f"optimizer did not converge within {_MAXFEV} evaluations per start: "
            f"{best.message}",
            best={"theta": best.x.tolist(), "nll": float(best.fun)},
            diagnostics={"nfev": int(best.nfev), "message": str(best.message)},
        )
    return best_converged.x


def garch_fit(returns, innovation: str = "normal") -> GarchSpec:
    """Maximum-likelihood GARCH(1,1) fit.

    The conditional variance is seeded at the sample variance, and the
    stationarity constraint a1 + b1 < 1 is enforced by reparameterization
    (persistence and its split both live in (0, 1) via a logistic map).
    Optimization is derivative-free simplex search from three starts.
    """
    x = np.asarray(returns, dtype=float).ravel()
    if x.size < 100:
        raise ValueError(f"need at least 100 observations, got {x.size}")
    v = float(np.var(x, ddof=1))
    if not v > 0:
        raise ValueError("degenerate series: variance is zero")
    if innovation not in ("normal", "skew_t"):
        raise ValueError(f"unknown innovation kind {innovation!r}")

    mu0 = float(np.mean(x))
    starts = []
    for s, f in ((0.95, 0.10), (0.90, 0.05), (0.70, 0.30)):
        theta = [
            mu0,
            math.log(v * (1.0 - s)),
            math.log(s / (1.0 - s)),
            math.log(f / (1.0 - f)),
        ]
        if innovation == "skew_t":
            theta += [math.log(6.0), 0.0]  # nu = 8, xi = 1
        starts.append(np.array(theta))

    theta = _multistart_minimize(_garch_nll, starts, args=(x, innovation))
    persistence = float(expit(theta[2]))
    frac = float(expit(theta[3]))
    kwargs = {}
    if innovation == "skew_t":
        kwargs = {"nu": 2.0 + math.exp(theta[4]), "xi": math.exp(theta[5])}
    return GarchSpec(
        mu=float(theta[0]),
        omega=math.exp(theta[1]),
        a1=persistence * frac,
        b1=persistence * (1.0 - frac),
        innovation=innovation,
        **kwargs,
    )


def _skewt_nll(theta: np.ndarray, x: np.ndarray) -> float:
    d = SkewT(
        nu=2.0 + math.exp(theta[2]),
        xi=math.exp(theta[3]),
        loc=theta[0],
        scale=math.exp(theta[1]),
    )
    ll = float(np.sum(d.logpdf(x)))
    return -ll if np.isfinite(ll) else 1e12


def fit_iid(returns, kind: str) -> DistSpec:
    """Fit an i.i.d. model: normal by moments, skew-t by maximum likelihood."""
    x = np.asarray(returns, dtype=float).ravel()
    if x.size < 30:
        raise ValueError(f"need at least 30 observations, got {x.size}")
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise ValueError("degenerate series: variance is zero")
    mean = float(np.mean(x))
    if kind == "normal":
        return Normal(mean, sd)
    if kind == "skew_t":
        starts = [
            np.array([mean, math.log(sd * math.sqrt((n0 - 2.0) / n0)), math.log(n0 - 2.0), math.log(x0)])
            for n0, x0 in ((8.0, 1.0), (5.0, 0.8), (20.0, 1.25))
        ]
        theta = _multistart_minimize(_skewt_nll, starts, args=(x,))
        return SkewT(
            nu=2.0 + math.exp(theta[2]),
            xi=math.exp(theta[3]),
            loc=float(theta[0]),
            scale=math.exp(theta[1]),
        )
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass(frozen=True)
class McConfig:
    """Configuration of a null-distribution Monte Carlo run."""

    dist: Union[DistSpec, GarchSpec]
    seed: int
    n: int = 250
    runs: int = 50_000
    alpha_var: float = 0.01
    alpha_es: float = 0.025

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"need n >= 1, got {self.n}")
        if self.runs < 1:
            raise ValueError(f"need runs >= 1, got {self.runs}")
        for a in (self.alpha_var, self.alpha_es):
            if not 0.0 < a < 1.0:
                raise ValueError(f"levels must lie inside (0, 1), got {a}")


@dataclass(frozen=True)
class NullDistribution:
    """Empirical pmf/cdf of a nominal statistic over 0..n."""

    metric: str
    counts: np.ndarray = field(repr=False)
    runs: int
    seed: int

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        if int(counts.sum()) != self.runs:
            raise ValueError("counts must total the number of runs")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")

    @property
    def n(self) -> int:
        return self.counts.size - 1

    @property
    def pmf(self) -> np.ndarray:
        return self.counts / self.runs

    @property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.counts) / self.runs

    def prob_at_most(self, k: int) -> float:
        """P(nominal <= k)."""
        if k < 0:
            return 0.0
        return float(self.cdf[min(k, self.n)])

    def prob_below(self, k: int) -> float:
        """P(nominal < k); the zone probabilities are of this form."""
        return self.prob_at_most(k - 1)

    def to_csv(self, path) -> None:
        pmf, cdf = self.pmf, self.cdf
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["nominal_value", "pmf", "cdf"])
            for k in range(self.counts.size):
                writer.writerow([k, repr(float(pmf[k])), repr(float(cdf[k]))])


def _iid_addons(cfg: McConfig) -> tuple[float, float]:
    return (
        true_risk(cfg.dist, cfg.alpha_var, "VAR"),
        true_risk(cfg.dist, cfg.alpha_es, "ES"),
    )


def _garch_addons(cfg: McConfig) -> tuple[float, float]:
    innov = _Innovation.of(cfg.dist)
    return -innov.quantile(cfg.alpha_var), innov.expected_shortfall(cfg.alpha_es)


def _mc_chunk(cfg: McConfig, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
    n = cfg.n
    counts_t = np.zeros(n + 1, dtype=np.int64)
    counts_g = np.zeros(n + 1, dtype=np.int64)
    garch = isinstance(cfg.dist, GarchSpec)
    if garch:
        q_add, es_add = _garch_addons(cfg)
        mu = cfg.dist.mu
    else:
        var_add, es_add = _iid_addons(cfg)
    for run in range(lo, hi):
        stream = RngStream(cfg.seed, run)
        if garch:
            # the per-day reserve is conditional: sigma_t scales the unit risk
            x, sigma = garch_simulate(cfg.dist, n, stream)
            eps = x - mu
            y_var = eps + sigma * q_add
            y_es = eps + sigma * es_add
        else:
            x = cfg.dist.sample(n, stream)
            y_var = x + var_add
            y_es = x + es_add
        counts_t[int((y_var < 0).sum())] += 1
        counts_g[int((np.cumsum(np.sort(y_es)) < 0).sum())] += 1
    return counts_t, counts_g


def mc_null(
    cfg: McConfig, workers: int = 1
) -> tuple[NullDistribution, NullDistribution]:
    """Null distributions of the nominal exception and worst-case-sum counts.

    Each run secures its sample with the analytic reserve (conditional,
    sigma_t-scaled, for GARCH inputs) and tallies both counts. The result
    depends only on (cfg, seed), not on ``workers``.
    """
    if workers < 1:
        raise ValueError(f"need workers >= 1, got {workers}")
    workers = min(workers, cfg.runs)
    if workers == 1:
        counts_t, counts_g = _mc_chunk(cfg, 0, cfg.runs)
    else:
        edges = np.linspace(0, cfg.runs, workers + 1, dtype=int)
        counts_t = np.zeros(cfg.n + 1, dtype=np.int64)
        counts_g = np.zeros(cfg.n + 1, dtype=np.int64)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_mc_chunk, cfg, int(lo), int(hi))
                for lo, hi in zip(edges[:-1], edges[1:])
            ]
            for fut in futures:
                ct, cg = fut.result()
                counts_t += ct
                counts_g += cg
    return (
        NullDistribution("VAR", counts_t, cfg.runs, cfg.seed),
        NullDistribution("ES", counts_g, cfg.runs, cfg.seed),
    )


def fit_and_simulate(
    x,
    model: str,
    picks: int,
    seed: int,
    base_stream_id: int,
    length: Optional[int] = None,
) -> tuple[dict, list[np.ndarray]]:
    """Fit one model to a sample and draw independent simulated picks.

    Returns the fitted parameters (JSON-ready) and ``picks`` simulated
    series, each from stream (seed, base_stream_id + pick).
    """
    x = np.asarray(x, dtype=float).ravel()
    if picks < 1:
        raise ValueError(f"need picks >= 1, got {picks}")
    length = x.size if length is None else length
    if model in ("normal", "skew_t"):
        fitted = fit_iid(x, model)
        params = {"model": model, **_dist_json(fitted)}
        sims = [
            np.asarray(fitted.sample(length, RngStream(seed, base_stream_id + p)))
            for p in range(picks)
        ]
    elif model in ("garch_normal", "garch_skew_t"):
        innovation = "normal" if model == "garch_normal" else "skew_t"
        fitted = garch_fit(x, innovation)
        params = {"model": model, **garch_to_json(fitted)}
        sims = [
            garch_simulate(fitted, length, RngStream(seed, base_stream_id + p))[0]
            for p in range(picks)
        ]
    else:
        raise ValueError(f"unknown model {model!r}")
    return params, sims


def _dist_json(d: DistSpec) -> dict:
    from .dist import dist_to_json

    return dist_to_json(d)

"""
Deterministic curves, short-rate models and default-time sampling.

Everything in here is a pure function of its inputs except the samplers, which
take an explicit numpy Generator so each worker can own its substream.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from errors import DomainError

logger = logging.getLogger("market_model")

# Default time used for parties that never default
NEVER = np.inf

# Paths per batch in the bond Monte Carlo
MC_CHUNK = 10_000


@dataclass(frozen=True)
class PiecewiseConstant:
    """
    Right-continuous step function of time.

    values[i] applies on [times[i], times[i+1]); the last value extends to
    infinity. times[0] must be 0.
    """
    times: np.ndarray
    values: np.ndarray
    _cumulative: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if times.shape != values.shape or times.ndim != 1:
            raise ValueError("times and values must be 1-d and of equal length")
        if times[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        # Integral up to each breakpoint
        cumulative = np.concatenate(([0.0], np.cumsum(values[:-1] * np.diff(times))))
        object.__setattr__(self, "_cumulative", cumulative)

    @classmethod
    def constant(cls, value: float) -> "PiecewiseConstant":
        return cls(np.array([0.0]), np.array([float(value)]))

    def __call__(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.values[np.clip(idx, 0, None)]

    def integral(self, t):
        """Exact integral from 0 to t"""
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, None)
        return self._cumulative[idx] + self.values[idx] * (t - self.times[idx])

    def inverse_integral(self, level):
        """Smallest t with integral(t) = level; inf when the level is never reached"""
        level = np.asarray(level, dtype=float)
        idx = np.clip(np.searchsorted(self._cumulative, level, side="right") - 1, 0, None)
        rate = self.values[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = self.times[idx] + (level - self._cumulative[idx]) / rate
        # Only the last segment can have zero rate and an unreached level
        return np.where(rate > 0, t, NEVER)

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.values) <= tol))

    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values[0]))

    def __add__(self, other: "PiecewiseConstant") -> "PiecewiseConstant":
        return self._combine(other, 1.0)

    def __sub__(self, other: "PiecewiseConstant") -> "PiecewiseConstant":
        return self._combine(other, -1.0)

    def _combine(self, other: "PiecewiseConstant", sign: float) -> "PiecewiseConstant":
        times = np.union1d(self.times, other.times)
        return PiecewiseConstant(times, self(times) + sign * other(times))


@dataclass(frozen=True)
class RateModel:
    """OIS short-rate model: constant level or CIR"""
    kind: str
    level: float = 0.0
    k: float = 0.0
    theta: float = 0.0
    rho: float = 0.0
    r0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "cir"):
            raise DomainError(f"unknown rate model kind '{self.kind}'")
        if self.kind == "constant" and self.level < 0:
            raise DomainError("constant rate level must be >= 0")
        if self.kind == "cir" and (self.k <= 0 or self.theta <= 0 or self.r0 <= 0 or self.rho < 0):
            raise DomainError("CIR requires k > 0, theta > 0, r0 > 0 and rho >= 0")

    @property
    def feller(self) -> bool:
        """2k*theta >= rho^2; recorded only"""
        return self.kind == "cir" and 2.0 * self.k * self.theta >= self.rho ** 2

    @property
    def initial_rate(self) -> float:
        return self.r0 if self.kind == "cir" else self.level


@dataclass(frozen=True)
class IntensityCurve:
    h_A: PiecewiseConstant
    h_B: PiecewiseConstant
    h_delta: PiecewiseConstant = field(default_factory=lambda: PiecewiseConstant.constant(0.0))
    independent: bool = True

    def __post_init__(self):
        if np.any(self.h_A.values < 0) or np.any(self.h_B.values < 0):
            raise DomainError("default intensities must be nonnegative")
        if self.independent and not self.h_delta.is_zero():
            raise DomainError("independent defaults require h_delta == 0")
        if np.any(self.h0.values < 0):
            raise DomainError("h_A + h_B - h_delta must be nonnegative")

    @property
    def h0(self) -> PiecewiseConstant:
        """Intensity of the first default, h - h_delta"""
        return self.h_A + self.h_B - self.h_delta


@dataclass(frozen=True)
class MarketModel:
    """
    Rate model, risk premium and default intensities.

    remuneration (r^m) is carried for reporting only: margin spreads s_m are
    quoted net of it, so it enters the dynamics solely through s_m.
    """
    rate: RateModel
    lambda_premium: float
    remuneration: PiecewiseConstant
    intensities: IntensityCurve

    def __post_init__(self):
        if not np.isfinite(self.lambda_premium):
            raise DomainError("risk premium must be finite")


def _check_time(t, T: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t > T) or np.any(t < 0):
        raise DomainError(f"time outside [0, {T}]")
    return t


def cir_coefficients(t, model: RateModel, T: float):
    """
    A1(t, T) and A2(t, T) of the CIR bond formula.

    log A1 is assembled from log1p terms so that the rho -> 0 limit (exponent
    2k*theta/rho^2 blowing up) stays accurate.
    """
    tau = T - np.asarray(t, dtype=float)
    k, theta, rho = model.k, model.theta, model.rho
    if rho == 0.0:
        a2 = -np.expm1(-k * tau) / k
        return np.exp(-theta * tau + theta * a2), a2
    a = np.sqrt(k ** 2 + 2.0 * rho ** 2)
    growth = np.expm1(a * tau)
    a2 = 2.0 * growth / (2.0 * a + (a + k) * growth)
    # (a - k) / (a + k) without the cancellation in a - k
    eps = 2.0 * rho ** 2 / (a + k) ** 2
    log_base = np.log1p(eps) - np.log1p(eps * np.exp(-a * tau)) - rho ** 2 * tau / (a + k)
    a1 = np.exp(2.0 * k * theta / rho ** 2 * log_base)
    return a1, a2


def cir_bond_price(t, r, model: RateModel, T: float):
    """Clean price of the unit zero-coupon bond, e_t = A1 exp(-r A2)"""
    if model.kind != "cir":
        raise DomainError("cir_bond_price needs a CIR rate model")
    t = _check_time(t, T)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("short rate must be positive")
    a1, a2 = cir_coefficients(t, model, T)
    return a1 * np.exp(-r * a2)


def cir_bond_delta(t, r, model: RateModel, T: float, B_t):
    """Z_t = -rho sqrt(r) A2 e_t / B_t"""
    B_t = np.asarray(B_t, dtype=float)
    if np.any(B_t <= 0):
        raise DomainError("money-market account must be positive")
    e = cir_bond_price(t, r, model, T)
    _, a2 = cir_coefficients(t, model, T)
    return -model.rho * np.sqrt(r) * a2 * e / B_t


def clean_price(t, r, model: RateModel, T: float):
    """Clean price of the unit bond for either rate model"""
    if model.kind == "constant":
        t = _check_time(t, T)
        return np.exp(-model.level * (T - t)) * np.ones_like(np.asarray(r, dtype=float))
    return cir_bond_price(t, r, model, T)


def survival(t, intensities: IntensityCurve):
    """G_t = exp(-int_0^t (h_A + h_B - h_delta) ds)"""
    return np.exp(-intensities.h0.integral(t))


def dependence_correction(t, T: float, intensities: IntensityCurve):
    """I_t = int_t^T G_s h_delta_s ds, exact on the piecewise-constant segments"""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    h0, h_delta = intensities.h0, intensities.h_delta
    if h_delta.is_zero():
        return np.zeros_like(t)
    knots = np.union1d(h0.times, h_delta.times)
    knots = np.concatenate((knots[knots < T], [T]))
    # Integral over each [knots[j], knots[j+1]]
    starts, ends = knots[:-1], knots[1:]
    rate0, rate_delta = h0(starts), h_delta(starts)
    width = ends - starts
    with np.errstate(divide="ignore", invalid="ignore"):
        decay = np.where(rate0 > 0, -np.expm1(-rate0 * width) / rate0, width)
    pieces = survival(starts, intensities) * rate_delta * decay
    tail = np.concatenate((np.cumsum(pieces[::-1])[::-1], [0.0]))

    out = np.empty_like(t)
    for i, ti in enumerate(t):
        j = np.searchsorted(knots, ti, side="right") - 1
        if j >= len(starts):
            out[i] = 0.0
            continue
        # Partial segment [ti, knots[j+1]]
        w = ends[j] - ti
        part = rate_delta[j] * survival(ti, intensities) * (
            -np.expm1(-rate0[j] * w) / rate0[j] if rate0[j] > 0 else w)
        out[i] = part + tail[j + 1]
    return out


def step_intensities(times, intensities: IntensityCurve):
    """
    Survival-weighted mean intensities of A and B over each grid step.

    Entry k is int_{t_k}^{t_{k+1}} G_s h_s ds / (G_{t_k} (t_{k+1} - t_k)), so
    G_k h_k dt is exactly the probability that the first default lands in step k
    and is caused by that party. The last node keeps the curve value at T.
    """
    times = np.asarray(times, dtype=float)
    h_A, h_B, h0 = intensities.h_A, intensities.h_B, intensities.h0
    out_A = np.array(h_A(times), dtype=float)
    out_B = np.array(h_B(times), dtype=float)
    knots = np.union1d(np.union1d(h_A.times, h_B.times), intensities.h_delta.times)
    for k in range(len(times) - 1):
        a, b = times[k], times[k + 1]
        edges = np.concatenate(([a], knots[(knots > a) & (knots < b)], [b]))
        starts, width = edges[:-1], np.diff(edges)
        rate0 = h0(starts)
        safe = np.where(rate0 > 0, rate0, 1.0)
        decay = np.where(rate0 > 0, -np.expm1(-rate0 * width) / safe, width)
        weight = np.exp(h0.integral(a) - h0.integral(starts)) * decay / (b - a)
        out_A[k] = np.sum(h_A(starts) * weight)
        out_B[k] = np.sum(h_B(starts) * weight)
    return out_A, out_B


def sample_default_times(intensities: IntensityCurve, rng: np.random.Generator, size: int):
    """
    Independent default times by inverting the cumulative hazards.

    Parties with an unreachable hazard level get the NEVER sentinel.
    """
    return default_times_from_uniforms(intensities, rng.random((size, 2)))


def default_times_from_uniforms(intensities: IntensityCurve, uniforms: np.ndarray):
    """(tau_A, tau_B) from an (n, 2) array of uniform draws"""
    if not intensities.h_delta.is_zero():
        raise DomainError("default-time sampling supports independent defaults only (h_delta == 0)")
    return _invert_hazard(intensities.h_A, uniforms[:, 0]), _invert_hazard(intensities.h_B, uniforms[:, 1])


def _invert_hazard(hazard: PiecewiseConstant, u):
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        level = -np.log1p(-u)
    tau = hazard.inverse_integral(level)
    # u == 0 gives tau == 0; defaults happen strictly after inception
    return np.maximum(tau, np.finfo(float).tiny)


def simulate_short_rate(model: RateModel, dt: float, dW: np.ndarray, lambda_premium: float = 0.0):
    """
    Short-rate paths on a uniform grid, shape (n_paths, n_steps + 1).

    CIR uses full-truncation Euler under P: the risk premium enters through
    dW^Q = dW + Lambda dt. Pass lambda_premium=0 for risk-neutral paths.
    """
    n_paths, n_steps = dW.shape
    r = np.empty((n_paths, n_steps + 1))
    r[:, 0] = model.initial_rate
    if model.kind == "constant":
        r[:] = model.level
        return r
    for i in range(n_steps):
        pos = np.maximum(r[:, i], 0.0)
        vol = model.rho * np.sqrt(pos)
        r[:, i + 1] = r[:, i] + (model.k * (model.theta - pos) + vol * lambda_premium) * dt + vol * dW[:, i]
    return r


def risk_neutral_bond_mc(model: RateModel, T: float, n_paths: int, n_steps: int, seed: int):
    """Monte Carlo estimate of E^Q[exp(-int_0^T r ds)] with its standard error"""
    rng = np.random.Generator(np.random.Philox(seed))
    dt = T / n_steps
    discount = np.empty(n_paths)
    for start in range(0, n_paths, MC_CHUNK):
        size = min(MC_CHUNK, n_paths - start)
        dW = rng.standard_normal((size, n_steps)) * np.sqrt(dt)
        r = np.maximum(simulate_short_rate(model, dt, dW), 0.0)
        # Trapezoid rule for the rate integral
        integral = dt * (0.5 * r[:, 0] + r[:, 1:-1].sum(axis=1) + 0.5 * r[:, -1])
        discount[start:start + size] = np.exp(-integral)
    logger.info(f"[MarketModel] Bond MC with {n_paths} paths x {n_steps} steps")
    return float(discount.mean()), float(discount.std(ddof=1) / np.sqrt(n_paths))

"""The two-variable F-function and the one-variable G-function.

F(x, y) is the stationary value of

    -1/2 <ln(Lx Ly + lam)> - (alpha-1)/2 ln Ly + Lx x/2 + alpha Ly y/2
    - 1/2 ln x - alpha/2 ln y - (1+alpha)/2

over (Lx, Ly).  Writing s = Lx Ly and g(s) = <s/(s+lam)>, the two saddle
equations collapse to Lx = g/x, Ly = (g+alpha-1)/(alpha y) and the scalar
condition

    alpha * x * y * s = g(s) (g(s) + alpha - 1),

so F depends on (x, y) only through the product P = xy.  The branch that
reaches F -> 0 at small P is the largest root in s (s ~ 1/P).  P(s) can fold
(e.g. for the orthogonal spectrum at s = 2 alpha - 1), and solutions of the
replica equations may sit past the fold, so F is also exposed as a function
of (x, s) via :func:`evaluate_F_at`.  Points with no real root raise
:class:`SaddleDomainError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .spectrum import SpectrumModel


class SaddleDomainError(ArithmeticError):
    """No real saddle on the physical branch at the requested point."""


@dataclass(frozen=True)
class FEvaluation:
    x: float
    y: float
    value: float
    lambda_x: float
    lambda_y: float
    dF_dx: float
    dF_dy: float
    d2F: tuple[tuple[float, float], tuple[float, float]]
    s: float
    residual: float
    phi1: float = float("nan")  # F = Phi(xy): first and second derivative of Phi
    phi2: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "x": self.x, "y": self.y, "value": self.value,
            "lambda_x": self.lambda_x, "lambda_y": self.lambda_y,
            "dF_dx": self.dF_dx, "dF_dy": self.dF_dy,
            "d2F": [list(self.d2F[0]), list(self.d2F[1])],
            "residual": self.residual,
        }


class _Saddle:
    """Scalar saddle machinery for one spectrum (cached per SpectrumModel)."""

    def __init__(self, spec: SpectrumModel):
        self.alpha = spec.alpha
        self.w0 = spec.zero_weight
        self.lam, self.wt = spec.positive_part()
        c0 = self.w0 + self.alpha - 1.0
        self.c0 = 0.0 if abs(c0) < 1e-12 else c0
        # lowest admissible s: s + lam > 0 on the support
        self.s_floor = 0.0 if self.w0 > 0 else -float(spec.support_min)

    # m(s) = sum_{lam>0} w/(s+lam), so g = w0 + s m and g + alpha - 1 = c0 + s m
    def parts(self, s: float):
        r = 1.0 / (s + self.lam)
        m = float(np.dot(self.wt, r))
        dm = -float(np.dot(self.wt, r * r))
        return m, dm

    def one_minus_g(self, s: float) -> float:
        return float(np.dot(self.wt, self.lam / (s + self.lam)))

    def product(self, s: float) -> float:
        """P(s) = g (g + alpha - 1) / (alpha s), in a form regular at s = 0."""
        m, _ = self.parts(s)
        if self.w0 > 0:
            val = (self.w0 / s + m) * (self.c0 + s * m)
        else:
            val = m * (self.c0 + s * m)
        return val / self.alpha

    def dproduct(self, s: float) -> float:
        m, dm = self.parts(s)
        g_s = m + s * dm  # d(s m)/ds
        if self.w0 > 0:
            a = self.w0 / s + m
            da = -self.w0 / (s * s) + dm
        else:
            a, da = m, dm
        b = self.c0 + s * m
        return (da * b + a * g_s) / self.alpha

    def admissible(self, s: float) -> bool:
        if s <= self.s_floor:
            return False
        if self.alpha != 1.0:
            m, _ = self.parts(s)
            if self.c0 + s * m <= 0:
                return False
        return True

    def solve(self, P: float) -> float:
        """Largest admissible root s of P(s) = P."""
        if not P > 0:
            raise SaddleDomainError(f"need x*y > 0, got {P}")
        base = self.s_floor

        def s_of(tau):
            return base + math.exp(tau)

        def f(tau):
            return self.product(s_of(tau)) - P

        tau_hi = math.log(max(4.0 / P, 1.0)) + 2.0
        while f(tau_hi) >= 0:
            tau_hi += 2.0
            if tau_hi > 700:
                raise SaddleDomainError("cannot bracket the large-s end of the branch")
        step = 0.25
        prev = f(tau_hi)
        tau = tau_hi
        while True:
            nxt = tau - step
            s_n = s_of(nxt)
            if nxt < -60 or not self.admissible(s_n):
                raise SaddleDomainError(
                    f"no real saddle on the physical branch at x*y={P!r} "
                    f"(branch leaves the domain before reaching it)")
            val = f(nxt)
            if val >= 0:
                break
            if val < prev - 1e-15 * max(1.0, abs(prev)):
                # the maximum of P(s) lies within the last two steps; the root
                # may still sit just below it
                res = minimize_scalar(lambda t: -f(t), bounds=(nxt, tau + step),
                                      method="bounded", options={"xatol": 1e-13})
                if -res.fun < 0:
                    raise SaddleDomainError(f"saddle branch folds before x*y={P!r}")
                nxt = res.x
                break
            prev, tau = val, nxt
        t = brentq(f, nxt, tau, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        return s_of(t)

    def solve_near(self, P: float, s_hint: float, reach: float = 40.0) -> float:
        """Root of P(s) = P nearest to ``s_hint`` (in log distance above the floor).

        Used to follow one saddle branch through a fold of P(s), where the
        largest root jumps discontinuously.
        """
        if not P > 0:
            raise SaddleDomainError(f"need x*y > 0, got {P}")
        base = self.s_floor

        def f(tau):
            return self.product(base + math.exp(tau)) - P

        tau0 = math.log(max(s_hint - base, 1e-300))
        f0 = f(tau0)
        if f0 == 0:
            return s_hint
        sides = []
        for sign in (1.0, -1.0):
            sides.append([sign, tau0, f0, 0.01, True])
        while any(sd[4] for sd in sides):
            for sd in sides:
                sign, tau, val, step, alive = sd
                if not alive:
                    continue
                nxt = tau + sign * step
                s_n = base + math.exp(nxt)
                if abs(nxt - tau0) > reach or not self.admissible(s_n):
                    sd[4] = False
                    continue
                fn = f(nxt)
                if np.sign(fn) != np.sign(val):
                    lo, hi = sorted((tau, nxt))
                    t = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
                    return base + math.exp(t)
                sd[1], sd[2], sd[3] = nxt, fn, min(step * 1.5, 0.5)
        raise SaddleDomainError(f"no real saddle near s={s_hint!r} at x*y={P!r}")


_CACHE: dict[int, tuple[SpectrumModel, _Saddle]] = {}


def _saddle_for(spec: SpectrumModel) -> _Saddle:
    key = id(spec)
    hit = _CACHE.get(key)
    if hit is not None and hit[0] is spec:
        return hit[1]
    sd = _Saddle(spec)
    if len(_CACHE) > 256:
        _CACHE.clear()
    _CACHE[key] = (spec, sd)
    return sd


def _value(sd: _Saddle, s: float, P: float) -> float:
    alpha = sd.alpha
    d = sd.one_minus_g(s)  # 1 - g
    if s > 0:
        # cancellation-free form, accurate as P -> 0
        lg = float(np.dot(sd.wt, np.log1p(sd.lam / s)))
        return -0.5 * math.log1p(-d) - 0.5 * alpha * math.log1p(-d / alpha) - 0.5 * lg - d
    g = 1.0 - d
    lg = float(np.dot(sd.wt, np.log(s + sd.lam)))
    val = -0.5 * lg + g - 1.0 - 0.5 * math.log(P)
    if alpha != 1.0:
        val -= 0.5 * (alpha - 1.0) * math.log((g + alpha - 1.0) / alpha)
    return val


def saddle_residual(spec: SpectrumModel, x: float, y: float, lx: float, ly: float) -> float:
    """Max violation of the two saddle equations in their original form."""
    lam, wt = spec.locations, spec.weights
    den = lx * ly + lam
    r1 = float(np.dot(wt, ly / den)) - x
    r2 = float(np.dot(wt, lx / den)) + (spec.alpha - 1.0) / ly - spec.alpha * y
    return max(abs(r1), abs(r2))


def evaluate_F(spec: SpectrumModel, x: float, y: float, s_hint: float | None = None) -> FEvaluation:
    """F and its derivatives at (x, y).

    Without ``s_hint`` the branch connected to F -> 0 at small xy is used;
    with it, the saddle nearest the hinted s (continuation along a path).
    """
    if not (x > 0 and y > 0):
        raise ValueError("F(x, y) needs x > 0 and y > 0")
    sd = _saddle_for(spec)
    P = x * y
    s = sd.solve(P) if s_hint is None else sd.solve_near(P, s_hint)
    return _assemble(spec, sd, x, y, s)


def evaluate_F_at(spec: SpectrumModel, x: float, s: float) -> FEvaluation:
    """F on the saddle labelled by s = Lx Ly, with y fixed by the saddle condition.

    This parametrization passes smoothly through folds of xy(s), where
    F(x, y) itself is multivalued.
    """
    sd = _saddle_for(spec)
    if not sd.admissible(s):
        raise SaddleDomainError(f"s={s!r} outside the real saddle domain")
    y = sd.product(s) / x
    if not (x > 0 and y > 0):
        raise SaddleDomainError(f"saddle at s={s!r} has non-positive xy")
    return _assemble(spec, sd, x, y, s)


def _assemble(spec, sd: _Saddle, x: float, y: float, s: float) -> FEvaluation:
    P = x * y
    alpha = sd.alpha
    d = sd.one_minus_g(s)
    g = 1.0 - d
    lx = g / x
    ly = (g + alpha - 1.0) / (alpha * y)
    value = _value(sd, s, P)
    # F = Phi(xy):  Phi' = (g-1)/(2P),  Phi'' = (g_P P - (g-1)) / (2 P^2)
    phi1 = -d / (2.0 * P)
    dP = sd.dproduct(s)
    if dP == 0 or not np.isfinite(dP):
        raise SaddleDomainError("singular saddle Jacobian")
    m, dm = sd.parts(s)
    g_s = m + s * dm
    g_P = g_s / dP
    phi2 = (g_P * P + d) / (2.0 * P * P)
    fxx = y * y * phi2
    fyy = x * x * phi2
    fxy = phi1 + P * phi2
    res = saddle_residual(spec, x, y, lx, ly) if ly > 0 else float("nan")
    return FEvaluation(
        x=float(x), y=float(y), value=value, lambda_x=lx, lambda_y=ly,
        dF_dx=y * phi1, dF_dy=x * phi1,
        d2F=((fxx, fxy), (fxy, fyy)), s=s, residual=res, phi1=phi1, phi2=phi2,
    )


def second_derivatives(spec: SpectrumModel, x: float, y: float) -> np.ndarray:
    return np.array(evaluate_F(spec, x, y).d2F)


@dataclass(frozen=True)
class GEvaluation:
    x: float
    value: float
    dG: float
    d2G: float
    Lambda: float


def evaluate_G(spec: SpectrumModel, x: float) -> GEvaluation:
    """G(x) = Extr_L {-1/2 <ln|L - lam|> + L x / 2} - 1/2 ln|x| - 1/2.

    For x > 0 the saddle sits above the support (L > lam_max), for x < 0
    below it (L < lam_min); the two real branches join smoothly at x = 0
    where G(x) ~ <lam> x / 2.
    """
    if x == 0:
        raise ValueError("G is evaluated at x != 0 (its x -> 0 limit is 0)")
    lam, wt = spec.locations, spec.weights
    if x > 0:
        edge = float(spec.support_max)

        def L_of(t):
            return edge + math.exp(t)

        def f(t):
            return float(np.dot(wt, 1.0 / (L_of(t) - lam))) - x
    else:
        edge = float(spec.support_min)

        def L_of(t):
            return edge - math.exp(t)

        def f(t):
            return float(np.dot(wt, 1.0 / (lam - L_of(t)))) + x
    # f decreases in t on both branches
    t_hi = math.log(2.0 / abs(x)) + 1.0
    while f(t_hi) > 0:
        t_hi += 2.0
    t_lo = t_hi - 1.0
    while f(t_lo) < 0:
        t_lo -= 2.0
        if t_lo < -80:
            raise SaddleDomainError(f"G-function: no real saddle at x={x!r}")
    t = brentq(f, t_lo, t_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    L = L_of(t)
    ratio = lam / L
    if np.all(ratio < 1.0):
        lnabs = math.log(abs(L)) + float(np.dot(wt, np.log1p(-ratio)))
    else:
        lnabs = float(np.dot(wt, np.log(np.abs(L - lam))))
    value = -0.5 * lnabs + 0.5 * L * x - 0.5 * math.log(abs(x)) - 0.5
    dG = 0.5 * L - 0.5 / x
    dL = -1.0 / float(np.dot(wt, 1.0 / (L - lam) ** 2))
    d2G = 0.5 * dL + 0.5 / (x * x)
    return GEvaluation(x=float(x), value=value, dG=dG, d2G=d2G, Lambda=L)

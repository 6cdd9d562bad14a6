"""Replica-symmetric saddle point for correlated (rotation-invariant) patterns.

The free energy per element is the extremum over six order parameters
Theta = (chi_w, q_w, m_w, chi_u, q_u, m_u) and their six conjugates of

    A0(Theta) + A_w(chi_w, q_w, m_w) + alpha * A_u(chi_u, q_u, m_u),

where the pattern correlations enter A0 only through F(chi_w, chi_u) and its
derivatives.  Stationarity in Theta fixes the conjugates in terms of F;
stationarity in the conjugates fixes Theta through single-site Gaussian
averages.  Both halves are iterated with damping on Theta.

u-side averages use the joint Gaussian pair (Delta0, h) with Var h = q_u_hat,
Var Delta0 = T_u_hat and Cov = m_u_hat.  Conditioning on h leaves the teacher
output smoothed by a Gaussian of variance T_u_hat - m_u_hat^2/q_u_hat around
(m_u_hat/q_u_hat) h, which is again a channel evidence, so the inner integral
is closed-form for every implemented channel.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq, root

from .ffunc import SaddleDomainError, evaluate_F, evaluate_G
from .models import LOG2, ChannelModel, PriorModel, gauss_hermite
from .spectrum import SpectrumModel

log = logging.getLogger(__name__)

ORDER = ("chi_w", "q_w", "m_w", "chi_u", "q_u", "m_u")
HATS = ("chi_w_hat", "q_w_hat", "m_w_hat", "chi_u_hat", "q_u_hat", "m_u_hat")


class ReplicaError(RuntimeError):
    """Solver failed: no convergence, or the fixed point violates an invariant."""

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass
class OrderParameterSet:
    chi_w: float
    q_w: float
    m_w: float
    chi_u: float
    q_u: float
    m_u: float
    chi_w_hat: float = float("nan")
    q_w_hat: float = float("nan")
    m_w_hat: float = float("nan")
    chi_u_hat: float = float("nan")
    q_u_hat: float = float("nan")
    m_u_hat: float = float("nan")
    s: float = float("nan")  # branch label of the F saddle (Lx * Ly)

    def theta(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in ORDER])

    def hats(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in HATS])

    @classmethod
    def from_arrays(cls, theta, hats=None, s=float("nan")) -> "OrderParameterSet":
        kw = dict(zip(ORDER, map(float, theta)))
        if hats is not None:
            kw.update(zip(HATS, map(float, hats)))
        return cls(**kw, s=float(s))


@dataclass
class ReplicaSolution:
    alpha: float
    params: OrderParameterSet
    free_energy: float
    entropy: float
    at_margin: float
    chi_w2: float
    chi_u2: float
    iterations: int
    residual: float
    kl: float | None = None
    mutual_info: float | None = None
    converged: bool = True

    @property
    def rs_unstable(self) -> bool:
        return self.at_margin < 0

    def row(self) -> dict:
        p = self.params
        return {
            "alpha": self.alpha, "chi_w": p.chi_w, "q_w": p.q_w, "m_w": p.m_w,
            "chi_u": p.chi_u, "q_u": p.q_u, "m_u": p.m_u,
            "free_energy": self.free_energy, "entropy": self.entropy,
            "at_margin": self.at_margin,
            "kl": float("nan") if self.kl is None else self.kl,
            "mutual_info": float("nan") if self.mutual_info is None else self.mutual_info,
            "iterations": self.iterations, "residual": self.residual,
            "converged": self.converged, "rs_unstable": self.rs_unstable,
        }


@dataclass
class _WSide:
    chi: float
    q: float
    m: float
    psi: float
    chi2: float


@dataclass
class _USide:
    chi: float
    q: float
    m: float
    psi: float
    chi2: float
    energy: float  # posterior average of ln P(y|Delta) per output


def _snap(v: float, eps: float = 1e-9) -> float:
    """Round-off level negatives of a variance-like conjugate to zero."""
    return 0.0 if -eps < v < 0 else v


class ReplicaProblem:
    """Spectrum plus generative (Q) and recognition (P) models."""

    def __init__(self, spec: SpectrumModel, generative: tuple[PriorModel, ChannelModel],
                 recognition: tuple[PriorModel, ChannelModel], n_gh: int = 96):
        self.spec = spec
        self.alpha = spec.alpha
        self.gen_prior, self.gen_channel = generative
        self.rec_prior, self.rec_channel = recognition
        self.T_w = self.gen_prior.second_moment()
        self.mean_lam = spec.mean()
        self.T_u_hat = self.T_w * self.mean_lam / self.alpha
        self.z, self.wz = gauss_hermite(n_gh)
        self.w0, self.ww0 = self.gen_prior.support()

    @property
    def storage(self) -> bool:
        return self.gen_channel.kind == "random_label"

    # -- Theta -> conjugates ------------------------------------------------
    def F(self, th: np.ndarray, s_hint: float | None = None):
        return evaluate_F(self.spec, th[0], th[3], s_hint=s_hint)

    def conjugates(self, th: np.ndarray, fe=None, s_hint: float | None = None) -> np.ndarray:
        chi_w, q_w, m_w, chi_u, q_u, m_u = th
        if fe is None:
            fe = self.F(th, s_hint)
        Fx, Fy = fe.dF_dx, fe.dF_dy
        (Fxx, Fxy), (_, Fyy) = fe.d2F
        a, T, L = self.alpha, self.T_w, self.mean_lam
        r = m_u / chi_u
        chw = -2.0 * Fx
        mhw = r * chw
        qhw = 2.0 * (q_w * Fxx - q_u * Fxy + Fxx * (T * r * r - 2.0 * m_w * r))
        chu = -2.0 / a * Fy
        mhu = 2.0 / a * (T * r * (0.5 * L + Fx / chi_u) - m_w * Fx / chi_u)
        dT = -2.0 * r * r / chi_u * (0.5 * L * chi_u + Fx) + r * r * (0.5 * L + Fxy)
        dM = -r * Fx / chi_u + r * Fxy
        qhu = -2.0 / a * (q_w * Fxy - q_u * Fyy + T * dT - 2.0 * m_w * dM)
        return np.array([chw, qhw, mhw, chu, qhu, mhu])

    # -- conjugates -> Theta ------------------------------------------------
    def w_side(self, chw: float, qhw: float, mhw: float) -> _WSide:
        qhw = _snap(qhw)
        if qhw < 0:
            raise ReplicaError(f"negative q_w_hat {qhw!r}")
        h = math.sqrt(qhw) * self.z[None, :] + mhw * self.w0[:, None]
        logz, mean, var = self.rec_prior.log_partition(chw, h)
        W = self.ww0[:, None] * self.wz[None, :]
        return _WSide(
            chi=float(np.sum(W * var)),
            q=float(np.sum(W * mean * mean)),
            m=float(np.sum(W * self.w0[:, None] * mean)),
            psi=float(np.sum(W * logz)),
            chi2=float(np.sum(W * var * var)),
        )

    def u_side(self, chu: float, qhu: float, mhu: float, strict: bool = True) -> _USide:
        qhu = _snap(qhu)
        if qhu < 0:
            raise ReplicaError(f"negative q_u_hat {qhu!r}")
        if chu <= 0:
            raise ReplicaError(f"non-positive chi_u_hat {chu!r}")
        h = math.sqrt(qhu) * self.z
        if qhu > 0:
            mu = (mhu / qhu) * h
            V = self.T_u_hat - mhu * mhu / qhu
        else:
            mu = np.zeros_like(h)
            V = self.T_u_hat
        if V < -1e-12 and strict:
            raise ReplicaError(f"teacher/student covariance not PSD (residual variance {V!r})")
        V = max(V, 0.0)
        y, wy, score = self.gen_channel.outputs(np.full_like(h, V), mu)
        L, d1, d2 = self.rec_channel.log_evidence(chu, h[:, None], y)
        W = self.wz[:, None] * wy
        with np.errstate(invalid="ignore"):
            psi = float(np.sum(np.where(W > 0, W * L, 0.0)))
        energy = self._channel_energy(chu, W, d1)
        return _USide(
            chi=float(-np.sum(W * d2)),
            q=float(np.sum(W * d1 * d1)),
            m=float(np.sum(W * score * d1)),
            psi=psi,
            chi2=float(np.sum(W * d2 * d2)),
            energy=energy,
        )

    def _channel_energy(self, chu, W, d1) -> float:
        return float(np.sum(W * self.rec_channel.mean_log_likelihood(chu, d1)))

    def forward(self, th: np.ndarray, fe):
        """One sweep Theta -> conjugates -> Theta (q-hats clipped at zero)."""
        hats = self.conjugates(th, fe)
        ws = self.w_side(hats[0], max(hats[1], 0.0), hats[2])
        us = self.u_side(hats[3], max(hats[4], 0.0), hats[5], strict=False)
        return np.array([ws.chi, ws.q, ws.m, us.chi, us.q, us.m])

    # -- the variational objective ------------------------------------------
    def objective(self, th: np.ndarray, hats: np.ndarray, s_hint: float | None = None) -> float:
        """Full 12-variable RS functional (stationary at the solution)."""
        chi_w, q_w, m_w, chi_u, q_u, m_u = th
        chw, qhw, mhw, chu, qhu, mhu = hats
        fe = self.F(th, s_hint)
        Fx, Fy = fe.dF_dx, fe.dF_dy
        r = m_u / chi_u
        A0 = (fe.value + q_w * Fx - q_u * Fy
              + self.T_w * r * r * (0.5 * self.mean_lam * chi_u + Fx) - 2.0 * m_w * r * Fx)
        ws = self.w_side(chw, qhw, mhw)
        us = self.u_side(chu, qhu, mhu)
        Aw = 0.5 * chw * (chi_w + q_w) - 0.5 * qhw * chi_w - mhw * m_w + ws.psi
        Au = 0.5 * chu * (chi_u - q_u) + 0.5 * qhu * chi_u - mhu * m_u + us.psi
        return A0 + Aw + self.alpha * Au

    def initial(self) -> np.ndarray:
        T = self.rec_prior.second_moment()
        chi_w, q_w = 0.5 * T, 0.5 * T
        m_w = 0.0 if self.storage else 0.1 * min(T, self.T_w)
        # small-argument F gives chi_u_hat ~ <lam> chi_w / alpha, etc.
        k = self.mean_lam / self.alpha
        us = self.u_side(k * chi_w, k * q_w, k * m_w, strict=False)
        th = np.array([chi_w, q_w, m_w, us.chi, us.q, us.m])
        # pull the u-side towards zero until F has a real saddle there
        for _ in range(60):
            try:
                self.conjugates(th)
                return th
            except SaddleDomainError:
                th[3:] *= 0.5
        raise ReplicaError("no admissible starting point for the RS iteration")

    def check_invariants(self, th: np.ndarray):
        chi_w, q_w, m_w, chi_u, q_u, m_u = th
        bad = []
        if not chi_w > 0:
            bad.append("chi_w <= 0")
        if not chi_u > 0:
            bad.append("chi_u <= 0")
        if q_w < -1e-12 or q_u < -1e-12:
            bad.append("negative q")
        if self.rec_prior.is_ising and q_w + chi_w > self.rec_prior.second_moment() + 1e-9:
            bad.append("q_w + chi_w exceeds the self-overlap")
        if q_w < m_w * m_w / self.T_w - 1e-9:
            bad.append("q_w < m_w^2 / T_w")
        if bad:
            raise ReplicaError("invariant violated at fixed point: " + ", ".join(bad))


def _as_problem(spec, generative, recognition, n_gh):
    return ReplicaProblem(spec, generative, recognition, n_gh=n_gh)


def solve_rs(spec: SpectrumModel, generative, recognition, init: OrderParameterSet | None = None,
             damping: float = 0.5, tol: float = 1e-10, max_iter: int = 5000,
             n_gh: int = 96) -> ReplicaSolution:
    """Iterate the RS stationarity equations to a fixed point.

    Damped sweeps Theta <- (1 - eta) Theta + eta T(Theta) start with
    eta = ``damping``; eta shrinks when the update grows or would leave the
    real saddle domain.  The F saddle is followed by continuity in s (its
    branch label).  Damped sweeps cannot cross a fold of xy(s), and close to
    one the map becomes oscillatory, so a stalled or blocked iteration is
    finished by Newton's method in coordinates where s replaces chi_u.

    Raises ReplicaError when neither converges or the fixed point breaks an
    order-parameter invariant.
    """
    prob = _as_problem(spec, generative, recognition, n_gh)
    starts = []
    th, s = None, None
    if init is not None:
        th = init.theta()
        s = init.s if np.isfinite(init.s) else None
        try:
            fe = prob.F(th, s)
        except SaddleDomainError:
            # keep (chi_w, s) and move chi_u onto the saddle instead
            fe = _on_branch(prob, th, s)
            if fe is not None:
                th[3] = fe.y
            else:
                th = None
    if th is None:
        th = prob.initial()
        fe = prob.F(th)
    s = fe.s
    starts.append((th.copy(), s))
    th, s, delta, it, converged = _damped(prob, th, fe, damping, tol, max_iter)
    if not converged:
        # a continuation start stays on its branch; the damped end state may
        # have wandered towards another one
        starts.insert(1 if init is not None else 0, (th, s))
        if init is not None:
            cold = prob.initial()
            starts.append((cold, prob.F(cold).s))
        # last resort: seed Newton on a ladder of saddle labels, which
        # reaches solutions on the far side of a fold
        floor = _saddle_floor(prob)
        for tau in (-2.0, -1.0, 0.0, 1.0, 2.0):
            fe_s = _on_branch(prob, th, floor + math.exp(tau))
            if fe_s is not None:
                t = th.copy()
                t[3] = fe_s.y
                starts.append((t, fe_s.s))
        err = None
        for th0, s0 in starts:
            try:
                th, s, delta, nfev = _newton(prob, th0, s0, tol, max_iter)
                it += nfev
                break
            except ReplicaError as exc:
                err = exc
        else:
            raise err
    prob.check_invariants(th)
    return _finish(prob, th, s, it, delta)


def _damped(prob: ReplicaProblem, th, fe, damping, tol, max_iter, patience: int = 200):
    s = fe.s
    eta = damping
    best, since_best = float("inf"), 0
    prev = float("inf")
    delta = float("inf")
    for it in range(1, max_iter + 1):
        new = prob.forward(th, fe)
        step = new - th
        delta = float(np.max(np.abs(step)))
        if delta < tol:
            return th, s, delta, it, True
        if delta > prev:
            eta = max(0.7 * eta, 0.02)
        prev = delta
        if delta < 0.9 * best:
            best, since_best = delta, 0
        else:
            since_best += 1
            if since_best > patience:
                log.debug("damped iteration stalled at sweep %d (change %.3e)", it, delta)
                return th, s, delta, it, False
        e = eta
        while True:
            cand = th + e * step
            try:
                fe = prob.F(cand, s)
                break
            except SaddleDomainError:
                e *= 0.5
                if e < 1e-4:
                    log.debug("damped iteration blocked by the saddle domain at sweep %d", it)
                    return th, s, delta, it, False
        th, s = cand, fe.s
    return th, s, delta, max_iter, False


def _saddle_floor(prob: ReplicaProblem) -> float:
    from .ffunc import _saddle_for

    return _saddle_for(prob.spec).s_floor


def _on_branch(prob: ReplicaProblem, th, s):
    from .ffunc import evaluate_F_at

    if s is None:
        return None
    try:
        return evaluate_F_at(prob.spec, th[0], s)
    except SaddleDomainError:
        return None


def _newton(prob: ReplicaProblem, th: np.ndarray, s: float, tol: float, max_iter: int):
    """Solve Theta = T(Theta) with (chi_w, q_w, m_w, tau, q_u, m_u), s = floor + e^tau."""
    from .ffunc import _saddle_for, evaluate_F_at

    sd = _saddle_for(prob.spec)
    floor = sd.s_floor

    def unpack(v):
        ss = floor + math.exp(v[3])
        fe = evaluate_F_at(prob.spec, v[0], ss)
        t = np.array([v[0], v[1], v[2], fe.y, v[4], v[5]])
        return t, fe

    def resid(v):
        try:
            t, fe = unpack(v)
            return prob.forward(t, fe) - t
        except (SaddleDomainError, ReplicaError, ValueError):
            return np.full(6, 1e3)

    v0 = np.array([th[0], th[1], th[2], math.log(s - floor), th[4], th[5]])
    best_x, delta, nfev = v0, float("inf"), 0
    # Levenberg-Marquardt copes with the stiff map next to a fold; Powell's
    # hybrid method is the fallback
    for method, opts in (("lm", {"xtol": 1e-15, "ftol": 1e-15, "maxiter": max_iter}),
                         ("hybr", {"xtol": 1e-14, "maxfev": max_iter})):
        sol = root(resid, v0, method=method, options=opts)
        nfev += int(getattr(sol, "nfev", 0))
        d = float(np.max(np.abs(resid(sol.x))))
        if d < delta:
            best_x, delta = sol.x, d
        if delta < tol:
            break
    t, fe = unpack(best_x) if delta < 1e2 else (th, None)
    if not delta < tol:
        raise ReplicaError(
            f"RS equations did not converge (damped sweeps then Newton; residual {delta:.3e})",
            state=OrderParameterSet.from_arrays(t, s=s))
    return t, fe.s, delta, nfev


def _finish(prob: ReplicaProblem, th: np.ndarray, s: float, iterations: int,
            residual: float) -> ReplicaSolution:
    fe = prob.F(th, s)
    hats = prob.conjugates(th, fe)
    ws = prob.w_side(hats[0], hats[1], hats[2])
    us = prob.u_side(hats[3], hats[4], hats[5])
    phi = prob.objective(th, hats, fe.s)
    energy = prob.rec_prior.mean_log_weight(th[0] + th[1]) + prob.alpha * us.energy
    margin = at_margin_from(fe, ws.chi2, us.chi2, prob.alpha)
    return ReplicaSolution(
        alpha=prob.alpha,
        params=OrderParameterSet.from_arrays(th, hats, s=fe.s),
        free_energy=phi,
        entropy=phi - energy,
        at_margin=margin,
        chi_w2=ws.chi2,
        chi_u2=us.chi2,
        iterations=iterations,
        residual=residual,
    )


def at_margin_from(fe, chi_w2, chi_u2, alpha) -> float:
    """Left side of the AT condition; RS is locally stable while it is > 0.

    The determinant (1 - 2 Fxx a)(1 - 2 Fyy b / alpha) - 4 Fxy^2 a b / alpha
    is written through F = Phi(xy); the Phi''^2 terms cancel identically, so
    the margin is linear in Phi'' and changes sign through a pole where the
    saddle passes a fold of xy(s).
    """
    x, y = fe.x, fe.y
    p1, p2 = fe.phi1, fe.phi2
    a, b = chi_w2, chi_u2
    P = x * y
    return (1.0 - 2.0 * p2 * (y * y * a + x * x * b / alpha)
            - 8.0 / alpha * P * p1 * p2 * a * b - 4.0 / alpha * p1 * p1 * a * b)


def at_stability(sol: ReplicaSolution, spec: SpectrumModel, generative, recognition,
                 n_gh: int = 96) -> float:
    prob = _as_problem(spec, generative, recognition, n_gh)
    p = sol.params
    th = p.theta()
    fe = prob.F(th, p.s if np.isfinite(p.s) else None)
    hats = prob.conjugates(th, fe)
    ws = prob.w_side(hats[0], hats[1], hats[2])
    us = prob.u_side(hats[3], hats[4], hats[5])
    return at_margin_from(fe, ws.chi2, us.chi2, spec.alpha)


def stationarity_gradient(sol: ReplicaSolution, spec, generative, recognition,
                          eps: float = 1e-5, n_gh: int = 96) -> np.ndarray:
    """Central-difference gradient of the 12-variable functional at ``sol``."""
    prob = _as_problem(spec, generative, recognition, n_gh)
    x0 = np.concatenate([sol.params.theta(), sol.params.hats()])
    grad = np.empty_like(x0)
    for k in range(x0.size):
        e = np.zeros_like(x0)
        e[k] = eps
        fp = prob.objective((x0 + e)[:6], (x0 + e)[6:], sol.params.s)
        fm = prob.objective((x0 - e)[:6], (x0 - e)[6:], sol.params.s)
        grad[k] = (fp - fm) / (2 * eps)
    return grad


# -------------------------------------------------------- derived measures

def normalized_free_energy(sol: ReplicaSolution, prior: PriorModel) -> float:
    """Free energy with the prior read as a probability measure."""
    if prior.is_ising and prior.measure == "counting":
        return sol.free_energy - LOG2
    return sol.free_energy


def kl_divergence(sol_P: ReplicaSolution, sol_Q: ReplicaSolution, alpha: float,
                  prior_P: PriorModel | None = None, prior_Q: PriorModel | None = None) -> float:
    """KL(Q|P) per output from the matched (Q) and recognition (P) free energies."""
    if abs(sol_P.alpha - alpha) > 1e-12 or abs(sol_Q.alpha - alpha) > 1e-12:
        raise ValueError("solutions were computed at different alpha")
    fP = sol_P.free_energy if prior_P is None else normalized_free_energy(sol_P, prior_P)
    fQ = sol_Q.free_energy if prior_Q is None else normalized_free_energy(sol_Q, prior_Q)
    return (fQ - fP) / alpha


def mutual_information(spec: SpectrumModel, generative, alpha: float | None = None,
                       matched: ReplicaSolution | None = None, **kw) -> float:
    """Typical mutual information between w and y, per output."""
    alpha = spec.alpha if alpha is None else alpha
    if abs(alpha - spec.alpha) > 1e-12:
        raise ValueError("alpha does not match the spectrum")
    prior, channel = generative
    T_u_hat = prior.second_moment() * spec.mean() / alpha
    out_term = channel.output_entropy_term(T_u_hat)  # fails fast on a noiseless channel
    if matched is None:
        matched = solve_rs(spec, generative, generative, **kw)
    f_Q = normalized_free_energy(matched, prior)
    return out_term - f_Q / alpha


# -------------------------------------------------- Gaussian-channel route

@dataclass
class GaussianChannelSolution:
    alpha: float
    chi_w: float
    q_w: float
    m_w: float
    free_energy: float
    iterations: int


def solve_gaussian_channel(spec: SpectrumModel, prior: PriorModel, sigma2: float,
                           sigma0_2: float, T_w: float | None = None,
                           teacher: PriorModel | None = None, damping: float = 0.5,
                           tol: float = 1e-12, max_iter: int = 5000,
                           n_gh: int = 96) -> GaussianChannelSolution:
    """Free energy for Gaussian P and Q channels through the G-function.

    Only (chi_w, q_w, m_w) are varied; the u-side has been integrated out,
    leaving G(-chi_w/sigma^2) and G'(-chi_w/sigma^2).
    """
    teacher = teacher or PriorModel(kind="gaussian", variance=T_w if T_w is not None else 1.0)
    T = teacher.second_moment() if T_w is None else T_w
    alpha = spec.alpha
    w0, ww0 = teacher.support()
    z, wz = gauss_hermite(n_gh)
    W = ww0[:, None] * wz[None, :]
    s2, s02 = sigma2, sigma0_2

    def hats_of(chi_w, q_w, m_w):
        G = evaluate_G(spec, -chi_w / s2)
        B = -(T - 2.0 * m_w + q_w) / s2 + s02 * chi_w / s2 ** 2
        chw = 2.0 * G.dG / s2
        mhw = 2.0 * G.dG / s2
        qhw = 2.0 * s02 * G.dG / s2 ** 2 - 2.0 * B * G.d2G / s2
        return G, B, chw, qhw, mhw

    def site(chw, qhw, mhw):
        h = math.sqrt(max(qhw, 0.0)) * z[None, :] + mhw * w0[:, None]
        logz, mean, var = prior.log_partition(chw, h)
        return (float(np.sum(W * var)), float(np.sum(W * mean * mean)),
                float(np.sum(W * w0[:, None] * mean)), float(np.sum(W * logz)))

    th = np.array([0.5 * prior.second_moment(), 0.5 * prior.second_moment(), 0.1])
    delta = float("inf")
    for it in range(1, max_iter + 1):
        _, _, chw, qhw, mhw = hats_of(*th)
        new = np.array(site(chw, qhw, mhw)[:3])
        delta = float(np.max(np.abs(new - th)))
        th = th + damping * (new - th)
        if delta < tol:
            break
    else:
        raise ReplicaError(f"G-route iteration did not converge (last change {delta:.3e})")
    chi_w, q_w, m_w = th
    G, B, chw, qhw, mhw = hats_of(chi_w, q_w, m_w)
    psi = site(chw, qhw, mhw)[3]
    Aw = 0.5 * chw * (chi_w + q_w) - 0.5 * qhw * chi_w - mhw * m_w + psi
    val = Aw + G.value + B * G.dG - 0.5 * alpha * (math.log(2 * math.pi * s2) + s02 / s2)
    return GaussianChannelSolution(alpha=alpha, chi_w=chi_w, q_w=q_w, m_w=m_w,
                                   free_energy=val, iterations=it)


def gaussian_channel_free_energy(spec: SpectrumModel, prior: PriorModel, sigma2: float,
                                 sigma0_2: float, **kw) -> float:
    """Free energy per element from the G-function route (see solve_gaussian_channel)."""
    return solve_gaussian_channel(spec, prior, sigma2, sigma0_2, **kw).free_energy


# ------------------------------------------------------------ alpha scans

SpectrumFactory = Callable[[float], SpectrumModel]


def scan(alphas: Sequence[float], spectrum: SpectrumFactory, generative, recognition,
         mutual_info: bool = False, kl: bool = False, **kw) -> list[ReplicaSolution]:
    """Solve along an increasing alpha grid, continuing from the previous point."""
    out = []
    prev = None
    for a in alphas:
        sp = spectrum(a)
        sol = solve_rs(sp, generative, recognition, init=prev.params if prev else None, **kw)
        if kl or mutual_info:
            matched = (sol if generative == recognition
                       else solve_rs(sp, generative, generative, **kw))
            if kl:
                sol.kl = kl_divergence(sol, matched, a, recognition[0], generative[0])
            if mutual_info:
                sol.mutual_info = mutual_information(sp, generative, a, matched=matched)
        out.append(sol)
        prev = sol
    return out


class NoSignChange(ValueError):
    pass


def _bisect_sign(fn: Callable[[float], float], grid: Iterable[float], xtol: float) -> float:
    prev_a = prev_v = None
    for a in grid:
        v = fn(a)
        if prev_v is not None and np.sign(v) != np.sign(prev_v):
            return brentq(fn, prev_a, a, xtol=xtol)
        prev_a, prev_v = a, v
    raise NoSignChange("no sign change in the scanned range")


def locate_transitions(spectrum: SpectrumFactory, generative, recognition,
                       alpha_min: float = 0.05, alpha_max: float = 0.99, step: float = 0.05,
                       xtol: float = 1e-4, which=("capacity", "at"), **kw):
    """Return (alpha_c, alpha_AT): zeros of the entropy and of the AT margin.

    Each solve starts from the converged solution at the nearest smaller
    alpha already visited, so the search follows one branch.
    """
    cache: dict[float, ReplicaSolution] = {}

    def solve_at(a):
        if a in cache:
            return cache[a]
        lower = [b for b in cache if b < a]
        init = cache[max(lower)].params if lower else None
        sol = solve_rs(spectrum(a), generative, recognition, init=init, **kw)
        cache[a] = sol
        return sol

    grid = list(np.round(np.arange(alpha_min, alpha_max + 1e-12, step), 12))
    for a in grid:
        try:
            solve_at(a)
        except ReplicaError:
            grid = [b for b in grid if b < a]
            break
    result = []
    for name in ("capacity", "at"):
        if name not in which:
            result.append(None)
            continue
        key = (lambda s: s.entropy) if name == "capacity" else (lambda s: s.at_margin)
        result.append(_bisect_sign(lambda a: key(solve_at(a)), grid, xtol))
    return tuple(result)

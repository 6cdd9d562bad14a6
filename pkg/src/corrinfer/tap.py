"""TAP (mean-field with Onsager reaction) solver for a single instance.

Fixed-point equations, with the F-function evaluated on the instance's own
spectrum:

    chi_w_hat = -2 dF/dx,   chi_u_hat = -(2/alpha) dF/dy   at (chi_w, chi_u)
    h_u = X m_w - chi_u_hat m_u,        m_u = dL/dh(chi_u_hat, h_u, y)
    chi_u = -mean d2L/dh2
    h_w = X^T m_u + chi_w_hat m_w,      m_w = prior mean at (chi_w_hat, h_w)
    chi_w = mean prior variance

The terms proportional to chi_u_hat and chi_w_hat are the Onsager reaction
corrections that remove each variable's feedback on its own field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from scipy.optimize import brentq

from .ffunc import SaddleDomainError, _saddle_for, evaluate_F, evaluate_F_at
from .models import ModelError
from .patterns import ProblemInstance, stream

INIT_NOISE = 1e-6


class TAPError(RuntimeError):
    pass


@dataclass
class TAPState:
    m_w: np.ndarray
    m_u: np.ndarray
    h_w: np.ndarray
    h_u: np.ndarray
    chi_w: float
    chi_u: float
    chi_w_hat: float
    chi_u_hat: float
    iteration: int = 0
    delta: float = float("inf")
    s: float | None = None  # branch label of the F saddle
    status: str = "running"
    trace: list = field(default_factory=list)


def _u_update(inst, m_w, m_u, chu):
    h_u = inst.X @ m_w - chu * m_u
    _, d1, d2 = inst.channel.log_evidence(chu, h_u, inst.y)
    return h_u, d1, float(-np.mean(d2)) if inst.p else 0.0


def _w_update(inst, m_w, m_u, chw):
    h_w = inst.X.T @ m_u + chw * m_w
    _, mean, var = inst.prior.log_partition(chw, h_w)
    return h_w, mean, float(np.mean(var))


def _u_scalars(inst, Xm, m_u, chi_w, s):
    """u-side response at saddle label ``s``: (fe, chi_u_hat, h_u, dL, chi_u_channel)."""
    fe = evaluate_F_at(inst.spectrum, chi_w, s)
    chu = -2.0 / inst.alpha * fe.dF_dy
    h_u = Xm - chu * m_u
    _, d1, d2 = inst.channel.log_evidence(chu, h_u, inst.y)
    return fe, chu, h_u, d1, float(-np.mean(d2))


def _solve_label(inst, Xm, m_u, chi_w, s0, reach=12.0):
    """Saddle label s nearest ``s0`` at which chi_w * chi_u(channel) = P(s).

    Solving for s instead of iterating chi_u keeps the update well defined
    through folds of P(s), where dF/dchi_u has infinite slope in chi_u.
    """
    sd = _saddle_for(inst.spectrum)
    base = sd.s_floor

    def rho(tau):
        s = base + math.exp(tau)
        try:
            fe, _, _, _, chiu = _u_scalars(inst, Xm, m_u, chi_w, s)
        except (SaddleDomainError, ModelError):
            return float("nan")
        return math.log(chiu * chi_w) - math.log(fe.x * fe.y)

    t0 = math.log(s0 - base)
    r0 = rho(t0)
    if r0 == 0.0:
        return s0
    if not np.isfinite(r0):
        raise SaddleDomainError(f"no real saddle at label s={s0!r}")
    # walk outward on both sides with growing steps until a sign change
    step, left, right = 0.01, (t0, r0), (t0, r0)
    live = [True, True]
    while step < reach and any(live):
        for k, sgn in enumerate((-1.0, 1.0)):
            if not live[k]:
                continue
            prev = left if k == 0 else right
            t = prev[0] + sgn * step
            r = rho(t)
            if not np.isfinite(r):
                live[k] = False
                continue
            if np.sign(r) != np.sign(prev[1]):
                a, b = sorted((prev[0], t))
                return base + math.exp(brentq(rho, a, b, xtol=1e-15, rtol=1e-15, maxiter=200))
            if k == 0:
                left = (t, r)
            else:
                right = (t, r)
        step *= 1.5
    raise SaddleDomainError("u-side susceptibility equation has no root near the current saddle")


def tap_solve(inst: ProblemInstance, damping: float = 0.5, max_iter: int = 1000,
              tol: float = 1e-10, seed: int = 0, onsager: bool = True
              ) -> tuple[TAPState, bool]:
    """Iterate the TAP equations by damped substitution.

    Each sweep first settles the u-side scalars: the saddle label s of F
    (equivalently chi_u, chi_u_hat) is solved so that the channel
    susceptibility matches F at the current (m_w, m_u, chi_w).  Then m_u
    follows from the channel, and m_w, chi_w from the prior with the new m_u.
    Vectors and chi_w are mixed with ``damping``.  Failure to converge, or
    the saddle leaving the real domain, is returned as data:
    ``(state, False)`` with ``state.status`` saying why.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    if not tol > 0:
        raise ValueError("tol must be positive")
    N, p = inst.N, inst.p
    prior = inst.prior
    if p == 0:
        _, mean, var = prior.log_partition(0.0, np.zeros(N))
        st = TAPState(m_w=mean, m_u=np.zeros(0), h_w=np.zeros(N), h_u=np.zeros(0),
                      chi_w=float(np.mean(var)), chi_u=0.0, chi_w_hat=0.0, chi_u_hat=0.0,
                      iteration=1, delta=0.0, status="converged")
        return st, True
    rng = stream(seed, "tap-init")
    m_w = INIT_NOISE * rng.standard_normal(N)
    m_u = np.zeros(p)
    chi_w = prior.second_moment()
    st = TAPState(m_w=m_w, m_u=m_u, h_w=np.zeros(N), h_u=np.zeros(p), chi_w=chi_w,
                  chi_u=0.0, chi_w_hat=0.0, chi_u_hat=0.0)
    st.s = _initial_label(inst, chi_w) if onsager else None
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported via status
        for it in range(1, max_iter + 1):
            Xm = inst.X @ st.m_w
            if onsager:
                try:
                    st.s = _solve_label(inst, Xm, st.m_u, st.chi_w, st.s)
                    fe, chu, h_u, mu_new, chiu = _u_scalars(inst, Xm, st.m_u, st.chi_w, st.s)
                except SaddleDomainError:
                    st.status = "saddle_domain"
                    return st, False
                chw = -2.0 * fe.dF_dx
            else:  # naive mean field: no reaction terms, no F
                chu = chw = 0.0
                h_u, mu_new, chiu = _u_update(inst, st.m_w, st.m_u, 0.0)
            h_w, mw_new, chiw_new = _w_update(inst, st.m_w, mu_new, chw)
            delta = max(float(np.max(np.abs(mw_new - st.m_w))),
                        float(np.max(np.abs(mu_new - st.m_u))),
                        abs(chiw_new - st.chi_w))
            st.m_w = (1 - damping) * st.m_w + damping * mw_new
            st.m_u = (1 - damping) * st.m_u + damping * mu_new
            st.chi_w = (1 - damping) * st.chi_w + damping * chiw_new
            st.chi_u, st.chi_w_hat, st.chi_u_hat = chiu, chw, chu
            st.h_w, st.h_u = h_w, h_u
            st.iteration, st.delta = it, delta
            st.trace.append(delta)
            if not np.isfinite(delta):
                st.status = "diverged"
                return st, False
            if delta < tol:
                st.status = "converged"
                _refresh(inst, st, onsager)
                return st, True
    st.status = "max_iter"
    return st, False


def _initial_label(inst, chi_w):
    """Saddle label on the principal branch for the prior-only guess chi_u."""
    sd = _saddle_for(inst.spectrum)
    chu = inst.spectrum.mean() * chi_w / inst.alpha
    _, _, chi_u = _u_update(inst, np.zeros(inst.N), np.zeros(inst.p), chu)
    for _ in range(60):
        try:
            return sd.solve(chi_w * chi_u)
        except SaddleDomainError:
            chi_u *= 0.5
    raise SaddleDomainError("no admissible starting saddle")


def _refresh(inst, st: TAPState, onsager=True):
    """Recompute the scalars and fields at the final (m, chi_w)."""
    Xm = inst.X @ st.m_w
    if onsager:
        st.s = _solve_label(inst, Xm, st.m_u, st.chi_w, st.s)
        fe, chu, h_u, _, chiu = _u_scalars(inst, Xm, st.m_u, st.chi_w, st.s)
        st.chi_w_hat = -2.0 * fe.dF_dx
    else:
        chu = st.chi_w_hat = 0.0
        h_u, _, chiu = _u_update(inst, st.m_w, st.m_u, 0.0)
    st.chi_u, st.chi_u_hat, st.h_u = chiu, chu, h_u
    st.h_w = inst.X.T @ st.m_u + st.chi_w_hat * st.m_w


def _scalars_at(inst, state: TAPState, onsager=True):
    """(F evaluation, chi_w_hat, chi_u_hat) on the state's saddle branch."""
    if not onsager:
        return None, 0.0, 0.0
    if state.s is not None and np.isfinite(state.s):
        fe = evaluate_F_at(inst.spectrum, state.chi_w, state.s)
    else:
        fe = evaluate_F(inst.spectrum, state.chi_w, state.chi_u)
    if not onsager:
        return fe, 0.0, 0.0
    return fe, -2.0 * fe.dF_dx, -2.0 / inst.alpha * fe.dF_dy


def tap_residual(inst: ProblemInstance, state: TAPState, onsager: bool = True) -> float:
    """Largest violation of the TAP equations at ``state``."""
    if inst.p == 0:
        _, mean, var = inst.prior.log_partition(0.0, np.zeros(inst.N))
        return max(float(np.max(np.abs(mean - state.m_w), initial=0.0)),
                   abs(float(np.mean(var)) - state.chi_w))
    try:
        fe, chw, chu = _scalars_at(inst, state, onsager)
    except SaddleDomainError:
        return float("inf")
    h_u, mu, chiu = _u_update(inst, state.m_w, state.m_u, chu)
    h_w, mw, chiw = _w_update(inst, state.m_w, state.m_u, chw)
    parts = [
        np.max(np.abs(mu - state.m_u)), np.max(np.abs(mw - state.m_w)),
        abs(chiu - state.chi_u), abs(chiw - state.chi_w),
        abs(fe.y - state.chi_u) if fe is not None else 0.0,
        abs(chw - state.chi_w_hat), abs(chu - state.chi_u_hat),
        np.max(np.abs(h_u - state.h_u)), np.max(np.abs(h_w - state.h_w)),
    ]
    return float(max(parts))


def tap_free_energy(inst: ProblemInstance, state: TAPState, tol: float = 1e-10,
                    onsager: bool = True) -> tuple[float, float]:
    """Return (N^-1 ln Z estimate, entropy per element) from the TAP functional.

    Refuses (TAPError) when the state is not stationary to 100 x ``tol``.
    """
    res = tap_residual(inst, state, onsager)
    if not res <= 100 * tol:
        raise TAPError(f"state is not a TAP fixed point (residual {res:.3e})")
    N, p = inst.N, inst.p
    prior, channel = inst.prior, inst.channel
    chw, chu = state.chi_w_hat, state.chi_u_hat
    logz, _, _ = prior.log_partition(chw, state.h_w)
    w_block = (float(state.h_w @ state.m_w) - 0.5 * chw * (N * state.chi_w + state.m_w @ state.m_w)
               - float(np.sum(logz)))
    phi = w_block
    energy = N * prior.mean_log_weight(state.chi_w + float(state.m_w @ state.m_w) / N)
    if p > 0:
        F = _scalars_at(inst, state)[0].value if onsager else 0.0
        L, d1, _ = channel.log_evidence(chu, state.h_u, inst.y)
        u_block = (float(state.h_u @ state.m_u) - 0.5 * chu * (p * state.chi_u - state.m_u @ state.m_u)
                   - float(np.sum(L)))
        phi += -float(state.m_u @ (inst.X @ state.m_w)) - N * F + u_block
        energy += float(np.sum(channel.mean_log_likelihood(chu, d1)))
    lnZ = -phi / N
    return lnZ, lnZ - energy / N

"""Eigenvalue spectra of the cross-correlation matrix X^T X.

Every spectrum is stored as a finite weighted point set: discrete atoms plus
(optionally) quadrature nodes that resolve a continuous density.  All
downstream code only ever sees ``locations`` / ``weights``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

KINDS = ("marchenko_pastur", "random_orthogonal", "single_atom", "empirical")

NORM_TOL = 1e-12
ZERO_TOL = 1e-10
DEFAULT_NODES = 200


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumModel:
    alpha: float
    atoms: tuple[tuple[float, float], ...]
    nodes: tuple[tuple[float, float], ...] = ()
    label: str = "empirical"
    # lower edge of the support; differs from min(locations) when a continuous
    # density is resolved by interior quadrature nodes
    support_min: float | None = None
    support_max: float | None = None
    _loc: np.ndarray = field(init=False, repr=False, compare=False)
    _wt: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise SpectrumError(f"alpha must be positive, got {self.alpha}")
        pts = list(self.atoms) + list(self.nodes)
        if not pts:
            raise SpectrumError("spectrum has no support points")
        loc = np.array([p[0] for p in pts], dtype=float)
        wt = np.array([p[1] for p in pts], dtype=float)
        if np.any(loc < 0):
            raise SpectrumError("eigenvalues of X^T X cannot be negative")
        if np.any(wt < 0):
            raise SpectrumError("negative spectral weight")
        if abs(wt.sum() - 1.0) > NORM_TOL:
            raise SpectrumError(f"spectrum not normalized: total weight {wt.sum()!r}")
        object.__setattr__(self, "_loc", loc)
        object.__setattr__(self, "_wt", wt)
        if self.support_min is None:
            object.__setattr__(self, "support_min", float(loc.min()))
        if self.support_max is None:
            object.__setattr__(self, "support_max", float(loc.max()))

    @property
    def locations(self) -> np.ndarray:
        return self._loc

    @property
    def weights(self) -> np.ndarray:
        return self._wt

    @property
    def zero_weight(self) -> float:
        """Total mass sitting exactly at lambda = 0."""
        return float(self._wt[self._loc == 0.0].sum())

    def positive_part(self) -> tuple[np.ndarray, np.ndarray]:
        mask = self._loc > 0.0
        return self._loc[mask], self._wt[mask]

    def mean(self) -> float:
        return float(np.dot(self._wt, self._loc))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "alpha": self.alpha,
            "atoms": [[float(a), float(b)] for a, b in self.atoms],
            "nodes": [[float(a), float(b)] for a, b in self.nodes],
            "support": [self.support_min, self.support_max],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SpectrumModel":
        support = doc.get("support") or [None, None]
        return cls(
            alpha=float(doc["alpha"]),
            atoms=tuple((float(a), float(b)) for a, b in doc.get("atoms", [])),
            nodes=tuple((float(a), float(b)) for a, b in doc.get("nodes", [])),
            label=doc.get("label", "empirical"),
            support_min=support[0],
            support_max=support[1],
        )

    @classmethod
    def from_json(cls, text: str) -> "SpectrumModel":
        return cls.from_dict(json.loads(text))


def expect(spec: SpectrumModel, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Average ``f(lambda)`` over the spectrum.

    ``f`` is called once on the full location array.  Callers dealing with
    functions singular at zero (e.g. ``log``) must drop the zero atom
    themselves.
    """
    vals = np.asarray(f(spec.locations), dtype=float)
    vals = np.broadcast_to(vals, spec.locations.shape)
    if not np.all(np.isfinite(vals)):
        raise SpectrumError("function is not finite on the support")
    return float(np.dot(spec.weights, vals))


def marchenko_pastur(alpha: float, n_nodes: int = DEFAULT_NODES) -> SpectrumModel:
    """Spectrum of X^T X for p x N iid entries of variance 1/N, alpha = p/N.

    The density (2 pi lambda)^-1 sqrt((lambda-l_-)(l_+-lambda)) is resolved by
    Gauss-Legendre quadrature in the angle lambda = a + b cos(theta), which
    absorbs the square-root edges (and the 1/sqrt(lambda) hard edge at
    alpha = 1) into a smooth integrand.
    """
    if not alpha > 0:
        raise SpectrumError("alpha must be positive")
    if n_nodes < 1:
        raise SpectrumError("need at least one quadrature node")
    lo = (np.sqrt(alpha) - 1.0) ** 2
    hi = (np.sqrt(alpha) + 1.0) ** 2
    a = 0.5 * (hi + lo)
    b = 0.5 * (hi - lo)
    t, w = np.polynomial.legendre.leggauss(n_nodes)
    theta = 0.5 * np.pi * (t + 1.0)
    wtheta = 0.5 * np.pi * w
    lam = a + b * np.cos(theta)
    s = np.sin(theta)
    # rho(lam) dlam = b^2 sin^2 / (2 pi lam) dtheta; for alpha = 1 use the
    # cancelled form (1 - cos)/2 * b^2/(2 pi a) to avoid 0/0 at theta = pi
    if abs(alpha - 1.0) < 1e-14:
        dens = b * b * (1.0 - np.cos(theta)) / (2.0 * np.pi * a)
    else:
        dens = b * b * s * s / (2.0 * np.pi * lam)
    psi = wtheta * dens
    zero = max(0.0, 1.0 - alpha)
    # exact continuous mass is min(alpha, 1); the angular rule reaches it to
    # machine precision, the rescale only removes last-bit rounding
    psi = psi * (min(alpha, 1.0) / psi.sum())
    atoms = ((0.0, zero),) if zero > 0 else ()
    return SpectrumModel(
        alpha=float(alpha),
        atoms=atoms,
        nodes=tuple(zip(lam.tolist(), psi.tolist())),
        label="marchenko_pastur",
        support_min=0.0 if zero > 0 else float(lo),
        support_max=float(hi),
    )


def random_orthogonal(alpha: float) -> SpectrumModel:
    """Row-orthonormal patterns (X X^T = I_p): atoms at 0 and 1."""
    if not 0 < alpha <= 1:
        raise SpectrumError("random_orthogonal spectrum requires 0 < alpha <= 1")
    atoms = ((1.0, float(alpha)),) if alpha == 1 else ((0.0, 1.0 - alpha), (1.0, float(alpha)))
    return SpectrumModel(alpha=float(alpha), atoms=atoms, label="random_orthogonal")


def single_atom(alpha: float, lam: float = 1.0) -> SpectrumModel:
    if lam < 0:
        raise SpectrumError("atom location must be non-negative")
    return SpectrumModel(alpha=float(alpha), atoms=((float(lam), 1.0),), label="single_atom")


def empirical_spectrum(eigenvalues: Iterable[float], N: int, alpha: float | None = None,
                       tol: float = ZERO_TOL) -> SpectrumModel:
    """Atomic spectrum from the (at most N) eigenvalues of an actual X^T X.

    Values within ``tol`` of each other are merged (so a numerically
    rank-deficient matrix reproduces an exact zero atom); missing eigenvalues
    are zeros.  ``alpha`` defaults to the number of supplied eigenvalues over
    N, which is right when the caller passes the p singular values squared.
    """
    ev = np.asarray(list(eigenvalues), dtype=float)
    if ev.size > N:
        raise SpectrumError(f"{ev.size} eigenvalues for N={N}")
    if np.any(ev < -tol):
        raise SpectrumError(f"negative eigenvalue {ev.min()!r}: X^T X must be PSD")
    ev = np.where(np.abs(ev) <= tol, 0.0, ev)
    if alpha is None:
        alpha = ev.size / N if ev.size else 1.0 / N
    full = np.concatenate([ev, np.zeros(N - ev.size)])
    full.sort()
    locs: list[float] = []
    counts: list[int] = []
    for v in full:
        if locs and v - locs[-1] <= tol * max(1.0, abs(v)):
            counts[-1] += 1
        else:
            locs.append(float(v))
            counts.append(1)
    atoms = tuple((l, c / N) for l, c in zip(locs, counts))
    return SpectrumModel(alpha=float(alpha), atoms=atoms, label="empirical")


def spectrum_of(X: np.ndarray) -> SpectrumModel:
    """Empirical spectrum of X^T X for a p x N pattern matrix."""
    p, N = X.shape
    if p == 0:
        return SpectrumModel(alpha=1.0 / N, atoms=((0.0, 1.0),), label="empirical")
    sv = np.linalg.svd(X, compute_uv=False)
    ev = sv[: min(p, N)] ** 2
    return empirical_spectrum(ev, N, alpha=p / N)


def make_spectrum(kind: str, alpha: float, params: Mapping | None = None) -> SpectrumModel:
    params = dict(params or {})
    if kind == "marchenko_pastur":
        return marchenko_pastur(alpha, int(params.get("nodes", DEFAULT_NODES)))
    if kind == "random_orthogonal":
        return random_orthogonal(alpha)
    if kind == "single_atom":
        return single_atom(alpha, float(params.get("lam", params.get("lambda", 1.0))))
    if kind == "empirical":
        if "eigenvalues" not in params or "N" not in params:
            raise SpectrumError("empirical spectrum needs 'eigenvalues' and 'N'")
        return empirical_spectrum(params["eigenvalues"], int(params["N"]), alpha)
    raise SpectrumError(f"unknown spectrum kind {kind!r}")

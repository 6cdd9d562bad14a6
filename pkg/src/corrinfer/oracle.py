"""Exact reference computations for small or exactly solvable instances.

These are deliberately independent of the replica and TAP machinery: brute
force enumeration for the Ising perceptron, dense linear algebra for the
Gaussian model, Monte Carlo for the statistics of Delta = X w, and log-det
identities for the Gaussian information measures.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .models import PriorModel
from .patterns import GeneratorSpec, ProblemInstance, generate_patterns, stream
from .spectrum import SpectrumModel, expect, marchenko_pastur, random_orthogonal

MAX_ENUM_N = 24
LOW_BITS = 12


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class Enumeration:
    count: int
    entropy: float  # -inf when no state is feasible
    means: np.ndarray  # posterior means over the feasible set (nan if empty)

    def __iter__(self):
        return iter((self.count, self.entropy, self.means))


def _spins(n: int) -> np.ndarray:
    """All 2^n spin vectors as an (n, 2^n) array; column k encodes the bits of k."""
    k = np.arange(2 ** n)
    bits = (k[None, :] >> np.arange(n)[:, None]) & 1
    return 2.0 * bits - 1.0


def _enumerate_block(X: np.ndarray, y: np.ndarray, lo: int, hi: int):
    """Count feasible states whose high-bit Gray index lies in [lo, hi).

    The low bits are handled as one vectorized block, the high bits are
    walked in Gray-code order with an O(p) field update per flip.
    """
    p, N = X.shape
    n_low = min(N, LOW_BITS)
    n_high = N - n_low
    S_low = _spins(n_low)  # n_low x 2^n_low
    F_low = y[:, None] * (X[:, :n_low] @ S_low)  # p x 2^n_low
    Xh = y[:, None] * X[:, n_low:]
    count = 0
    sum_low = np.zeros(n_low)
    sum_high = np.zeros(n_high)
    gray = lo ^ (lo >> 1)
    s_high = 2.0 * ((gray >> np.arange(n_high)) & 1) - 1.0
    f_high = Xh @ s_high
    for k in range(lo, hi):
        if k > lo:
            bit = (k & -k).bit_length() - 1  # bit flipped between gray(k-1) and gray(k)
            s_high[bit] = -s_high[bit]
            f_high += 2.0 * s_high[bit] * Xh[:, bit]
        ok = np.all(F_low + f_high[:, None] > 0.0, axis=0) if p else np.ones(S_low.shape[1], bool)
        c = int(np.count_nonzero(ok))
        if c:
            count += c
            sum_low += S_low[:, ok].sum(axis=1)
            sum_high += c * s_high
    return count, sum_low, sum_high


def enumerate_ising(inst: ProblemInstance, jobs: int = 1, blocks: int | None = None) -> Enumeration:
    """Exhaustive count of w in {-1, +1}^N with y_mu (X w)_mu > 0 for all mu.

    Exact zeros of the field count as violations.  The high-bit range is
    split into contiguous blocks (optionally run in ``jobs`` processes) and
    summed; the result does not depend on the split.
    """
    if not inst.prior.is_ising:
        raise OracleError("enumeration needs the Ising prior")
    if inst.p and inst.channel.kind != "perceptron_step":
        raise OracleError("enumeration needs the perceptron step channel")
    N = inst.N
    if N > MAX_ENUM_N:
        raise OracleError(f"N={N} exceeds the enumeration limit {MAX_ENUM_N}")
    n_high = N - min(N, LOW_BITS)
    total = 2 ** n_high
    nb = max(1, min(total, blocks or jobs))
    edges = [total * i // nb for i in range(nb + 1)]
    tasks = [(inst.X, inst.y, edges[i], edges[i + 1]) for i in range(nb)]
    if jobs > 1 and nb > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_enumerate_block, *zip(*tasks)))
    else:
        parts = [_enumerate_block(*t) for t in tasks]
    count = sum(c for c, _, _ in parts)
    sums = np.concatenate([sum(sl for _, sl, _ in parts), sum(sh for _, _, sh in parts)])
    if count == 0:
        return Enumeration(0, float("-inf"), np.full(N, np.nan))
    return Enumeration(count, math.log(count) / N, sums / count)


def gaussian_exact(inst: ProblemInstance) -> tuple[np.ndarray, float]:
    """Exact posterior mean and ln Z for Gaussian prior and Gaussian channel.

    With prior variance v and noise sigma^2:
        mean = (I/v + X^T X / sigma^2)^{-1} X^T y / sigma^2
        ln Z = ln N(y; 0, sigma^2 I + v X X^T)
    """
    if inst.prior.is_ising or inst.channel.kind != "gaussian_noise":
        raise OracleError("gaussian_exact needs a Gaussian prior and channel")
    v, s2 = inst.prior.variance, inst.channel.noise
    if not s2 > 0:
        raise OracleError("noise variance must be positive")
    X, y = inst.X, inst.y
    p, N = X.shape
    A = np.eye(N) / v + X.T @ X / s2
    mean = np.linalg.solve(A, X.T @ y / s2)
    C = s2 * np.eye(p) + v * X @ X.T
    L = np.linalg.cholesky(C)
    z = np.linalg.solve(L, y)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return mean, -0.5 * p * math.log(2 * math.pi) - 0.5 * logdet - 0.5 * float(z @ z)


def delta_statistics_check(prior: PriorModel, kind: str, N: int, p: int, samples: int,
                           seed: int = 0, n_se: float = 3.0) -> dict:
    """Monte Carlo test that Delta = X w is isotropic Gaussian with variance T_w <lam>/alpha.

    Per-sample statistics (variance and normalized fourth moment of the p
    components) are averaged over ``samples`` independent (X, w) draws; the
    standard errors come from the spread across samples.
    """
    if samples < 2:
        raise OracleError("need at least two samples for a standard error")
    alpha = p / N
    var_s, kurt_s, lam_mean = [], [], []
    for k in range(samples):
        X = generate_patterns(GeneratorSpec(kind=kind, N=N, p=p, seed=seed, sample=k))
        w = prior.sample(stream(seed, "delta-check", k), N)
        d = X @ w
        m2 = float(np.mean(d * d))
        var_s.append(m2)
        kurt_s.append(float(np.mean(d ** 4)) / m2 ** 2)
        lam_mean.append(float(np.sum(X * X)) / N)
    ens = marchenko_pastur(alpha) if kind == "iid_gaussian" else random_orthogonal(alpha)
    target_var = prior.second_moment() * ens.mean() / alpha
    report = {"N": N, "p": p, "samples": samples, "kind": kind, "target_variance": target_var,
              "mean_lambda": float(np.mean(lam_mean))}
    for name, vals, target in (("variance", var_s, target_var), ("kurtosis", kurt_s, 3.0)):
        vals = np.asarray(vals)
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
        report[name] = {"mean": mean, "se": se, "target": target,
                        "z": (mean - target) / se if se > 0 else 0.0,
                        "passed": abs(mean - target) <= n_se * se if se > 0 else mean == target}
    report["passed"] = report["variance"]["passed"] and report["kurtosis"]["passed"]
    return report


def gaussian_mutual_information(spec: SpectrumModel, T_w: float, sigma0_2: float) -> float:
    """I(w; y) per output for the matched Gaussian model: <ln(1 + lam T_w / sigma0^2)> / (2 alpha)."""
    return expect(spec, lambda lam: np.log1p(lam * T_w / sigma0_2)) / (2.0 * spec.alpha)


def gaussian_kl_rate(spec: SpectrumModel, T_w: float, sigma0_2: float, v: float,
                     sigma2: float) -> float:
    """Typical KL(Q|P) per output between Gaussian evidences of two Gaussian models.

    Each of the p directions of y carries variance sigma^2 + v mu under P and
    sigma0^2 + T_w mu under Q, where mu runs over the eigenvalues of X X^T.
    """
    def kl(mu):
        a = sigma0_2 + T_w * mu
        b = sigma2 + v * mu
        return 0.5 * (a / b - 1.0 - np.log(a / b))

    alpha = spec.alpha
    # (1/p) sum over eigenvalues of X X^T in terms of the spectrum of X^T X
    return expect(spec, kl) / alpha + (1.0 - 1.0 / alpha) * float(kl(0.0))


def run_suite(seed: int = 0) -> dict:
    """Small end-to-end oracle comparisons for the oracle-check command."""
    from .models import ChannelModel
    from .patterns import generate
    from .tap import tap_free_energy, tap_solve

    checks = {}
    empty = ProblemInstance(np.zeros((0, 10)), np.zeros(0))
    e = enumerate_ising(empty)
    checks["enumerate_p0"] = {"count": e.count, "passed": e.count == 1024}

    inst = generate(GeneratorSpec(kind="random_orthogonal", N=15, p=6, seed=seed))
    e1 = enumerate_ising(inst)
    S = _spins(15)
    naive = int(np.count_nonzero(np.all(inst.y[:, None] * (inst.X @ S) > 0, axis=0)))
    checks["enumerate_recount"] = {"count": e1.count, "recount": naive,
                                   "passed": e1.count == naive}

    rec = (PriorModel("gaussian", 1.0), ChannelModel("gaussian_noise", 1.0))
    g = generate(GeneratorSpec(kind="random_orthogonal", N=200, p=100, label_mode="teacher",
                               teacher_prior=rec[0], teacher_channel=rec[1], seed=seed), rec)
    mean, lnZ = gaussian_exact(g)
    st, ok = tap_solve(g)
    f = tap_free_energy(g, st)[0] * g.N if ok else float("nan")
    err_m = float(np.max(np.abs(st.m_w - mean)))
    checks["gaussian_tap"] = {"converged": ok, "mean_error": err_m,
                              "lnZ_rel_error": abs(f - lnZ) / abs(lnZ),
                              "passed": ok and err_m < 1e-8 and abs(f - lnZ) <= 1e-6 * abs(lnZ)}

    d = delta_statistics_check(PriorModel(), "random_orthogonal", 400, 200, 40, seed)
    checks["delta_statistics"] = {k: d[k] for k in ("variance", "kurtosis", "passed")}
    checks["passed"] = all(c["passed"] for c in checks.values())
    return checks

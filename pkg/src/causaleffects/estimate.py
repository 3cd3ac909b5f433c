"""Estimation of identified total effects by block-recursive regression.

The observational distribution factors over the buckets of the graph: each
bucket B_k regressed on its external parents Pa(B_k) gives a coefficient
block Lambda_k and a residual covariance Omega_k, and an identified total
effect is

    tau = Lambda_{A,D} [(I - Lambda_{D,D})^{-1}]_{D,Y}

assembled from those blocks over the plan's buckets.  Estimating the blocks
by least squares on the sample covariance is asymptotically efficient among
regular estimators that only use the graph and the covariance; the
delta-method covariance below is the matching plug-in variance and
:func:`efficiency_bound` evaluates the same quadratic form from the
lower-bound side.

All ``acov`` values are asymptotic covariances of sqrt(n) (tau_hat - tau);
divide by n (see :attr:`EffectEstimate.se`) for finite-sample use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateSampleError,
    GraphValidationError,
    IllConditionedError,
    NotIdentifiedError,
)
from .graph import BucketDecomposition, Mpdag, Pdag, bucket_decomposition
from .identify import IdentificationPlan, build_plan

__all__ = [
    "COND_LIMIT",
    "SampleCovariance",
    "BlockRecursiveModel",
    "EffectEstimate",
    "sample_covariance",
    "g_regression",
    "gbar_regression",
    "covariance_map",
    "effect_from_lambda",
    "effect_gradients",
    "delta_method_acov",
    "efficiency_bound",
    "adjustment_estimate",
    "bootstrap_ci",
    "estimate_total_effect",
]

# Solves are refused, not regularized, beyond this condition number.
COND_LIMIT = 1e10


@dataclass(frozen=True)
class SampleCovariance:
    """A covariance matrix tied to a vertex order.

    ``n`` is the number of rows behind the estimate; population covariances
    use ``n=None``.  The matrix must be symmetric (to 1e-12) and positive
    definite.
    """

    matrix: np.ndarray
    vertex_order: tuple[str, ...]
    n: int | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "vertex_order", tuple(self.vertex_order))
        p = len(self.vertex_order)
        if m.shape != (p, p):
            raise DegenerateSampleError(
                f"covariance shape {m.shape} does not match {p} vertices"
            )
        if not np.all(np.isfinite(m)):
            raise DegenerateSampleError("covariance contains non-finite values")
        if np.max(np.abs(m - m.T)) > 1e-12 * max(1.0, np.max(np.abs(m))):
            raise DegenerateSampleError("covariance matrix is not symmetric")
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            raise DegenerateSampleError(
                "covariance matrix is not positive definite"
            ) from None

    def positions(self, labels: Sequence[str]) -> np.ndarray:
        pos = {v: i for i, v in enumerate(self.vertex_order)}
        try:
            return np.array([pos[v] for v in labels], dtype=int)
        except KeyError as e:
            raise GraphValidationError(
                f"label {e.args[0]!r} is not in the covariance's vertex order"
            ) from None


def sample_covariance(
    data: np.ndarray, vertex_order: Sequence[str], center: bool = False
) -> SampleCovariance:
    """Second-moment matrix ``X'X / n`` of the data columns.

    Data are taken as already mean-zero, matching the population
    convention; ``center=True`` subtracts column means first.  Requires
    ``n > p`` and finite values.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise DegenerateSampleError("data must be a 2d array")
    n, p = x.shape
    if p != len(vertex_order):
        raise DegenerateSampleError(
            f"data has {p} columns but {len(vertex_order)} vertex labels were given"
        )
    if not np.all(np.isfinite(x)):
        raise DegenerateSampleError("data contains non-finite values")
    if n <= p:
        raise DegenerateSampleError(
            f"need more rows than columns for a positive definite covariance "
            f"(n={n}, p={p})"
        )
    if center:
        x = x - x.mean(axis=0)
    s = x.T @ x / n
    return SampleCovariance((s + s.T) / 2.0, tuple(vertex_order), n=n)


def _solve_spd(a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    """Solve ``a x = b`` for symmetric positive definite ``a``, refusing
    ill-conditioned systems."""
    if a.shape[0] == 0:
        return np.zeros((0,) + b.shape[1:])
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise IllConditionedError(
            f"{what}: matrix is not positive definite", cond=float("inf")
        ) from None
    w = np.linalg.eigvalsh(a)
    cond = float(w[-1] / w[0]) if w[0] > 0 else float("inf")
    if cond > COND_LIMIT:
        raise IllConditionedError(
            f"{what}: condition number {cond:.3e} exceeds {COND_LIMIT:.0e}",
            cond=cond,
        )
    return np.linalg.solve(a, b)


@dataclass(frozen=True)
class BlockRecursiveModel:
    """Per-bucket regression blocks (Lambda_k, Omega_k).

    ``mode="g"`` regresses each bucket on its external parents in the
    graph; ``mode="gbar"`` regresses on all earlier buckets, i.e. on the
    saturated graph's parent sets.  ``lambda_blocks[k]`` has one row per
    parent and one column per bucket member; parentless buckets get a
    0-row block and ``omega_blocks[k]`` equal to the bucket's marginal
    covariance.
    """

    buckets: BucketDecomposition
    mode: str
    lambda_blocks: tuple[np.ndarray, ...]
    omega_blocks: tuple[np.ndarray, ...]

    def parents(self, k: int) -> tuple[str, ...]:
        if self.mode == "g":
            return self.buckets.external_parents[k]
        return self.buckets.prefix(k)


def _block_regression(cov: SampleCovariance, buckets: BucketDecomposition, mode: str):
    if set(cov.vertex_order) != set(buckets.vertex_order):
        raise GraphValidationError(
            "covariance and bucket decomposition cover different vertex sets"
        )
    s = cov.matrix
    lambdas = []
    omegas = []
    for k, bucket in enumerate(buckets.buckets):
        pa = buckets.external_parents[k] if mode == "g" else buckets.prefix(k)
        bi = cov.positions(bucket)
        sb = s[np.ix_(bi, bi)]
        if not pa:
            lam = np.zeros((0, len(bucket)))
            omega = sb
        else:
            pi = cov.positions(pa)
            spp = s[np.ix_(pi, pi)]
            spb = s[np.ix_(pi, bi)]
            lam = _solve_spd(spp, spb, f"regression of bucket {bucket} on {pa}")
            omega = sb - spb.T @ lam
            omega = (omega + omega.T) / 2.0
        lambdas.append(lam)
        omegas.append(omega)
    return BlockRecursiveModel(buckets, mode, tuple(lambdas), tuple(omegas))


def g_regression(cov: SampleCovariance, buckets: BucketDecomposition) -> BlockRecursiveModel:
    """Least-squares coefficient and residual blocks, one bucket at a time,
    each bucket regressed on its external parents in the graph."""
    return _block_regression(cov, buckets, "g")


def gbar_regression(cov: SampleCovariance, buckets: BucketDecomposition) -> BlockRecursiveModel:
    """Same as :func:`g_regression` but regressing every bucket on the full
    union of earlier buckets (the saturated parent sets)."""
    return _block_regression(cov, buckets, "gbar")


def covariance_map(model: BlockRecursiveModel) -> np.ndarray:
    """Rebuild the covariance matrix implied by the blocks.

    Inverse of the regression map: for blocks computed from a positive
    definite covariance the round trip reproduces it.  Rows/columns follow
    ``model.buckets.vertex_order``.
    """
    buckets = model.buckets
    order = buckets.vertex_order
    pos = {v: i for i, v in enumerate(order)}
    p = len(order)
    s = np.zeros((p, p))
    prefix: list[int] = []
    for k, bucket in enumerate(buckets.buckets):
        bi = [pos[v] for v in bucket]
        lam = model.lambda_blocks[k]
        # embed the block over the full prefix (zero rows off the parent set)
        lam_full = np.zeros((len(prefix), len(bucket)))
        if lam.shape[0]:
            ppos = {v: i for i, v in enumerate(order[j] for j in prefix)}
            rows = [ppos[v] for v in model.parents(k)]
            lam_full[rows, :] = lam
        if prefix:
            spp = s[np.ix_(prefix, prefix)]
            cross = spp @ lam_full
            s[np.ix_(prefix, bi)] = cross
            s[np.ix_(bi, prefix)] = cross.T
            s[np.ix_(bi, bi)] = lam_full.T @ cross + model.omega_blocks[k]
        else:
            s[np.ix_(bi, bi)] = model.omega_blocks[k]
        prefix.extend(bi)
    return s


def _assemble_effect(model: BlockRecursiveModel, plan: IdentificationPlan):
    """Lambda_{A,D}, (I - Lambda_{D,D})^{-1} and index bookkeeping."""
    if model.buckets != plan.buckets:
        raise GraphValidationError(
            "model and plan were built from different bucket decompositions"
        )
    a_list = plan.treatment
    d_list = plan.d_set
    a_pos = {v: i for i, v in enumerate(a_list)}
    d_pos = {v: i for i, v in enumerate(d_list)}
    lam_ad = np.zeros((len(a_list), len(d_list)))
    lam_dd = np.zeros((len(d_list), len(d_list)))
    for k, dk in zip(plan.bucket_order, plan.d_buckets):
        bucket = model.buckets.buckets[k]
        lam = model.lambda_blocks[k]
        cols = {v: i for i, v in enumerate(bucket)}
        for v in dk:
            j = d_pos[v]
            for i, u in enumerate(model.parents(k)):
                val = lam[i, cols[v]]
                if u in a_pos:
                    lam_ad[a_pos[u], j] = val
                elif u in d_pos:
                    lam_dd[d_pos[u], j] = val
                # parents outside A and D carry no weight in the effect
    m = np.linalg.solve(np.eye(len(d_list)) - lam_dd, np.eye(len(d_list)))
    return lam_ad, m, a_pos, d_pos


def effect_from_lambda(model: BlockRecursiveModel, plan: IdentificationPlan) -> np.ndarray:
    """tau = Lambda_{A,D} [(I - Lambda_{D,D})^{-1}]_{D,Y}, one entry per
    treatment coordinate.  Coefficients without a corresponding directed
    edge are zero by construction, so an outcome outside the possible
    descendants of the treatment yields exactly zero."""
    lam_ad, m, _, d_pos = _assemble_effect(model, plan)
    return lam_ad @ m[:, d_pos[plan.outcome]]


def effect_gradients(
    model: BlockRecursiveModel, plan: IdentificationPlan
) -> dict[int, np.ndarray]:
    """Jacobian of tau with respect to each bucket's coefficient block.

    For bucket k the returned array has shape (|A|, |parents_k|, |B_k|):
    entry (t, i, j) is the derivative of tau_t with respect to
    Lambda_k[i, j].  With R = Lambda_{A,D} M and m = M[:, Y] the derivative
    is c_i * m_j, where c_i indicates the treatment coordinate when parent
    i is a treatment and equals R[t, i] when it lies in D; columns outside
    D are zero.  Buckets that do not meet D are omitted (all-zero
    gradient).
    """
    lam_ad, m, a_pos, d_pos = _assemble_effect(model, plan)
    r = lam_ad @ m
    mcol = m[:, d_pos[plan.outcome]]
    n_a = len(plan.treatment)
    grads: dict[int, np.ndarray] = {}
    for k, dk in zip(plan.bucket_order, plan.d_buckets):
        bucket = model.buckets.buckets[k]
        parents = model.parents(k)
        c = np.zeros((n_a, len(parents)))
        for i, u in enumerate(parents):
            if u in a_pos:
                c[a_pos[u], i] = 1.0
            elif u in d_pos:
                c[:, i] = r[:, d_pos[u]]
        mb = np.zeros(len(bucket))
        cols = {v: i for i, v in enumerate(bucket)}
        for v in dk:
            mb[cols[v]] = mcol[d_pos[v]]
        grads[k] = np.einsum("ti,b->tib", c, mb)
    return grads


def delta_method_acov(
    model: BlockRecursiveModel, plan: IdentificationPlan, cov: SampleCovariance
) -> np.ndarray:
    """Asymptotic covariance of sqrt(n) (tau_hat - tau) by the delta method.

    The coefficient blocks of distinct buckets are asymptotically
    independent, and within bucket k the block has covariance
    Omega_k (x) (Sigma_{Pa(B_k)})^{-1}; the result contracts the gradient
    blocks against that Kronecker form:

        acov[t, u] = sum_k  sum_{b, c}  Omega_k[b, c] *
                     (H_t' Sigma_{Pa}^{-1} H_u)[b, c].
    """
    if model.mode != "g":
        raise GraphValidationError("delta_method_acov expects a mode-'g' model")
    grads = effect_gradients(model, plan)
    n_a = len(plan.treatment)
    acov = np.zeros((n_a, n_a))
    for k, h in grads.items():
        parents = model.parents(k)
        if not parents or not h.any():
            continue
        pi = cov.positions(parents)
        spp = cov.matrix[np.ix_(pi, pi)]
        flat = h.transpose(1, 0, 2).reshape(len(parents), -1)
        sol = _solve_spd(spp, flat, f"parent covariance of bucket {k}")
        sol = sol.reshape(len(parents), n_a, h.shape[2]).transpose(1, 0, 2)
        acov += np.einsum("tib,uic,bc->tu", h, sol, model.omega_blocks[k])
    return (acov + acov.T) / 2.0


def efficiency_bound(
    model_g: BlockRecursiveModel,
    model_gbar: BlockRecursiveModel,
    plan: IdentificationPlan,
    cov: SampleCovariance,
    w: np.ndarray,
) -> float:
    """Lower bound on the asymptotic variance of any regular estimator of
    w' tau that uses the graph and the covariance alone:

        sum_k  h_k' [ Omega_k (x) (Sigma_{Pa(B_k)})^{-1} ] h_k ,

    with gradients h_k taken from the mode-'g' model and Omega_k from the
    mode-'gbar' model (the residual blocks of the saturated
    parameterization).  Evaluated at the truth this equals
    ``w' delta_method_acov(...) w``, which is how the bound is attained.
    """
    if model_g.mode != "g" or model_gbar.mode != "gbar":
        raise GraphValidationError("efficiency_bound expects one model per mode")
    w = np.asarray(w, dtype=float)
    grads = effect_gradients(model_g, plan)
    total = 0.0
    for k, h in grads.items():
        parents = model_g.parents(k)
        if not parents:
            continue
        hw = np.einsum("t,tib->ib", w, h)
        if not hw.any():
            continue
        pi = cov.positions(parents)
        spp = cov.matrix[np.ix_(pi, pi)]
        sol = _solve_spd(spp, hw, f"parent covariance of bucket {k}")
        total += float(np.einsum("ib,ic,bc->", hw, sol, model_gbar.omega_blocks[k]))
    return total


@dataclass
class EffectEstimate:
    """A point estimate with its asymptotic covariance and provenance."""

    treatment: tuple[str, ...]
    outcome: str
    tau: np.ndarray
    acov: np.ndarray
    method: str
    n: int | None = None
    gradients: dict[int, np.ndarray] | None = None
    ci_level: float | None = None
    ci_lower: np.ndarray | None = None
    ci_upper: np.ndarray | None = None
    boot_acov: np.ndarray | None = None
    boot_rejected: int = 0
    seed: int | None = None

    @property
    def se(self) -> np.ndarray | None:
        """Finite-sample standard errors sqrt(diag(acov) / n)."""
        if self.n is None:
            return None
        return np.sqrt(np.diag(self.acov) / self.n)

    def to_dict(self) -> dict:
        out = {
            "tau": {a: float(t) for a, t in zip(self.treatment, self.tau)},
            "acov": [[float(v) for v in row] for row in np.atleast_2d(self.acov)],
            "se": None
            if self.se is None
            else {a: float(s) for a, s in zip(self.treatment, self.se)},
            "method": self.method,
            "n": self.n,
            "outcome": self.outcome,
            "seed": self.seed,
        }
        if self.ci_level is not None:
            out["ci"] = {
                "level": self.ci_level,
                "lower": {a: float(v) for a, v in zip(self.treatment, self.ci_lower)},
                "upper": {a: float(v) for a, v in zip(self.treatment, self.ci_upper)},
                "rejected_replicates": self.boot_rejected,
            }
        return out


def adjustment_estimate(
    data: np.ndarray,
    columns: Sequence[str],
    treatment: Sequence[str],
    outcome: str,
    adjust: Sequence[str],
    center: bool = False,
) -> EffectEstimate:
    """Covariate-adjustment baseline: OLS of the outcome on (treatment,
    adjustment set) about zero, reporting the treatment coefficients.

    The acov is the textbook OLS form sigma^2 * (Sigma_{(A,Z)})^{-1}
    restricted to the treatment block.  Only valid adjustment sets make
    this consistent; the function does not check validity.
    """
    treatment = tuple(treatment)
    adjust = tuple(adjust)
    overlap = (set(treatment) | {outcome}) & set(adjust)
    if overlap:
        raise GraphValidationError(
            f"adjustment set overlaps treatment/outcome: {sorted(overlap)}"
        )
    if outcome in treatment:
        raise GraphValidationError("outcome cannot be part of the treatment set")
    cov = sample_covariance(data, columns, center=center)
    xs = treatment + adjust
    xi = cov.positions(xs)
    yi = cov.positions([outcome])[0]
    sxx = cov.matrix[np.ix_(xi, xi)]
    sxy = cov.matrix[xi, yi]
    beta = _solve_spd(sxx, sxy, "adjustment regression")
    resid_var = float(cov.matrix[yi, yi] - sxy @ beta)
    sxx_inv = _solve_spd(sxx, np.eye(len(xs)), "adjustment regression")
    n_a = len(treatment)
    acov = resid_var * sxx_inv[:n_a, :n_a]
    return EffectEstimate(
        treatment=treatment,
        outcome=outcome,
        tau=beta[:n_a].copy(),
        acov=acov,
        method="adjustment",
        n=cov.n,
    )


def _estimate_from_cov(cov: SampleCovariance, plan: IdentificationPlan):
    model = g_regression(cov, plan.buckets)
    return effect_from_lambda(model, plan), model


def bootstrap_ci(
    data: np.ndarray,
    columns: Sequence[str],
    graph: Pdag,
    treatment: Sequence[str],
    outcome: str,
    n_boot: int = 500,
    level: float = 0.95,
    seed: int = 0,
    center: bool = False,
):
    """Pairs-bootstrap percentile intervals for the estimated effect.

    Replicate r draws its indices from a counter-derived stream of the
    master seed, so results are reproducible for any worker count.
    Replicates whose resampled covariance is singular or ill-conditioned
    are rejected and redrawn; more than 10% rejections raises
    :class:`IllConditionedError`.

    Returns ``(lower, upper, boot_acov, n_rejected)`` where ``boot_acov``
    is n times the covariance of the replicate estimates (the bootstrap
    counterpart of the delta-method acov).
    """
    if not 0.0 < level < 1.0:
        raise GraphValidationError(f"confidence level must be in (0, 1), got {level}")
    x = np.asarray(data, dtype=float)
    n = x.shape[0]
    plan = build_plan(graph, treatment, outcome)
    base = np.random.Philox(key=np.uint64(seed))
    taus = np.empty((n_boot, len(plan.treatment)))
    got = 0
    rejected = 0
    stream = 0
    while got < n_boot:
        if rejected > max(10, n_boot):
            break
        rng = np.random.Generator(base.jumped(stream))
        stream += 1
        idx = rng.integers(0, n, size=n)
        xb = x[idx]
        try:
            cov = sample_covariance(xb, columns, center=center)
            tau, _ = _estimate_from_cov(cov, plan)
        except (DegenerateSampleError, IllConditionedError):
            rejected += 1
            continue
        taus[got] = tau
        got += 1
    if rejected > 0.10 * (n_boot + rejected):
        raise IllConditionedError(
            f"bootstrap rejected {rejected} of {n_boot + rejected} replicates "
            "(resampled covariances singular)",
        )
    alpha = 1.0 - level
    lower = np.quantile(taus, alpha / 2.0, axis=0)
    upper = np.quantile(taus, 1.0 - alpha / 2.0, axis=0)
    boot_acov = n * np.cov(taus, rowvar=False).reshape(
        len(plan.treatment), len(plan.treatment)
    )
    return lower, upper, boot_acov, rejected


def estimate_total_effect(
    graph: Pdag,
    treatment: Sequence[str],
    outcome: str,
    data: np.ndarray | None = None,
    columns: Sequence[str] | None = None,
    cov: SampleCovariance | None = None,
    center: bool = False,
    n_boot: int = 0,
    level: float = 0.95,
    seed: int = 0,
) -> EffectEstimate:
    """End-to-end pipeline: plan, regress, assemble, quantify.

    Exactly one of ``data`` (rows, with ``columns`` naming them; defaults
    to the graph's vertex order) or ``cov`` must be given.  Bootstrap
    intervals require raw data.  Raises :class:`NotIdentifiedError` when
    the effect is not identified from ``graph``.
    """
    if (data is None) == (cov is None):
        raise GraphValidationError("pass exactly one of data= or cov=")
    if data is not None:
        columns = tuple(columns) if columns is not None else graph.vertices
        cov = sample_covariance(data, columns, center=center)
    plan = build_plan(graph, treatment, outcome)
    tau, model = _estimate_from_cov(cov, plan)
    est = EffectEstimate(
        treatment=plan.treatment,
        outcome=outcome,
        tau=tau,
        acov=delta_method_acov(model, plan, cov),
        method="g_regression",
        n=cov.n,
        gradients=effect_gradients(model, plan),
        seed=seed if n_boot else None,
    )
    if n_boot:
        if data is None:
            raise GraphValidationError("bootstrap intervals need raw data, not cov=")
        lower, upper, boot_acov, rej = bootstrap_ci(
            data, columns, graph, treatment, outcome,
            n_boot=n_boot, level=level, seed=seed, center=center,
        )
        est.ci_level = level
        est.ci_lower = lower
        est.ci_upper = upper
        est.boot_acov = boot_acov
        est.boot_rejected = rej
    return est

"""Linear structural equation models with independent, possibly
non-Gaussian errors: random generation, sampling, ground-truth effects.

Conventions: ``gamma[i, j]`` is the coefficient of vertex i in the equation
of vertex j, so X = Gamma' X + eps vertex-wise and nonzero entries are
confined to the directed edges of the DAG.  Error families are parameterized
the way the simulation protocol draws them (variance for gaussian and the
scaled t, scale for logistic, half-width for uniform).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import GraphValidationError
from .graph import Mpdag, Pdag, graph_from_dict, graph_to_dict
from .identify import build_plan
from .estimate import BlockRecursiveModel, effect_from_lambda

__all__ = [
    "ERROR_FAMILIES",
    "ErrorSpec",
    "LinearSem",
    "rng_from_seed",
    "random_dag",
    "random_sem",
    "sample",
    "true_effect_pathsum",
    "true_effect_blockform",
    "sem_to_dict",
    "sem_from_dict",
    "save_sem",
    "load_sem",
]

ERROR_FAMILIES = ("gaussian", "scaled_t5", "logistic", "uniform")

# per-family parameter ranges used by random_sem
_PARAM_RANGES = {
    "gaussian": (0.5, 6.0),   # variance
    "scaled_t5": (0.5, 1.5),  # squared scale; variance is 5/3 of it
    "logistic": (0.4, 0.7),   # scale; variance is scale^2 pi^2 / 3
    "uniform": (1.2, 2.1),    # half-width; variance is width^2 / 3
}


def rng_from_seed(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator on a stream derived from (seed, *stream)."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=stream))
    )


@dataclass(frozen=True)
class ErrorSpec:
    """One vertex's error distribution."""

    family: str
    param: float

    def __post_init__(self):
        if self.family not in ERROR_FAMILIES:
            raise GraphValidationError(f"unknown error family {self.family!r}")
        if not self.param > 0:
            raise GraphValidationError("error parameter must be positive")

    @property
    def variance(self) -> float:
        if self.family == "gaussian":
            return self.param
        if self.family == "scaled_t5":
            return self.param * 5.0 / 3.0
        if self.family == "logistic":
            return self.param**2 * np.pi**2 / 3.0
        return self.param**2 / 3.0  # uniform

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.family == "gaussian":
            return rng.normal(0.0, np.sqrt(self.param), size)
        if self.family == "scaled_t5":
            return np.sqrt(self.param) * rng.standard_t(5, size)
        if self.family == "logistic":
            return rng.logistic(0.0, self.param, size)
        return rng.uniform(-self.param, self.param, size)


@dataclass(frozen=True)
class LinearSem:
    """A DAG plus edge coefficients and per-vertex error specs."""

    graph: Pdag
    gamma: np.ndarray
    errors: tuple[ErrorSpec, ...]

    def __post_init__(self):
        if not self.graph.is_dag:
            raise GraphValidationError("a linear SEM needs a DAG, not a partial graph")
        g = np.asarray(self.gamma, dtype=float)
        object.__setattr__(self, "gamma", g)
        p = self.graph.n_vertices
        if g.shape != (p, p):
            raise GraphValidationError(f"gamma must be {p}x{p}, got {g.shape}")
        if len(self.errors) != p:
            raise GraphValidationError("one error spec per vertex is required")
        support = np.zeros((p, p), dtype=bool)
        for u, v in self.graph.directed_edges:
            support[self.graph.index(u), self.graph.index(v)] = True
        if np.any(g[~support] != 0.0):
            raise GraphValidationError("gamma has nonzero entries off the edge set")

    @property
    def error_variances(self) -> np.ndarray:
        return np.array([e.variance for e in self.errors])

    def topological_order(self) -> list[int]:
        g = self.graph
        indeg = [len(g._pa[i]) for i in range(g.n_vertices)]
        out = [i for i, d in enumerate(indeg) if d == 0]
        head = 0
        while head < len(out):
            i = out[head]
            head += 1
            for j in sorted(g._ch[i]):
                indeg[j] -= 1
                if indeg[j] == 0:
                    out.append(j)
        return out

    def implied_covariance(self) -> np.ndarray:
        """Population covariance (I - Gamma)^-T V (I - Gamma)^-1 in the
        graph's vertex order."""
        p = self.graph.n_vertices
        m = np.linalg.inv(np.eye(p) - self.gamma)
        s = m.T @ (self.error_variances[:, None] * m)
        return (s + s.T) / 2.0


def random_dag(p: int, expected_degree: float, rng: np.random.Generator) -> Pdag:
    """Erdos-Renyi skeleton with edge probability expected_degree/(p-1),
    oriented along a uniformly random causal order.  Labels are "1".."p"."""
    if p < 2:
        raise GraphValidationError("need at least two vertices")
    labels = tuple(str(i + 1) for i in range(p))
    order = rng.permutation(p)
    rank = np.empty(p, dtype=int)
    rank[order] = np.arange(p)
    q = min(1.0, expected_degree / (p - 1))
    edges = []
    for i in range(p):
        for j in range(i + 1, p):
            if rng.random() < q:
                u, v = (i, j) if rank[i] < rank[j] else (j, i)
                edges.append((labels[u], labels[v]))
    return Pdag(labels, edges, ())


def random_sem(
    dag: Pdag,
    rng: np.random.Generator,
    rescale: bool = False,
    family: str | None = None,
    per_vertex_families: bool = False,
) -> LinearSem:
    """Draw coefficients and error specs for ``dag``.

    Coefficients are uniform on [-2, -0.1] + [0.1, 2].  One error family is
    drawn for the whole SEM unless ``family`` pins it or
    ``per_vertex_families`` draws one per vertex.  With ``rescale=True``,
    incoming coefficients are shrunk, in causal order, so each implied
    marginal variance stays at most max(6, error variance + 0.25); this
    keeps the variance profile flat without zeroing any edge.
    """
    p = dag.n_vertices
    gamma = np.zeros((p, p))
    for u, v in dag.directed_edges:
        mag = rng.uniform(0.1, 2.0)
        gamma[dag.index(u), dag.index(v)] = mag if rng.random() < 0.5 else -mag

    def draw_spec():
        fam = family
        if fam is None:
            fam = ERROR_FAMILIES[rng.integers(len(ERROR_FAMILIES))]
        lo, hi = _PARAM_RANGES[fam]
        return fam, (lo, hi)

    if per_vertex_families and family is None:
        specs = []
        for _ in range(p):
            fam, (lo, hi) = draw_spec()
            specs.append(ErrorSpec(fam, float(rng.uniform(lo, hi))))
    else:
        fam, (lo, hi) = draw_spec()
        specs = [ErrorSpec(fam, float(rng.uniform(lo, hi))) for _ in range(p)]
    sem = LinearSem(dag, gamma, tuple(specs))

    if rescale:
        v = sem.error_variances
        sigma = np.zeros((p, p))
        done: list[int] = []
        for j in sem.topological_order():
            pa = sorted(dag._pa[j])
            if pa:
                spp = sigma[np.ix_(pa, pa)]
                contrib = float(gamma[pa, j] @ spp @ gamma[pa, j])
                budget = max(6.0 - v[j], 0.25)
                if contrib > budget:
                    gamma[pa, j] *= np.sqrt(budget / contrib)
                cross = gamma[pa, j] @ sigma[np.ix_(pa, done)]
                sigma[j, done] = cross
                sigma[done, j] = cross
                sigma[j, j] = v[j] + float(gamma[pa, j] @ spp @ gamma[pa, j])
            else:
                sigma[j, j] = v[j]
            done.append(j)
        sem = LinearSem(dag, gamma, tuple(specs))
    return sem


def sample(sem: LinearSem, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws by forward substitution in topological order; columns follow
    the graph's vertex order."""
    p = sem.graph.n_vertices
    x = np.empty((n, p))
    for j in sem.topological_order():
        e = sem.errors[j].draw(rng, n)
        pa = sorted(sem.graph._pa[j])
        x[:, j] = (x[:, pa] @ sem.gamma[pa, j] + e) if pa else e
    return x


def true_effect_pathsum(
    sem: LinearSem, treatment: Sequence[str], outcome: str
) -> np.ndarray:
    """Ground truth by literal path enumeration: for each treatment vertex,
    the sum over directed paths to the outcome avoiding all other treatment
    vertices of the product of edge coefficients.  Exponential on purpose;
    an oracle, not a production path."""
    g = sem.graph
    a_idx = [g.index(v) for v in treatment]
    a_set = set(a_idx)
    y = g.index(outcome)
    if y in a_set:
        raise GraphValidationError("outcome cannot be part of the treatment set")
    out = np.zeros(len(a_idx))

    def walk(v: int, prod: float, t: int) -> None:
        for c in sorted(g._ch[v]):
            w = prod * sem.gamma[v, c]
            if c == y:
                out[t] += w
            elif c not in a_set:
                walk(c, w, t)

    for t, a in enumerate(a_idx):
        walk(a, 1.0, t)
    return out


def true_effect_blockform(
    sem: LinearSem, treatment: Sequence[str], outcome: str
) -> np.ndarray:
    """Ground truth through the identification/effect machinery evaluated at
    the population coefficients.  A DAG's buckets are singletons, so the
    coefficient blocks are just columns of gamma."""
    g = sem.graph
    mp = Mpdag(g.vertices, g.directed_edges, (), _trusted=True)
    plan = build_plan(mp, treatment, outcome)
    dec = plan.buckets
    lambdas = []
    omegas = []
    for k, bucket in enumerate(dec.buckets):
        (v,) = bucket
        j = g.index(v)
        pa = [g.index(u) for u in dec.external_parents[k]]
        lambdas.append(sem.gamma[pa, j].reshape(len(pa), 1))
        omegas.append(np.array([[sem.errors[j].variance]]))
    model = BlockRecursiveModel(dec, "g", tuple(lambdas), tuple(omegas))
    return effect_from_lambda(model, plan)


# -- serialization -------------------------------------------------------------


def sem_to_dict(sem: LinearSem) -> dict:
    g = sem.graph
    return {
        "graph": graph_to_dict(g),
        "coefficients": [
            [u, v, float(sem.gamma[g.index(u), g.index(v)])]
            for u, v in g.directed_edges
        ],
        "errors": [
            {"family": e.family, "param": float(e.param)} for e in sem.errors
        ],
    }


def sem_from_dict(d: dict) -> LinearSem:
    g = graph_from_dict(d["graph"])
    p = g.n_vertices
    gamma = np.zeros((p, p))
    for u, v, val in d["coefficients"]:
        gamma[g.index(u), g.index(v)] = float(val)
    errors = tuple(ErrorSpec(e["family"], float(e["param"])) for e in d["errors"])
    return LinearSem(g, gamma, errors)


def save_sem(sem: LinearSem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sem_to_dict(sem), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_sem(path) -> LinearSem:
    with open(path, "r", encoding="utf-8") as fh:
        return sem_from_dict(json.load(fh))

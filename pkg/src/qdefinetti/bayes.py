"""Bayesian updating of particle priors over density operators.

Posteriors are importance-weighted fixed particle sets.  Because the same
POVM is measured on every copy, the likelihood only depends on the outcome
counts, and all updates are computed from counts in the log domain.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegeneratePosteriorError, DimensionError, InvalidStateError, PriorSupportError
from .exchangeability import SimplexMixture
from .linalg import as_matrix, trace_distance
from .povm import Povm, outcome_probabilities
from .states import sample_densities

LOG_DOMAIN_THRESHOLD = 50


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Weighted density operators; ``particles`` has shape ``(n, d, d)``."""

    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        parts = np.asarray(self.particles, dtype=complex)
        if parts.ndim == 2:
            parts = parts[None]
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if parts.ndim != 3 or len(parts) == 0 or len(parts) != len(w):
            raise DimensionError("need one weight per particle and at least one particle")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-10:
            raise InvalidStateError("particle weights must be a probability vector")
        object.__setattr__(self, "particles", parts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, particles) -> "ParticleEnsemble":
        parts = np.asarray(particles, dtype=complex)
        return cls(parts, np.full(len(parts), 1.0 / len(parts)))

    @property
    def dim(self) -> int:
        return self.particles.shape[1]

    def __len__(self) -> int:
        return len(self.weights)

    def effective_sample_size(self) -> float:
        return float(1.0 / np.sum(self.weights**2))


@dataclass(frozen=True)
class OutcomeRecord:
    povm_id: str
    outcomes: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "outcomes", tuple(int(a) for a in self.outcomes))

    def __len__(self) -> int:
        return len(self.outcomes)

    def counts(self, num_outcomes: int) -> np.ndarray:
        if any(a < 0 or a >= num_outcomes for a in self.outcomes):
            raise DimensionError(f"outcome index outside [0, {num_outcomes})")
        return np.bincount(np.asarray(self.outcomes, dtype=int), minlength=num_outcomes)


# ---------------------------------------------------------------- classical predictive rules


def laplace_predictive(counts: Sequence[int], outcome: int) -> float:
    """Rule of succession under a uniform prior on the simplex: ``(n_j + 1)/(N + k)``."""
    c = np.asarray(counts, dtype=int)
    return float((c[outcome] + 1) / (c.sum() + len(c)))


def mixture_predictive(counts: Sequence[int], outcome: int, prior: SimplexMixture) -> float:
    """Predictive probability of ``outcome`` under a finite-support prior on the simplex."""
    c = np.asarray(counts, dtype=float)
    with np.errstate(divide="ignore"):
        logs = np.where(c > 0, c * np.log(prior.points), 0.0).sum(axis=1)
    logs = np.where(prior.weights > 0, logs + np.log(np.where(prior.weights > 0, prior.weights, 1)), -np.inf)
    if not np.isfinite(logs.max()):
        raise DegeneratePosteriorError("prior assigns zero probability to the data")
    post = np.exp(logs - logs.max())
    post /= post.sum()
    return float(post @ prior.points[:, outcome])


# ---------------------------------------------------------------- quantum


def born_table(particles, povm: Povm) -> np.ndarray:
    """``P[i, a] = tr(rho_i E_a)`` for a stack of states."""
    parts = np.asarray(particles, dtype=complex)
    if parts.shape[-1] != povm.dim:
        raise DimensionError(f"particles of dim {parts.shape[-1]} vs POVM of dim {povm.dim}")
    return np.clip(np.einsum("nij,aji->na", parts, povm.elements).real, 0.0, None)


def _count_loglik(table: np.ndarray, counts: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log(table)
        return np.where(counts > 0, counts * logs, 0.0).sum(axis=-1)


def log_likelihood(rho, record: OutcomeRecord, povm: Povm) -> float:
    counts = record.counts(len(povm))
    return float(_count_loglik(born_table(as_matrix(rho)[None], povm), counts)[0])


def likelihood(rho, record: OutcomeRecord, povm: Povm) -> float:
    """``prod_n tr(rho E_{a_n})``; accumulated in logs beyond 50 outcomes."""
    if len(record) > LOG_DOMAIN_THRESHOLD:
        return float(np.exp(log_likelihood(rho, record, povm)))
    probs = np.clip(outcome_probabilities(rho, povm), 0.0, None)
    return float(np.prod([probs[a] for a in record.outcomes]))


def update_with_counts(prior: ParticleEnsemble, counts: np.ndarray, povm: Povm) -> ParticleEnsemble:
    logw = _count_loglik(born_table(prior.particles, povm), np.asarray(counts))
    with np.errstate(divide="ignore"):
        logw = logw + np.log(prior.weights)
    top = logw.max()
    if not np.isfinite(top):
        raise DegeneratePosteriorError("every particle assigns zero probability to the data")
    w = np.exp(logw - top)
    return ParticleEnsemble(prior.particles, w / w.sum())


def bayes_update(prior: ParticleEnsemble, record: OutcomeRecord, povm: Povm) -> ParticleEnsemble:
    """Reweight particles by the likelihood of ``record``; particles are unchanged."""
    return update_with_counts(prior, record.counts(len(povm)), povm)


def predictive_state(posterior: ParticleEnsemble) -> np.ndarray:
    """Single-copy predictive ``sum_i w_i rho_i``."""
    return np.einsum("n,nij->ij", posterior.weights, posterior.particles)


def simulate_measurements(truth, povm: Povm, n: int, rng: np.random.Generator) -> OutcomeRecord:
    """``n`` i.i.d. outcomes drawn from the Born distribution of ``truth``."""
    p = np.clip(outcome_probabilities(truth, povm), 0.0, None)
    if n == 0:
        return OutcomeRecord(povm.name)
    return OutcomeRecord(povm.name, tuple(rng.choice(len(p), size=n, p=p / p.sum()).tolist()))


# ---------------------------------------------------------------- priors


def hs_prior(d: int, n: int, rng: np.random.Generator, measure: str = "hilbert-schmidt") -> ParticleEnsemble:
    return ParticleEnsemble.uniform(sample_densities(n, d, rng, measure))


def tilted_prior(d: int, n: int, rng: np.random.Generator, target, power: float = 4.0,
                 measure: str = "hilbert-schmidt") -> ParticleEnsemble:
    """Random particles weighted by ``tr(rho target)^power``."""
    parts = sample_densities(n, d, rng, measure)
    w = np.einsum("nij,ji->n", parts, as_matrix(target)).real.clip(0.0) ** power
    return ParticleEnsemble(parts, w / w.sum())


# ---------------------------------------------------------------- convergence


@dataclass
class ConvergenceReport:
    rows: list[tuple[int, float, float, float]]
    threshold: float
    passed: bool
    flags: list[str] = field(default_factory=list)
    predictive: list[np.ndarray] = field(default_factory=list)

    CSV_HEADER = ("shots", "cross_prior_distance", "prior1_truth", "prior2_truth")

    @property
    def final(self) -> tuple[int, float, float, float]:
        return self.rows[-1]

    def trend_slope(self) -> float:
        """Least-squares slope of log max-distance against log shots (negative = shrinking)."""
        pts = [(row[0], max(row[1:])) for row in self.rows if row[0] > 0]
        if len(pts) < 2:
            return 0.0
        x = np.log([p[0] for p in pts])
        y = np.log(np.maximum([p[1] for p in pts], 1e-300))
        return float(np.polyfit(x, y, 1)[0])

    def to_json(self) -> dict:
        s, cross, d1, d2 = self.final
        return {
            "threshold": self.threshold,
            "passed": self.passed,
            "flags": list(self.flags),
            "final": {"shots": s, "cross_prior_distance": cross, "prior1_truth": d1, "prior2_truth": d2},
            "trend_slope": self.trend_slope(),
            "rows": [list(r) for r in self.rows],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_HEADER)
        for s, *vals in self.rows:
            writer.writerow([s, *(repr(float(v)) for v in vals)])
        return buf.getvalue()


def default_checkpoints(shots: int) -> list[int]:
    cps = {0, shots}
    k = 1
    while k < shots:
        cps.add(k)
        k *= 2
    return sorted(cps)


def has_support_near(prior: ParticleEnsemble, truth, radius: float) -> bool:
    near = [trace_distance(p, truth) <= radius for p in prior.particles]
    return bool(np.any(np.asarray(near) & (prior.weights > 0)))


def convergence_experiment(
    truth,
    priors: Sequence[ParticleEnsemble],
    povm: Povm,
    shots: int,
    rng: np.random.Generator,
    threshold: float = 0.08,
    support_radius: float = 0.2,
    check_support: bool = True,
    checkpoints: Sequence[int] | None = None,
) -> ConvergenceReport:
    """Feed one simulated data stream to two priors and track their predictive states.

    Distances are logged at powers of two and at ``shots``.  The run passes
    when the final cross-prior and prior-to-truth trace distances are all
    below ``threshold``.
    """
    truth = as_matrix(truth)
    if len(priors) != 2:
        raise ValueError("convergence experiment compares exactly two priors")
    if check_support:
        for i, prior in enumerate(priors):
            if not has_support_near(prior, truth, support_radius):
                raise PriorSupportError(f"prior {i + 1} has no weight within {support_radius} of the truth")
    record = simulate_measurements(truth, povm, shots, rng)
    outcomes = np.asarray(record.outcomes, dtype=int)
    rows, preds, flags = [], [], []
    for s in checkpoints or default_checkpoints(shots):
        counts = np.bincount(outcomes[:s], minlength=len(povm))
        try:
            posts = [update_with_counts(p, counts, povm) for p in priors]
        except DegeneratePosteriorError:
            flags.append(f"degenerate posterior at {s} shots")
            break
        preds = [predictive_state(p) for p in posts]
        rows.append((int(s), trace_distance(*preds), trace_distance(preds[0], truth), trace_distance(preds[1], truth)))
    passed = bool(rows) and rows[-1][0] == shots and max(rows[-1][1:]) < threshold
    if rows and not passed and not flags:
        flags.append("stalled: final distances above threshold")
    return ConvergenceReport(rows, threshold, passed, flags, preds)

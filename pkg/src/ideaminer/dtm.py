"""Dynamic topic model over yearly slices.

Each topic k carries a chain of natural parameter vectors m[t] that evolves
as a Gaussian random walk, m[t] ~ Normal(m[t-1], chain_variance * I), with
words emitted through softmax(m[t]). Fitting alternates

  (a) per-slice document E-steps: standard variational updates for the
      document-topic posteriors against the current slice distributions, and
  (b) forward-backward variational Kalman smoothing of each topic chain:
      the E-step statistics become Gaussian pseudo-observations whose
      precision is damped for stability, and a Rauch-Tung-Striebel pass
      solves the resulting chain problem exactly.

Because the damping is only accepted when the penalized objective improves
(the safe damping of one half guarantees acceptance eventually), the
recorded objective trace is non-decreasing up to floating point noise. The
trace is the document variational bound plus the chain log density, so a
shrinking relative change signals convergence of the whole fit.

Empty slices contribute no pseudo-observations; the smoother interpolates
their chains from the neighbours.
"""

from __future__ import annotations

import json
import math
import warnings
from pathlib import Path

import numpy as np
from scipy.special import digamma, gammaln, logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .lda import RNG_ALGORITHM, GibbsLda, rank_terms
from .preprocess import BowCorpus
from .trends import TermTrajectory

# diffuse prior variance for the first state of every chain; kept fixed so a
# vanishing chain_variance collapses the fit toward a pooled single slice
INIT_STATE_VARIANCE = 10.0
# provably safe pseudo-observation damping (quadratic upper bound curvature)
SAFE_DAMPING = 0.5
MIN_DAMPING = 1e-3


def _kalman_smooth(y, obs_variance, has_obs, chain_variance, init_variance):
    """RTS smoother for independent scalar random-walk chains.

    ``y`` is (T, V); observation variance is shared across the V chains
    within a slice, so the gains are scalars per slice.
    """
    n_slices = y.shape[0]
    filt = np.empty_like(y)
    filt_var = np.empty(n_slices)
    pred = np.zeros(y.shape[1])
    pred_var = init_variance
    for t in range(n_slices):
        if t > 0:
            pred = filt[t - 1]
            pred_var = filt_var[t - 1] + chain_variance
        if has_obs[t]:
            gain = pred_var / (pred_var + obs_variance[t])
            filt[t] = pred + gain * (y[t] - pred)
            filt_var[t] = (1.0 - gain) * pred_var
        else:
            filt[t] = pred
            filt_var[t] = pred_var
    smoothed = np.empty_like(y)
    smoothed[n_slices - 1] = filt[n_slices - 1]
    for t in range(n_slices - 2, -1, -1):
        c = filt_var[t] / (filt_var[t] + chain_variance)
        smoothed[t] = filt[t] + c * (smoothed[t + 1] - filt[t])
    return smoothed


def _chain_objective(m, ss, n_tk, chain_variance, init_variance):
    """Expected topic log likelihood plus the chain log density (no constants)."""
    lse = logsumexp(m, axis=1)
    value = float((ss * m).sum() - (n_tk * lse).sum())
    if m.shape[0] > 1:
        diffs = m[1:] - m[:-1]
        value -= float((diffs * diffs).sum()) / (2.0 * chain_variance)
    value -= float((m[0] * m[0]).sum()) / (2.0 * init_variance)
    return value


def _chain_log_constants(n_slices, vocab_size, chain_variance, init_variance):
    const = -0.5 * vocab_size * math.log(2.0 * math.pi * init_variance)
    if n_slices > 1:
        const -= 0.5 * vocab_size * (n_slices - 1) * math.log(
            2.0 * math.pi * chain_variance
        )
    return const


def _smooth_topic_chain(m, ss, chain_variance, init_variance, max_steps):
    """Damped pseudo-observation smoothing until the objective stalls."""
    n_tk = ss.sum(axis=1)
    has_obs = n_tk > 0.0
    objective = _chain_objective(m, ss, n_tk, chain_variance, init_variance)
    damping = 0.05
    for _ in range(max_steps):
        proposal = None
        new_objective = -math.inf
        while True:
            probs = np.exp(m - logsumexp(m, axis=1, keepdims=True))
            precision = np.where(has_obs, damping * n_tk, 1.0)
            y = m + (ss - n_tk[:, None] * probs) / precision[:, None]
            proposal = _kalman_smooth(
                y, 1.0 / precision, has_obs, chain_variance, init_variance
            )
            new_objective = _chain_objective(
                proposal, ss, n_tk, chain_variance, init_variance
            )
            if new_objective >= objective - 1e-12 * abs(objective):
                break
            if damping >= SAFE_DAMPING:
                # the safe curvature guarantees no real decrease; accept
                break
            damping = min(damping * 2.0, SAFE_DAMPING)
        improvement = new_objective - objective
        m = proposal
        objective = max(new_objective, objective)
        damping = max(damping * 0.7, MIN_DAMPING)
        if improvement <= 1e-9 * (1.0 + abs(objective)):
            break
    return m


class DynamicTopicModel(BaseEstimator):
    """Topic chains over time slices with smoothed term trajectories.

    Parameters
    ----------
    n_topics : number of topic chains, at least 2.
    chain_variance : per-step variance of each chain's Gaussian walk;
        smaller values tie the slices together harder.
    alpha : symmetric document-topic prior.
    max_em_iters : outer iteration cap.
    em_tol : stop once the relative objective change falls below this.
    seed : drives the pooled static initialization fit.
    """

    def __init__(
        self,
        n_topics: int = 2,
        chain_variance: float = 0.005,
        alpha: float = 0.1,
        max_em_iters: int = 20,
        em_tol: float = 1e-4,
        seed: int = 0,
        init_lda_iterations: int = 200,
        doc_inner_iters: int = 50,
        mm_steps: int = 8,
    ):
        self.n_topics = n_topics
        self.chain_variance = chain_variance
        self.alpha = alpha
        self.max_em_iters = max_em_iters
        self.em_tol = em_tol
        self.seed = seed
        self.init_lda_iterations = init_lda_iterations
        self.doc_inner_iters = doc_inner_iters
        self.mm_steps = mm_steps

    # ------------------------------------------------------------------ fit

    def fit(self, bow: BowCorpus, y=None, vocabulary=None, years=None):
        if self.n_topics < 2:
            raise ValueError("n_topics must be at least 2")
        if self.chain_variance <= 0:
            raise ValueError("chain_variance must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.max_em_iters < 1:
            raise ValueError("max_em_iters must be at least 1")
        n_slices = bow.num_slices
        if n_slices < 1:
            raise ValueError("corpus must carry at least one time slice")
        empty = [t for t, size in enumerate(bow.slice_sizes) if size == 0]
        if empty:
            warnings.warn(f"slices {empty} are empty; chains interpolate", stacklevel=2)
        if years is not None:
            years = [int(v) for v in years]
            if len(years) != n_slices:
                raise ValueError("years length must equal the slice count")
        else:
            years = list(range(n_slices))

        if vocabulary is not None:
            vocab_size = len(vocabulary)
            if bow.max_index() >= vocab_size:
                raise ValueError("corpus indices exceed the vocabulary size")
        else:
            vocab_size = bow.max_index() + 1

        pooled = GibbsLda(
            n_topics=self.n_topics,
            alpha=self.alpha,
            iterations=self.init_lda_iterations,
            seed=self.seed,
        ).fit(bow, vocabulary=vocabulary)
        m = np.log(pooled.topic_term_)
        m -= m.mean(axis=1, keepdims=True)
        # chains start flat across time at the pooled solution
        m = np.repeat(m[np.newaxis, :, :], n_slices, axis=0).copy()

        log_beta = m - logsumexp(m, axis=2, keepdims=True)
        doc_lengths = np.array([sum(c for _, c in doc) for doc in bow.docs])
        gammas = np.full((bow.num_docs, self.n_topics), self.alpha)
        gammas += doc_lengths[:, None] / self.n_topics

        doc_ids = [np.array([w for w, _ in doc], dtype=np.int64) for doc in bow.docs]
        doc_counts = [
            np.array([c for _, c in doc], dtype=np.float64) for doc in bow.docs
        ]
        bounds = bow.slice_bounds()
        chain_const = self.n_topics * _chain_log_constants(
            n_slices, vocab_size, self.chain_variance, INIT_STATE_VARIANCE
        )

        trace: list[float] = []
        converged = False
        for _ in range(self.max_em_iters):
            ss, doc_bound = self._e_step(
                bounds, doc_ids, doc_counts, log_beta, gammas
            )
            # part of the document bound that does not depend on the chains
            base = doc_bound - float((ss * log_beta).sum())
            for k in range(self.n_topics):
                m[:, k, :] = _smooth_topic_chain(
                    m[:, k, :],
                    ss[:, k, :],
                    self.chain_variance,
                    INIT_STATE_VARIANCE,
                    self.mm_steps,
                )
            log_beta = m - logsumexp(m, axis=2, keepdims=True)
            chain_prior = chain_const
            if n_slices > 1:
                diffs = m[1:] - m[:-1]
                chain_prior -= float((diffs * diffs).sum()) / (
                    2.0 * self.chain_variance
                )
            chain_prior -= float((m[0] * m[0]).sum()) / (2.0 * INIT_STATE_VARIANCE)
            objective = base + float((ss * log_beta).sum()) + chain_prior
            if trace:
                prev = trace[-1]
                if objective < prev - 1e-6 * abs(prev):
                    warnings.warn(
                        "objective decreased beyond tolerance; returning the fit"
                        " anyway",
                        stacklevel=2,
                    )
                if abs(objective - prev) < self.em_tol * abs(prev):
                    trace.append(objective)
                    converged = True
                    break
            trace.append(objective)

        self.beta_ = np.exp(log_beta)
        self.elbo_trace_ = trace
        self.converged_ = converged
        self.n_iter_ = len(trace)
        self.years_ = years
        self.vocabulary_ = list(vocabulary) if vocabulary is not None else None
        self.vocab_size_ = vocab_size
        self.n_slices_ = n_slices
        self.rng_algorithm_ = RNG_ALGORITHM
        return self

    def _e_step(self, bounds, doc_ids, doc_counts, log_beta, gammas):
        n_slices, n_topics, vocab_size = log_beta.shape
        ss = np.zeros((n_slices, n_topics, vocab_size))
        total_bound = 0.0
        dirichlet_const = float(
            gammaln(n_topics * self.alpha) - n_topics * gammaln(self.alpha)
        )
        for t, (start, end) in enumerate(bounds):
            lb_slice = log_beta[t]
            for d in range(start, end):
                ids = doc_ids[d]
                counts = doc_counts[d]
                lb = lb_slice[:, ids]
                gamma = gammas[d]
                for _ in range(self.doc_inner_iters):
                    elog_theta = digamma(gamma) - digamma(gamma.sum())
                    log_phi = lb + elog_theta[:, None]
                    peak = log_phi.max(axis=0)
                    phi = np.exp(log_phi - peak)
                    norm = phi.sum(axis=0)
                    phi /= norm
                    new_gamma = self.alpha + phi @ counts
                    delta = np.abs(new_gamma - gamma).max()
                    gamma = new_gamma
                    if delta < 1e-6 * max(1.0, gamma.max()):
                        break
                elog_theta = digamma(gamma) - digamma(gamma.sum())
                log_phi = lb + elog_theta[:, None]
                peak = log_phi.max(axis=0)
                phi = np.exp(log_phi - peak)
                norm = phi.sum(axis=0)
                phi /= norm
                log_norm = np.log(norm) + peak
                gammas[d] = gamma
                bound = float(counts @ log_norm)
                bound += dirichlet_const
                bound += float(gammaln(gamma).sum() - gammaln(gamma.sum()))
                bound += float(
                    ((self.alpha - gamma) * (digamma(gamma) - digamma(gamma.sum()))).sum()
                )
                total_bound += bound
                # term ids are unique within a bag-of-words document
                ss[t][:, ids] += phi * counts
        return ss, total_bound

    # ------------------------------------------------------------- queries

    def _term_index(self, term) -> int:
        if isinstance(term, (int, np.integer)):
            idx = int(term)
            if not 0 <= idx < self.vocab_size_:
                raise ValueError(f"term index {idx} out of range")
            return idx
        if self.vocabulary_ is None:
            raise ValueError("model was fitted without a vocabulary")
        try:
            return self.vocabulary_.index(term)
        except ValueError:
            raise ValueError(f"unknown term {term!r}") from None

    def _check_topic(self, topic: int) -> None:
        if not 0 <= topic < self.n_topics:
            raise ValueError(f"topic index {topic} out of range")

    def term_trajectory(self, topic: int, term) -> TermTrajectory:
        """Per-slice probability of one term inside one topic chain."""
        check_is_fitted(self)
        self._check_topic(topic)
        idx = self._term_index(term)
        name = self.vocabulary_[idx] if self.vocabulary_ is not None else str(idx)
        return TermTrajectory(
            topic=topic,
            term=name,
            years=tuple(self.years_),
            values=tuple(float(v) for v in self.beta_[:, topic, idx]),
        )

    def top_terms_at_slice(self, topic: int, t: int, n: int = 10) -> list[tuple]:
        check_is_fitted(self)
        self._check_topic(topic)
        if not 0 <= t < self.n_slices_:
            raise ValueError(f"slice index {t} out of range")
        return rank_terms(self.beta_[t, topic], self.vocabulary_, n)

    # ------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        check_is_fitted(self)
        return {
            "format": "ideaminer-dtm/1",
            "n_topics": self.n_topics,
            "n_slices": self.n_slices_,
            "vocab_size": self.vocab_size_,
            "chain_variance": self.chain_variance,
            "alpha": self.alpha,
            "max_em_iters": self.max_em_iters,
            "em_tol": self.em_tol,
            "seed": self.seed,
            "rng": self.rng_algorithm_,
            "years": self.years_,
            "vocabulary": self.vocabulary_,
            "elbo_trace": self.elbo_trace_,
            "converged": self.converged_,
            "beta": self.beta_.tolist(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DynamicTopicModel":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if raw.get("format") != "ideaminer-dtm/1":
            raise ValueError(f"unsupported model file format: {raw.get('format')!r}")
        model = cls(
            n_topics=raw["n_topics"],
            chain_variance=raw["chain_variance"],
            alpha=raw["alpha"],
            max_em_iters=raw["max_em_iters"],
            em_tol=raw["em_tol"],
            seed=raw["seed"],
        )
        model.beta_ = np.asarray(raw["beta"])
        model.elbo_trace_ = list(raw["elbo_trace"])
        model.converged_ = raw["converged"]
        model.n_iter_ = len(model.elbo_trace_)
        model.years_ = list(raw["years"])
        model.vocabulary_ = raw["vocabulary"]
        model.vocab_size_ = raw["vocab_size"]
        model.n_slices_ = raw["n_slices"]
        model.rng_algorithm_ = raw["rng"]
        return model


def fit_dtm(
    bow: BowCorpus,
    n_topics: int,
    chain_variance: float = 0.005,
    alpha: float = 0.1,
    max_em_iters: int = 20,
    seed: int = 0,
    vocabulary=None,
    years=None,
) -> DynamicTopicModel:
    """Convenience wrapper around :class:`DynamicTopicModel`."""
    model = DynamicTopicModel(
        n_topics=n_topics,
        chain_variance=chain_variance,
        alpha=alpha,
        max_em_iters=max_em_iters,
        seed=seed,
    )
    return model.fit(bow, vocabulary=vocabulary, years=years)

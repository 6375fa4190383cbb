"""Latent Dirichlet allocation fit by coordinate ascent or stochastic steps.

Generative model, for ``K`` topics over a vocabulary of ``V`` terms:

    beta_k  ~ Dirichlet_V(eta)            topic-word distributions
    theta_d ~ Dirichlet_K(alpha)          per-document proportions
    z_dn    ~ Categorical(theta_d)        token topic assignment
    w_dn    ~ Categorical(beta_{z_dn})    observed token

The mean-field family keeps a Dirichlet ``lambda_k`` per topic, a
Dirichlet ``gamma_d`` per document, and a categorical ``phi`` row per
(document, distinct term) pair.  Tokens of the same term in a document
share their assignment factor, weighted by the term count; this is
equivalent to per-token factors because tokens are exchangeable.

One coordinate sweep runs, per document, an inner phi/gamma loop to
convergence at the current topics, then refreshes every ``lambda_k`` from
the accumulated assignment statistics.  Stochastic fits replace the full
statistics with a rescaled minibatch estimate blended in at a
Robbins-Monro step size.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .condconj import step_size
from .engine import FitReport, MeanFieldState, TracePoint, VariationalModel
from .errors import ConfigError, DataFormatError, DomainError, NumericError
from .expfam import (
    ExpFamParam,
    _dirichlet_expected_log_rows,
    digamma,
    dirichlet_kl,
    log_sum_exp,
)

__all__ = [
    "INNER_TOL",
    "INNER_MAX_ITERS",
    "Corpus",
    "LdaConfig",
    "LdaState",
    "Lda",
    "read_uci",
    "write_uci",
    "simulate_corpus",
    "update_phi",
    "update_gamma",
    "update_lambda",
    "lda_cavi_fit",
    "lda_svi_fit",
]

# Inner-loop stopping rule: mean absolute change in gamma_d below this, or
# the iteration cap, whichever first.  The cap bounds per-document work so
# a stochastic step costs O(cap * N_d * K) at worst.
INNER_TOL = 1e-4
INNER_MAX_ITERS = 100


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Corpus:
    """Bag-of-words corpus: per document, distinct term ids and counts.

    ``docs`` is a tuple of ``(terms, counts)`` pairs where ``terms`` holds
    sorted distinct 0-based term ids and ``counts`` the positive
    multiplicity of each.  ``v`` is the vocabulary size.
    """

    docs: tuple
    v: int

    def __post_init__(self):
        if int(self.v) != self.v or self.v < 1:
            raise DomainError("vocabulary size must be a positive integer")
        object.__setattr__(self, "v", int(self.v))
        frozen_docs = []
        for terms, counts in self.docs:
            terms = _frozen(terms, dtype=int)
            counts = _frozen(counts)
            if terms.ndim != 1 or counts.shape != terms.shape:
                raise DomainError("each document needs matching term/count vectors")
            if terms.size and (terms.min() < 0 or terms.max() >= self.v):
                raise DomainError("term ids must lie in [0, vocabulary size)")
            if np.unique(terms).size != terms.size:
                raise DomainError("term ids must be distinct within a document")
            if np.any(counts < 1.0) or not np.all(np.isfinite(counts)):
                raise DomainError("term counts must be finite and >= 1")
            frozen_docs.append((terms, counts))
        object.__setattr__(self, "docs", tuple(frozen_docs))

    @property
    def d(self):
        return len(self.docs)

    def __len__(self):
        return len(self.docs)

    @property
    def total_tokens(self):
        return float(sum(counts.sum() for _, counts in self.docs))

    def doc_lengths(self):
        return np.array([counts.sum() for _, counts in self.docs])

    def subset(self, indices):
        return Corpus(tuple(self.docs[int(i)] for i in indices), self.v)


def read_uci(path):
    """Read a UCI bag-of-words file into a :class:`Corpus`.

    Format: three header lines holding the document count ``D``, the
    vocabulary size ``V``, and the number of triples ``NNZ``, followed by
    ``NNZ`` lines of 1-indexed ``docID termID count``.  Blank lines are
    ignored; duplicate (docID, termID) pairs are summed.

    Raises :class:`DataFormatError` carrying the offending 1-based line
    number on any malformed content.
    """
    with open(path, "r", encoding="utf-8") as handle:
        raw = handle.readlines()
    entries = [
        (lineno, line.split())
        for lineno, line in enumerate(raw, start=1)
        if line.strip()
    ]

    def parse_int(lineno, token, what):
        try:
            return int(token)
        except ValueError:
            raise DataFormatError(f"expected integer {what}, got {token!r}", line=lineno)

    if len(entries) < 3:
        raise DataFormatError(
            "expected three header lines (documents, vocabulary, triples)",
            line=len(raw) + 1,
        )
    header = []
    for (lineno, tokens), what in zip(
        entries[:3], ("document count", "vocabulary size", "triple count")
    ):
        if len(tokens) != 1:
            raise DataFormatError(f"expected a single {what}", line=lineno)
        value = parse_int(lineno, tokens[0], what)
        if value < 0:
            raise DataFormatError(f"{what} must be nonnegative", line=lineno)
        header.append(value)
    num_docs, vocab, nnz = header
    if vocab < 1:
        raise DataFormatError("vocabulary size must be >= 1", line=entries[1][0])

    body = entries[3:]
    if len(body) < nnz:
        raise DataFormatError(
            f"expected {nnz} triples, found {len(body)}", line=len(raw) + 1
        )
    if len(body) > nnz:
        raise DataFormatError("more triples than declared", line=body[nnz][0])

    cells = [dict() for _ in range(num_docs)]
    for lineno, tokens in body:
        if len(tokens) != 3:
            raise DataFormatError("expected `docID termID count`", line=lineno)
        doc = parse_int(lineno, tokens[0], "document id")
        term = parse_int(lineno, tokens[1], "term id")
        count = parse_int(lineno, tokens[2], "count")
        if not (1 <= doc <= num_docs):
            raise DataFormatError(
                f"document id {doc} outside 1..{num_docs}", line=lineno
            )
        if not (1 <= term <= vocab):
            raise DataFormatError(f"term id {term} outside 1..{vocab}", line=lineno)
        if count < 1:
            raise DataFormatError("count must be >= 1", line=lineno)
        cell = cells[doc - 1]
        cell[term - 1] = cell.get(term - 1, 0) + count

    docs = []
    for cell in cells:
        terms = np.array(sorted(cell), dtype=int)
        counts = np.array([cell[t] for t in sorted(cell)], dtype=float)
        docs.append((terms, counts))
    return Corpus(tuple(docs), vocab)


def write_uci(corpus, path):
    """Write a :class:`Corpus` as UCI bag-of-words text (integer counts)."""
    triples = []
    for d, (terms, counts) in enumerate(corpus.docs):
        for t, c in zip(terms, counts):
            if c != int(c):
                raise DomainError("file format stores integer counts only")
            triples.append(f"{d + 1} {int(t) + 1} {int(c)}\n")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"{len(corpus)}\n{corpus.v}\n{len(triples)}\n")
        handle.writelines(triples)


def simulate_corpus(
    k,
    num_docs,
    vocab_size,
    doc_length,
    seed,
    disjoint=False,
    alpha=0.5,
    eta=0.1,
):
    """Draw a corpus from the generative process.

    With ``disjoint=True`` the topics are constructed rather than drawn:
    topic ``j`` is uniform over its slice of a partition of the
    vocabulary, which makes recovery checkable without label alignment
    ambiguity beyond a permutation.

    Returns ``(corpus, truth)`` where ``truth`` holds the topic-word
    matrix and per-document proportions.
    """
    if k < 1 or num_docs < 1 or vocab_size < k or doc_length < 1:
        raise DomainError("need k >= 1, docs >= 1, vocab >= k, doc length >= 1")
    rng = np.random.default_rng(seed)
    if disjoint:
        topics = np.zeros((k, vocab_size))
        for j, block in enumerate(np.array_split(np.arange(vocab_size), k)):
            topics[j, block] = 1.0 / block.size
    else:
        topics = rng.dirichlet(np.full(vocab_size, eta), size=k)
    proportions = rng.dirichlet(np.full(k, alpha), size=num_docs)

    docs = []
    for d in range(num_docs):
        per_topic = rng.multinomial(doc_length, proportions[d])
        word_counts = np.zeros(vocab_size, dtype=int)
        for j in range(k):
            if per_topic[j]:
                word_counts += rng.multinomial(per_topic[j], topics[j])
        terms = np.flatnonzero(word_counts)
        docs.append((terms, word_counts[terms].astype(float)))
    corpus = Corpus(tuple(docs), vocab_size)
    truth = {"topics": topics, "doc_topic": proportions}
    return corpus, truth


@dataclass(frozen=True)
class LdaConfig:
    """Topic count and Dirichlet priors.

    ``alpha`` may be a scalar (symmetric proportions prior, broadcast to
    length ``k``) or a length-``k`` vector; ``eta`` is the scalar
    symmetric topic prior.
    """

    k: int
    eta: float = 0.1
    alpha: object = 0.1

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError("k", "must be an integer >= 1")
        object.__setattr__(self, "k", int(self.k))
        if not (self.eta > 0.0) or not math.isfinite(self.eta):
            raise ConfigError("eta", "must be finite and > 0")
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim == 0:
            alpha = np.full(self.k, float(alpha))
        if alpha.shape != (self.k,):
            raise ConfigError("alpha", "must be a scalar or length-k vector")
        if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0.0):
            raise ConfigError("alpha", "entries must be finite and > 0")
        object.__setattr__(self, "alpha", _frozen(alpha))


@dataclass(frozen=True)
class LdaState:
    """Variational parameters: topics ``lam`` (K, V), proportions
    ``gamma`` (D, K), and one assignment matrix per document in ``phi``
    (rows are distinct terms in corpus order)."""

    lam: np.ndarray
    gamma: np.ndarray
    phi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lam", _frozen(self.lam))
        object.__setattr__(self, "gamma", _frozen(self.gamma))
        object.__setattr__(self, "phi", tuple(_frozen(p) for p in self.phi))
        if self.lam.ndim != 2 or self.gamma.ndim != 2:
            raise DomainError("lam and gamma must be matrices")
        k = self.lam.shape[0]
        if self.gamma.shape != (len(self.phi), k):
            raise DomainError("gamma must have one row per document")
        if np.any(self.lam <= 0.0) or np.any(self.gamma <= 0.0):
            raise DomainError("Dirichlet parameters must be > 0")
        for p in self.phi:
            if p.ndim != 2 or p.shape[1] != k:
                raise DomainError("phi rows must have one column per topic")
            if p.size and (
                np.any(p < 0.0)
                or not np.allclose(p.sum(axis=1), 1.0, rtol=0.0, atol=1e-9)
            ):
                raise DomainError("phi rows must be probability vectors")


def _doc_phi(gamma_d, elog_beta_doc):
    """Assignment rows for one document, (T, K).

    ``elog_beta_doc`` is the (K, T) slice of E[log beta] at the document's
    terms.  The normalizer over topics also absorbs the psi(sum gamma)
    term, so it is left out of the logits.
    """
    logits = digamma(gamma_d)[:, None] + elog_beta_doc
    if logits.shape[1] == 0:
        return np.zeros((0, gamma_d.shape[0]))
    log_norm = log_sum_exp(logits, axis=0)
    return np.exp(logits - log_norm[None, :]).T


def _doc_inner(gamma_d, elog_beta_doc, counts, alpha, tol, max_iters):
    """Alternate phi and gamma for one document until gamma settles.

    Returns ``(gamma_d, phi)`` with ``gamma_d = alpha + phi^T counts``, so
    the component sum identity holds for the returned pair.
    """
    if counts.size == 0:
        return alpha.copy(), np.zeros((0, alpha.shape[0]))
    phi = _doc_phi(gamma_d, elog_beta_doc)
    gamma_d = alpha + phi.T @ counts
    for _ in range(max_iters - 1):
        phi = _doc_phi(gamma_d, elog_beta_doc)
        new_gamma = alpha + phi.T @ counts
        delta = float(np.abs(new_gamma - gamma_d).mean())
        gamma_d = new_gamma
        if delta < tol:
            break
    return gamma_d, phi


def update_phi(state, d, corpus, config):
    """Assignment rows for document ``d`` at the current gamma and lam.

    Row ``t`` for term ``w`` is proportional to
    ``exp(psi(gamma_dk) + psi(lam_kw) - psi(sum_v lam_kv))`` over topics.
    """
    del config
    terms, _ = corpus.docs[d]
    elog_beta = _dirichlet_expected_log_rows(state.lam)
    return _doc_phi(state.gamma[d], elog_beta[:, terms])


def update_gamma(state, d, corpus, config):
    """Proportion parameters for document ``d`` from its current phi:
    ``gamma_d = alpha + sum over distinct terms of count * phi row``."""
    _, counts = corpus.docs[d]
    return config.alpha + state.phi[d].T @ counts


def update_lambda(state, corpus, config):
    """Topic parameters from all assignment rows:
    ``lam_kv = eta + sum_d count_{dv} phi_{dv}^k``."""
    lam = np.full((config.k, corpus.v), float(config.eta))
    for (terms, counts), phi in zip(corpus.docs, state.phi):
        if terms.size:
            lam[:, terms] += (phi * counts[:, None]).T
    return lam


def lda_elbo(state, corpus, config):
    """Evidence lower bound, all constants kept.

    Token terms (likelihood, assignment cross-entropy, assignment entropy)
    accumulate per document; the theta and beta blocks enter as exact
    Dirichlet KL divergences to their priors.
    """
    elog_beta = _dirichlet_expected_log_rows(state.lam)
    elog_theta = _dirichlet_expected_log_rows(state.gamma)
    total = 0.0
    for d, (terms, counts) in enumerate(corpus.docs):
        if terms.size == 0:
            continue
        phi = state.phi[d]
        scores = elog_theta[d][None, :] + elog_beta[:, terms].T
        safe = np.where(phi > 0.0, phi, 1.0)
        total += float((counts[:, None] * phi * (scores - np.log(safe))).sum())
    for d in range(len(corpus)):
        total -= dirichlet_kl(state.gamma[d], config.alpha)
    eta_row = np.full(corpus.v, config.eta)
    for j in range(config.k):
        total -= dirichlet_kl(state.lam[j], eta_row)
    return total


class Lda(VariationalModel):
    """Engine adapter; the data container is a :class:`Corpus`."""

    name = "lda"

    def __init__(self, config):
        self.config = config

    def n_obs(self, data):
        return len(data)

    def take(self, data, indices):
        return data.subset(indices)

    def init_state(self, data, strategy, rng):
        """Topics start at the prior plus a small positive perturbation,
        Uniform(0,1) scaled by 0.01 * tokens / (K V) per entry; a fully
        symmetric start is a saddle point with all topics identical.  The
        perturbation scale is data-calibrated by construction, so both
        init strategies coincide."""
        del strategy
        k, v = self.config.k, data.v
        scale = 0.01 * data.total_tokens / (k * v)
        lam = self.config.eta + scale * rng.uniform(size=(k, v))
        lengths = data.doc_lengths()
        gamma = self.config.alpha[None, :] + (lengths / k)[:, None]
        phi = tuple(
            np.full((terms.size, k), 1.0 / k) for terms, _ in data.docs
        )
        return LdaState(lam, gamma, phi)

    def sweep(self, state, data):
        config = self.config
        elog_beta = _dirichlet_expected_log_rows(state.lam)
        lam = np.full((config.k, data.v), float(config.eta))
        gamma = np.empty_like(state.gamma)
        phis = []
        for d, (terms, counts) in enumerate(data.docs):
            gamma_d, phi = _doc_inner(
                state.gamma[d],
                elog_beta[:, terms],
                counts,
                config.alpha,
                INNER_TOL,
                INNER_MAX_ITERS,
            )
            gamma[d] = gamma_d
            phis.append(phi)
            if terms.size:
                lam[:, terms] += (phi * counts[:, None]).T
        return LdaState(lam, gamma, tuple(phis))

    def elbo(self, state, data):
        return lda_elbo(state, data, self.config)

    def log_predictive(self, state, point):
        """Total log predictive of one held-out document ``(terms,
        counts)``: fold the document in against frozen topics, then score
        each token under the mean topic mixture
        ``sum_k E[theta_k] E[beta_kv]``."""
        terms, counts = point
        terms = np.asarray(terms, dtype=int)
        counts = np.asarray(counts, dtype=float)
        config = self.config
        elog_beta = _dirichlet_expected_log_rows(state.lam)
        gamma_init = config.alpha + counts.sum() / config.k
        gamma_d, _ = _doc_inner(
            gamma_init,
            elog_beta[:, terms],
            counts,
            config.alpha,
            INNER_TOL,
            INNER_MAX_ITERS,
        )
        theta = gamma_d / gamma_d.sum()
        beta_mean = state.lam / state.lam.sum(axis=1, keepdims=True)
        token_probs = theta @ beta_mean[:, terms]
        return float(counts @ np.log(token_probs))

    def heldout_log_predictive(self, state, heldout):
        """Per-word average over the held-out documents (token-weighted)."""
        if len(heldout) == 0:
            raise DomainError("held-out set is empty")
        tokens = heldout.total_tokens
        if tokens == 0.0:
            raise DomainError("held-out documents contain no tokens")
        total = sum(self.log_predictive(state, doc) for doc in heldout.docs)
        return total / tokens

    def export_state(self, state):
        factors = []
        labels = []
        for j in range(state.lam.shape[0]):
            factors.append(ExpFamParam.dirichlet(state.lam[j]))
            labels.append(f"beta[{j}]")
        for d in range(state.gamma.shape[0]):
            factors.append(ExpFamParam.dirichlet(state.gamma[d]))
            labels.append(f"theta[{d}]")
        for d, phi in enumerate(state.phi):
            for t in range(phi.shape[0]):
                factors.append(ExpFamParam.categorical(phi[t]))
                labels.append(f"z[{d},{t}]")
        return MeanFieldState(tuple(factors), tuple(labels))

    def metadata(self):
        return {
            "k": self.config.k,
            "eta": self.config.eta,
            "alpha": self.config.alpha.tolist(),
        }

    def summary_dict(self, state, top=20):
        beta_mean = state.lam / state.lam.sum(axis=1, keepdims=True)
        top_terms = []
        top_probs = []
        for row in beta_mean:
            order = np.argsort(row)[::-1][: min(top, row.size)]
            top_terms.append(order.tolist())
            top_probs.append(row[order].tolist())
        return {"top_terms": top_terms, "top_term_probs": top_probs}


def lda_cavi_fit(corpus, config, fit_config):
    """Coordinate-ascent fit; returns a :class:`FitReport`."""
    from .engine import cavi_fit

    if len(corpus) == 0:
        raise DomainError("corpus has no documents")
    return cavi_fit(Lda(config), corpus, fit_config)


def lda_svi_fit(corpus, config, schedule, fit_config, batch_size=1):
    """Stochastic fit: one document minibatch per step.

    Each step folds the sampled documents in at the current topics
    (fresh gamma start, inner loop to convergence), forms the rescaled
    full-corpus estimate ``lam_hat = eta + (D / B) * batch statistics``,
    and blends ``lam = (1 - eps_t) lam + eps_t lam_hat``.  Dirichlet
    natural parameters are an affine shift of lam, so blending lam
    directly is the natural-coordinate step.

    The ELBO trace is recorded every ``elbo_every`` steps after a full
    local pass at the current topics; as with any stochastic ascent it is
    noisy rather than monotone.  Held-out monitoring is not traced;
    evaluate the returned state instead.  Deterministic per seed.
    """
    n = len(corpus)
    if n == 0:
        raise DomainError("corpus has no documents")
    if not (1 <= batch_size <= n):
        raise ConfigError("batch_size", "must lie in [1, number of documents]")
    model = Lda(config)
    rng = np.random.default_rng(fit_config.seed)
    state = model.init_state(corpus, "prior", rng)
    lam = np.array(state.lam)
    doc_scale = n / batch_size

    elbo_trace = []
    prev = None
    converged = False
    iterations = 0
    start = time.perf_counter()

    def local_pass(lam_now):
        elog_beta = _dirichlet_expected_log_rows(lam_now)
        gamma = np.empty((n, config.k))
        phis = []
        for d, (terms, counts) in enumerate(corpus.docs):
            gamma_init = config.alpha + counts.sum() / config.k
            gamma_d, phi = _doc_inner(
                gamma_init,
                elog_beta[:, terms],
                counts,
                config.alpha,
                INNER_TOL,
                INNER_MAX_ITERS,
            )
            gamma[d] = gamma_d
            phis.append(phi)
        return LdaState(lam_now, gamma, tuple(phis))

    for t in range(1, fit_config.max_iters + 1):
        # sorted for a fixed reduction order; sampling stays uniform
        batch = np.sort(rng.choice(n, size=batch_size, replace=False))
        elog_beta = _dirichlet_expected_log_rows(lam)
        stats = np.zeros_like(lam)
        for d in batch:
            terms, counts = corpus.docs[d]
            gamma_init = config.alpha + counts.sum() / config.k
            _, phi = _doc_inner(
                gamma_init,
                elog_beta[:, terms],
                counts,
                config.alpha,
                INNER_TOL,
                INNER_MAX_ITERS,
            )
            if terms.size:
                stats[:, terms] += (phi * counts[:, None]).T
        lam_hat = config.eta + doc_scale * stats
        eps = step_size(schedule, t)
        lam = (1.0 - eps) * lam + eps * lam_hat
        if not np.all(np.isfinite(lam)):
            raise NumericError("topic parameters are not finite", iteration=t)
        iterations = t
        if t % fit_config.elbo_every != 0 and t != fit_config.max_iters:
            continue
        snapshot = local_pass(lam)
        elbo = lda_elbo(snapshot, corpus, config)
        if not np.isfinite(elbo):
            raise NumericError("ELBO is not finite", iteration=t)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        elbo_trace.append(TracePoint(t, float(elbo), elapsed_ms))
        if prev is not None and abs(elbo - prev) / (1.0 + abs(elbo)) < fit_config.tol:
            converged = True
            break
        prev = elbo

    final = local_pass(lam)
    return FitReport(
        final_state=model.export_state(final),
        model_state=final,
        elbo_trace=elbo_trace,
        heldout_trace=[],
        converged=converged,
        iterations_run=iterations,
        metadata={
            "algorithm": "svi",
            "seed": fit_config.seed,
            "batch_size": batch_size,
            "kappa": schedule.kappa,
            "delay": schedule.delay,
            "scale": schedule.scale,
            **model.metadata(),
        },
    )

// Exact (non-neural) decision oracles: Gaussian conjugate posterior,
// Dirichlet posterior Bayes action, discrete ERM action, and the worst case
// over a Kullback-Leibler ambiguity ball together with the robust action.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "decisions.hpp"

namespace e2eso::solvers {

/// Probability vector over the demand levels 1..d (index j holds level j+1).
struct DiscreteDist {
    Vec probs;

    static DiscreteDist validated(Vec probs) {
        if (probs.empty())
            throw DomainError("distribution: empty support");
        double total = 0.0;
        for (double p : probs) {
            if (!(p >= 0.0))
                throw DomainError("distribution: negative probability");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw DomainError("distribution: probabilities sum to " + std::to_string(total));
        return DiscreteDist{std::move(probs)};
    }

    /// Empirical distribution of integer levels in 1..d.
    static DiscreteDist empirical(std::span<const int> levels, int d) {
        if (levels.empty())
            throw DomainError("empirical distribution: no samples");
        Vec probs(static_cast<std::size_t>(d), 0.0);
        const double w = 1.0 / static_cast<double>(levels.size());
        for (int y : levels) {
            if (y < 1 || y > d)
                throw DomainError("empirical distribution: level " + std::to_string(y) +
                                  " outside 1.." + std::to_string(d));
            probs[static_cast<std::size_t>(y - 1)] += w;
        }
        return DiscreteDist{std::move(probs)};
    }
};

// ---------------------------------------------------------------------------
// Conjugate posteriors
// ---------------------------------------------------------------------------

/// Z ~ N(mean_prior, var_prior), observations i.i.d. N(Z, var_obs), and every
/// observation vector carries num_samples draws.
struct GaussianHierarchy {
    double mean_prior = 2.0;
    double var_prior = 0.25;
    double var_obs = 4.0;
    int num_samples = 20;
};

inline void validate(const GaussianHierarchy& h) {
    if (!(h.var_prior > 0.0))
        throw ConfigError("gaussian hierarchy: prior variance must be positive");
    if (!(h.var_obs > 0.0))
        throw ConfigError("gaussian hierarchy: observation variance must be positive");
    if (h.num_samples < 1)
        throw ConfigError("gaussian hierarchy: need at least one sample per observation");
}

/// Posterior predictive moments of the next draw Y given the observed vector.
struct GaussianPosterior {
    double mean = 0.0;
    double variance = 0.0;
};

/**
 * @brief Conjugate posterior for the mean of a Gaussian with known variance.
 *
 * mean = (mu/var_prior + sum(samples)/var_obs) / (1/var_prior + N/var_obs),
 * variance = var_obs + 1 / (1/var_prior + N/var_obs); the variance is the
 * predictive variance of a fresh draw (observation noise plus posterior
 * uncertainty about Z). The sum accumulates left to right so the result is a
 * reproducible function of the sample order.
 */
inline GaussianPosterior gaussian_posterior(const GaussianHierarchy& h,
                                            std::span<const double> samples) {
    validate(h);
    if (samples.size() != static_cast<std::size_t>(h.num_samples))
        throw DomainError("gaussian_posterior: expected " + std::to_string(h.num_samples) +
                          " samples, got " + std::to_string(samples.size()));
    double total = 0.0;
    for (double v : samples)
        total += v;
    const double precision = 1.0 / h.var_prior + static_cast<double>(h.num_samples) / h.var_obs;
    GaussianPosterior out;
    out.mean = (h.mean_prior / h.var_prior + total / h.var_obs) / precision;
    out.variance = h.var_obs + 1.0 / precision;
    return out;
}

/// Dirichlet prior over the probabilities of d categorical levels.
struct DirichletPrior {
    Vec alpha;

    static DirichletPrior uniform(int d) {
        if (d < 1)
            throw ConfigError("dirichlet prior: need at least one level");
        return DirichletPrior{Vec(static_cast<std::size_t>(d), 1.0)};
    }
};

inline void validate(const DirichletPrior& prior) {
    if (prior.alpha.empty())
        throw ConfigError("dirichlet prior: empty parameter vector");
    for (double a : prior.alpha)
        if (!(a > 0.0))
            throw ConfigError("dirichlet prior: parameters must be positive");
}

/**
 * @brief Posterior mean of the level probabilities after observing counts.
 *
 * The Dirichlet prior is conjugate to the categorical likelihood, so the
 * posterior is Dirichlet(alpha + counts) with mean
 * (alpha_j + n_j) / (sum(alpha) + sum(n)).
 */
inline DiscreteDist dirichlet_posterior_mean(const DirichletPrior& prior,
                                             std::span<const int> counts) {
    validate(prior);
    if (counts.size() != prior.alpha.size())
        throw DomainError("dirichlet_posterior_mean: counts length does not match prior");
    double total = 0.0;
    for (double a : prior.alpha)
        total += a;
    for (int n : counts) {
        if (n < 0)
            throw DomainError("dirichlet_posterior_mean: negative count");
        total += static_cast<double>(n);
    }
    Vec probs(prior.alpha.size());
    for (std::size_t j = 0; j < probs.size(); ++j)
        probs[j] = (prior.alpha[j] + static_cast<double>(counts[j])) / total;
    return DiscreteDist{std::move(probs)};
}

// ---------------------------------------------------------------------------
// Exact newsvendor actions
// ---------------------------------------------------------------------------

/// Minimizing action plus the expected loss of every candidate order level.
struct ActionChoice {
    int action = 1;                 // level in 1..d
    Vec values;                     // values[a-1] = expected loss of ordering a
};

/**
 * @brief Order level minimizing expected newsvendor loss under dist.
 *
 * values[a-1] = sum_j dist_j * loss(j, a); ties resolve to the smaller order.
 */
inline ActionChoice expected_loss_action(const DiscreteDist& dist,
                                         const decisions::NewsvendorParams& params) {
    if (dist.probs.size() != static_cast<std::size_t>(params.levels))
        throw DomainError("expected_loss_action: support does not match demand levels");
    ActionChoice out;
    out.values.resize(dist.probs.size());
    for (int a = 1; a <= params.levels; ++a) {
        double value = 0.0;
        for (int j = 1; j <= params.levels; ++j)
            value += dist.probs[static_cast<std::size_t>(j - 1)] *
                     decisions::newsvendor_loss(params, j, a);
        out.values[static_cast<std::size_t>(a - 1)] = value;
        if (a == 1 || value < out.values[static_cast<std::size_t>(out.action - 1)])
            out.action = a;
    }
    return out;
}

/// ERM order level: expected_loss_action under the empirical distribution.
inline int erm_action(std::span<const int> samples, const decisions::NewsvendorParams& params) {
    return expected_loss_action(DiscreteDist::empirical(samples, params.levels), params).action;
}

// ---------------------------------------------------------------------------
// KL-ambiguity worst case
// ---------------------------------------------------------------------------

/// Worst-case distribution over the KL ball with its diagnostics. The dual
/// value certifies optimality: dual_value - value is the (nonnegative)
/// duality gap.
struct KlWorstCase {
    DiscreteDist dist;
    double value = 0.0;
    double lambda = 0.0;      // optimal tilt temperature; +inf when eps = 0
    double kl = 0.0;          // KL(dist || p_hat) actually attained
    double dual_value = 0.0;
};

/**
 * @brief Maximize E_Q[loss] over {Q : KL(Q||p_hat) <= eps, Q << p_hat}.
 *
 * The maximizer is the exponential tilt q_i proportional to
 * p_i * exp(loss_i / lambda), with lambda >= 0 chosen so the KL constraint
 * binds; when eps reaches KL_max = -log(total mass on argmax losses), the
 * tilt degenerates to p_hat conditioned on the argmax-loss set and the value
 * is the maximal loss on the support of p_hat.
 *
 * lambda is located by bisecting eps - KL(q_lambda||p_hat) (the sign of the
 * dual derivative) on a geometrically grown bracket; losses are shifted by
 * their maximum before exponentiation so small lambda cannot overflow.
 */
inline KlWorstCase kl_worst_case(const DiscreteDist& p_hat, std::span<const double> losses,
                                 double eps) {
    if (losses.size() != p_hat.probs.size())
        throw DomainError("kl_worst_case: loss vector does not match the support");
    if (!(eps >= 0.0))
        throw DomainError("kl_worst_case: radius must be nonnegative");
    const std::size_t n = p_hat.probs.size();
    for (std::size_t i = 0; i < n; ++i)
        if (p_hat.probs[i] > 0.0 && !std::isfinite(losses[i]))
            throw DomainError("kl_worst_case: non-finite loss on the support");

    KlWorstCase out;
    if (eps == 0.0) {
        out.dist = p_hat;
        double value = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            value += p_hat.probs[i] * losses[i];
        out.value = value;
        out.lambda = std::numeric_limits<double>::infinity();
        out.kl = 0.0;
        out.dual_value = value;
        return out;
    }

    // Maximal loss on the support and the mass it carries.
    double loss_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        if (p_hat.probs[i] > 0.0)
            loss_max = std::max(loss_max, losses[i]);
    double argmax_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (p_hat.probs[i] > 0.0 && losses[i] == loss_max)
            argmax_mass += p_hat.probs[i];
    const double kl_cap = -std::log(argmax_mass);

    if (eps >= kl_cap) {
        // Radius large enough to reach the max-loss-conditional distribution.
        out.dist.probs.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            if (p_hat.probs[i] > 0.0 && losses[i] == loss_max)
                out.dist.probs[i] = p_hat.probs[i] / argmax_mass;
        out.value = loss_max;
        out.lambda = 0.0;
        out.kl = kl_cap;
        out.dual_value = loss_max;
        return out;
    }

    // Tilt at temperature lambda using max-shifted losses; returns the KL
    // divergence and fills q. All quantities are exact in the shifted frame:
    // KL = E_q[shifted]/lambda - log(normalizer).
    Vec q(n, 0.0);
    double log_norm = 0.0;
    auto tilt_kl = [&](double lambda) {
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (p_hat.probs[i] > 0.0)
                q[i] = p_hat.probs[i] * std::exp((losses[i] - loss_max) / lambda);
            else
                q[i] = 0.0;
            norm += q[i];
        }
        double mean_shifted = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            q[i] /= norm;
            mean_shifted += q[i] * (losses[i] - loss_max);
        }
        log_norm = std::log(norm);
        return std::max(mean_shifted / lambda - log_norm, 0.0);
    };

    double lo = 1e-8;
    double lambda = lo;
    double kl = tilt_kl(lo);
    if (kl > eps) {
        // Grow the bracket until the constraint goes slack, then bisect the
        // dual derivative eps - KL(lambda) geometrically.
        double hi = 1.0;
        for (int grow = 0; grow < 200 && tilt_kl(hi) >= eps; ++grow)
            hi *= 2.0;
        for (int iter = 0; iter < 200; ++iter) {
            lambda = std::sqrt(lo * hi);
            kl = tilt_kl(lambda);
            const double residual = eps - kl;
            if (std::abs(residual) <= 1e-12 && lambda * std::abs(residual) <= 1e-9)
                break;
            (kl > eps ? lo : hi) = lambda;
        }
        kl = tilt_kl(lambda);
    }
    // else: losses are so nearly flat that even the smallest temperature in
    // the bracket stays inside the ball; the boundary solution lies below
    // lo and the value difference is below measurement tolerance.

    out.dist = DiscreteDist{q};
    double value = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        value += q[i] * losses[i];
    out.value = value;
    out.lambda = lambda;
    out.kl = kl;
    out.dual_value = lambda * eps + lambda * log_norm + loss_max;
    return out;
}

/**
 * @brief Distributionally robust order level.
 *
 * Minimizes the KL worst-case expected loss over the order levels; at
 * eps = 0 the worst case is the empirical mean, so this coincides exactly
 * with erm_action (identical arithmetic, not just equal values).
 */
inline int dro_action(std::span<const int> samples, const decisions::NewsvendorParams& params,
                      double eps) {
    const DiscreteDist emp = DiscreteDist::empirical(samples, params.levels);
    int best = 1;
    double best_value = 0.0;
    Vec losses(static_cast<std::size_t>(params.levels));
    for (int a = 1; a <= params.levels; ++a) {
        for (int j = 1; j <= params.levels; ++j)
            losses[static_cast<std::size_t>(j - 1)] = decisions::newsvendor_loss(params, j, a);
        const double value = kl_worst_case(emp, losses, eps).value;
        if (a == 1 || value < best_value) {
            best = a;
            best_value = value;
        }
    }
    return best;
}

}  // namespace e2eso::solvers

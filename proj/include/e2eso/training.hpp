#pragma once

#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include <e2eso/common.hpp>
#include <e2eso/decisions.hpp>
#include <e2eso/nnet.hpp>
#include <e2eso/rng.hpp>
#include <e2eso/solvers.hpp>

namespace e2eso::training {

/**
 * The three end-to-end training loops for neural decision maps:
 *
 *  - train_bayes: stochastic gradients of the expected loss over (X, Y)
 *    pairs, one outcome per sample.
 *  - train_erm:   stochastic gradients of the per-observation empirical
 *    average loss over the outcomes contained in the observation itself.
 *  - train_dro:   per observation, the worst-case distribution over the
 *    observed outcomes within a KL ball is computed at the current
 *    parameters and then frozen while the gradient is taken, so the
 *    gradient is the worst-case-weighted sum of per-outcome gradients.
 *
 * All three share one inner accumulation routine that differs only in the
 * outcome weights, so the degenerate identities (single-outcome ERM equals
 * the paired trainer; zero-radius DRO equals ERM) hold bit-for-bit.
 */

// ----------------------------------------------------------------------
// Decision map: neural feature extractor composed with a prescriptor.
// ----------------------------------------------------------------------

struct DecisionMap {
    nnet::Mlp extractor;
    decisions::Prescriptor prescriptor;

    DecisionMap(nnet::Mlp net, decisions::Prescriptor pres)
        : extractor(std::move(net)), prescriptor(std::move(pres)) {
        if (extractor.output_dim() != prescriptor.input_dim())
            throw ConfigError("DecisionMap: extractor output dim " +
                              std::to_string(extractor.output_dim()) +
                              " does not match prescriptor input dim " +
                              std::to_string(prescriptor.input_dim()));
    }

    /// Evaluates the full map: always lands in the prescriptor's action set.
    Vec decide(std::span<const double> x) const {
        const Vec r = nnet::forward(extractor, x);
        return decisions::apply_prescriptor(prescriptor, r).action;
    }
};

// ----------------------------------------------------------------------
// Scenario interfaces. Paired scenarios yield (observation, outcome);
// observation-only scenarios yield the observation and the outcome pool
// it contains, and expose no outcome stream at all, so a trainer written
// against OutcomeScenario cannot read Y even by accident.
// ----------------------------------------------------------------------

struct PairSample {
    Vec x;     ///< network input features
    double y;  ///< realized outcome
};

struct OutcomeSample {
    Vec x;         ///< network input features
    Vec outcomes;  ///< the outcome pool carried by the observation itself
};

template <typename S>
concept PairScenario = requires(const S& s, std::uint64_t k) {
    { s.draw_pair(k) } -> std::convertible_to<PairSample>;
};

template <typename S>
concept OutcomeScenario = requires(const S& s, std::uint64_t k) {
    { s.draw_outcomes(k) } -> std::convertible_to<OutcomeSample>;
};

template <typename F>
concept LossFunction = requires(F f, double y, std::span<const double> action) {
    { f(y, action) } -> std::convertible_to<decisions::LossGrad>;
};

// ----------------------------------------------------------------------
// Per-sample evaluation.
// ----------------------------------------------------------------------

struct StepEval {
    double value = 0.0;
    nnet::Gradients grads;
};

namespace detail {

/**
 * Shared inner routine: one forward pass, per-outcome losses at the
 * resulting action, a weighted reduction, and one backward pass through
 * prescriptor Jacobian and network. Weights must sum to 1 for the value
 * to be an expectation; the routine does not renormalize.
 */
template <LossFunction LossFn>
StepEval accumulate_outcomes(const DecisionMap& map, std::span<const double> x,
                             std::span<const double> outcomes,
                             std::span<const double> weights, LossFn&& loss) {
    if (outcomes.size() != weights.size())
        throw ContractError("accumulate_outcomes: outcome/weight length mismatch");
    if (outcomes.empty())
        throw DomainError("accumulate_outcomes: empty outcome pool");

    nnet::ForwardTape tape;
    const Vec r = nnet::forward(map.extractor, x, &tape);
    const decisions::PrescriptorResult pres =
        decisions::apply_prescriptor(map.prescriptor, r);

    StepEval out;
    Vec dl_da(pres.action.size(), 0.0);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const decisions::LossGrad lg = loss(outcomes[i], pres.action);
        if (lg.grad.size() != dl_da.size())
            throw ContractError("accumulate_outcomes: loss gradient dim mismatch");
        out.value += weights[i] * lg.value;
        for (std::size_t j = 0; j < dl_da.size(); ++j)
            dl_da[j] += weights[i] * lg.grad[j];
    }
    Vec dl_dr(r.size(), 0.0);
    matvec_transpose(pres.jacobian, dl_da, dl_dr);
    out.grads = nnet::backward(map.extractor, tape, dl_dr);
    return out;
}

}  // namespace detail

/// Expected loss and parameter gradient under fixed outcome weights.
template <LossFunction LossFn>
StepEval evaluate_weighted(const DecisionMap& map, std::span<const double> x,
                           std::span<const double> outcomes,
                           std::span<const double> weights, LossFn&& loss) {
    return detail::accumulate_outcomes(map, x, outcomes, weights,
                                       std::forward<LossFn>(loss));
}

/// Empirical average over the outcome pool: ERM's per-observation objective.
template <LossFunction LossFn>
StepEval evaluate_empirical(const DecisionMap& map, std::span<const double> x,
                            std::span<const double> outcomes, LossFn&& loss) {
    const Vec weights(outcomes.size(), 1.0 / static_cast<double>(outcomes.size()));
    return detail::accumulate_outcomes(map, x, outcomes, weights,
                                       std::forward<LossFn>(loss));
}

/**
 * Worst-case expected loss over the KL ball of radius eps around the
 * empirical distribution on the outcome pool, with the gradient taken at
 * the frozen worst case: the inner maximizer is computed from the losses
 * at the current parameters, then held fixed while backpropagating, which
 * is exactly the gradient of the robust objective wherever the worst case
 * is unique. At eps = 0 the worst case is the empirical distribution
 * itself and this reduces to evaluate_empirical bit-for-bit.
 */
template <LossFunction LossFn>
StepEval evaluate_robust(const DecisionMap& map, std::span<const double> x,
                         std::span<const double> outcomes, double eps, LossFn&& loss) {
    if (outcomes.empty())
        throw DomainError("evaluate_robust: empty outcome pool");
    nnet::ForwardTape tape;
    const Vec r = nnet::forward(map.extractor, x, &tape);
    const decisions::PrescriptorResult pres =
        decisions::apply_prescriptor(map.prescriptor, r);

    std::vector<decisions::LossGrad> per_outcome;
    per_outcome.reserve(outcomes.size());
    Vec losses(outcomes.size());
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        per_outcome.push_back(loss(outcomes[i], pres.action));
        if (per_outcome.back().grad.size() != pres.action.size())
            throw ContractError("evaluate_robust: loss gradient dim mismatch");
        losses[i] = per_outcome.back().value;
    }
    const solvers::DiscreteDist empirical{
        Vec(outcomes.size(), 1.0 / static_cast<double>(outcomes.size()))};
    const solvers::KlWorstCase worst = solvers::kl_worst_case(empirical, losses, eps);

    StepEval out;
    Vec dl_da(pres.action.size(), 0.0);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        out.value += worst.dist.probs[i] * per_outcome[i].value;
        for (std::size_t j = 0; j < dl_da.size(); ++j)
            dl_da[j] += worst.dist.probs[i] * per_outcome[i].grad[j];
    }
    Vec dl_dr(r.size(), 0.0);
    matvec_transpose(pres.jacobian, dl_da, dl_dr);
    out.grads = nnet::backward(map.extractor, tape, dl_dr);
    return out;
}

// ----------------------------------------------------------------------
// Training loop.
// ----------------------------------------------------------------------

struct TrainOptions {
    std::uint64_t total_samples = 1;  ///< K: scenario draws consumed overall
    std::size_t batch = 1;            ///< fresh draws averaged per update
    std::size_t iterate_target = 1000;  ///< stored-snapshot budget
    std::uint64_t selection_seed = 0;   ///< for the random-iterate draw
    double divergence_factor = 1e6;

    void validate() const {
        if (total_samples < 1)
            throw ConfigError("TrainOptions: need at least one sample");
        if (batch < 1)
            throw ConfigError("TrainOptions: batch must be positive");
        if (iterate_target < 1)
            throw ConfigError("TrainOptions: iterate target must be positive");
        if (!(divergence_factor > 0.0))
            throw ConfigError("TrainOptions: divergence factor must be positive");
    }
};

struct StoredIterate {
    std::uint64_t iteration = 0;  ///< 1-based update count that produced it
    double step_size = 0.0;       ///< eta_k used in that update
    nnet::Mlp net;
};

struct TrainReport {
    Vec loss_curve;       ///< batch objective per iteration, before the update
    Vec grad_norm_curve;  ///< Euclidean norm of the averaged batch gradient
    std::vector<StoredIterate> iterates;
    Vec selection_probs;          ///< over iterates, proportional to 1/eta
    std::size_t selected_index = 0;  ///< the random iterate, drawn at the end
    nnet::Mlp final_net;
    std::uint64_t selection_seed = 0;
    std::uint64_t iterations = 0;
    std::uint64_t samples_consumed = 0;
    double wall_clock_seconds = 0.0;

    const nnet::Mlp& selected_net() const {
        if (iterates.empty())
            throw DomainError("TrainReport: no stored iterates");
        return iterates[selected_index].net;
    }
};

/// Selection probabilities proportional to the reciprocal step sizes of
/// the stored iterates (constant steps select uniformly).
inline Vec iterate_selection_probs(const std::vector<StoredIterate>& iterates) {
    if (iterates.empty())
        throw DomainError("iterate_selection_probs: no stored iterates");
    Vec probs(iterates.size());
    double total = 0.0;
    for (std::size_t i = 0; i < iterates.size(); ++i) {
        if (!(iterates[i].step_size > 0.0))
            throw DomainError("iterate_selection_probs: nonpositive step size");
        probs[i] = 1.0 / iterates[i].step_size;
        total += probs[i];
    }
    for (double& p : probs)
        p /= total;
    return probs;
}

/// Draws the index of the randomly selected iterate; deterministic in the
/// seed, so reruns pick the same iterate.
inline std::size_t select_iterate_index(const std::vector<StoredIterate>& iterates,
                                        std::uint64_t seed) {
    constexpr std::uint64_t kSelectionStream = 7;
    const Vec probs = iterate_selection_probs(iterates);
    return Rng::at(seed, kSelectionStream, 0).categorical(probs);
}

inline const nnet::Mlp& select_iterate(const TrainReport& report, std::uint64_t seed) {
    if (report.iterates.empty())
        throw DomainError("select_iterate: no stored iterates");
    return report.iterates[select_iterate_index(report.iterates, seed)].net;
}

namespace detail {

/**
 * The shared loop: per iteration, average the per-sample evaluations of
 * `batch` fresh scenario draws, guard against divergence, take one
 * optimizer step, and snapshot at the storage stride. The sample
 * evaluator maps a draw index to a StepEval at the current parameters.
 */
template <typename SampleEval>
TrainReport run_loop(DecisionMap& map, SampleEval&& eval_sample, nnet::OptimState opt,
                     const TrainOptions& options) {
    options.validate();
    const auto start = std::chrono::steady_clock::now();

    const std::uint64_t iterations =
        (options.total_samples + options.batch - 1) / options.batch;
    const std::uint64_t stride =
        std::max<std::uint64_t>(1, (iterations + options.iterate_target - 1) /
                                       options.iterate_target);

    TrainReport report;
    report.selection_seed = options.selection_seed;
    report.iterations = iterations;
    report.loss_curve.reserve(iterations);
    report.grad_norm_curve.reserve(iterations);

    nnet::Gradients batch_grads = nnet::Gradients::zeros_like(map.extractor);
    const double inv_batch = 1.0 / static_cast<double>(options.batch);
    double initial_scale = 0.0;

    std::uint64_t sample_index = 0;
    for (std::uint64_t k = 1; k <= iterations; ++k) {
        batch_grads.zero();
        double batch_value = 0.0;
        for (std::size_t b = 0; b < options.batch; ++b, ++sample_index) {
            StepEval eval = eval_sample(sample_index);
            batch_value += inv_batch * eval.value;
            batch_grads.accumulate(eval.grads, inv_batch);
        }
        report.samples_consumed = sample_index;

        if (k == 1)
            initial_scale = std::max(std::abs(batch_value), 1.0);
        if (!std::isfinite(batch_value) || !batch_grads.finite())
            throw DivergenceError("training diverged: non-finite loss or gradient at iteration " +
                                      std::to_string(k),
                                  static_cast<std::size_t>(k));
        if (std::abs(batch_value) > options.divergence_factor * initial_scale)
            throw DivergenceError("training diverged: loss exceeded " +
                                      std::to_string(options.divergence_factor) +
                                      " times its initial scale at iteration " +
                                      std::to_string(k),
                                  static_cast<std::size_t>(k));

        report.loss_curve.push_back(batch_value);
        report.grad_norm_curve.push_back(std::sqrt(batch_grads.squared_norm()));

        const double eta = nnet::next_step_size(opt);
        nnet::step(map.extractor, opt, batch_grads);
        if (k % stride == 0 || k == iterations)
            report.iterates.push_back({k, eta, map.extractor});
    }

    report.final_net = map.extractor;
    report.selection_probs = iterate_selection_probs(report.iterates);
    report.selected_index = select_iterate_index(report.iterates, options.selection_seed);
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace detail

/**
 * Trains on (observation, outcome) pairs: each draw contributes the
 * gradient of the loss at its single realized outcome.
 */
template <PairScenario S, LossFunction LossFn>
TrainReport train_bayes(DecisionMap& map, const S& scenario, LossFn loss,
                        nnet::OptimState opt, const TrainOptions& options) {
    const Vec unit_weight{1.0};
    return detail::run_loop(
        map,
        [&](std::uint64_t k) {
            const PairSample s = scenario.draw_pair(k);
            const Vec outcome{s.y};
            return detail::accumulate_outcomes(map, s.x, outcome, unit_weight, loss);
        },
        opt, options);
}

/**
 * Trains on observations alone: each draw contributes the gradient of the
 * empirical average loss over the outcome pool the observation carries.
 * The scenario type exposes no outcome stream, so the trainer cannot
 * consume one even in principle.
 */
template <OutcomeScenario S, LossFunction LossFn>
TrainReport train_erm(DecisionMap& map, const S& scenario, LossFn loss,
                      nnet::OptimState opt, const TrainOptions& options) {
    return detail::run_loop(
        map,
        [&](std::uint64_t k) {
            const OutcomeSample s = scenario.draw_outcomes(k);
            const Vec weights(s.outcomes.size(),
                              1.0 / static_cast<double>(s.outcomes.size()));
            return detail::accumulate_outcomes(map, s.x, s.outcomes, weights, loss);
        },
        opt, options);
}

/**
 * Distributionally robust training: per observation, the worst-case
 * distribution within the KL ball of radius eps around the empirical
 * distribution on the outcome pool is computed at the current parameters
 * and frozen for the gradient.
 */
template <OutcomeScenario S, LossFunction LossFn>
TrainReport train_dro(DecisionMap& map, const S& scenario, LossFn loss, double eps,
                      nnet::OptimState opt, const TrainOptions& options) {
    if (!(eps >= 0.0))
        throw ConfigError("train_dro: ambiguity radius must be nonnegative");
    return detail::run_loop(
        map,
        [&](std::uint64_t k) {
            const OutcomeSample s = scenario.draw_outcomes(k);
            return evaluate_robust(map, s.x, s.outcomes, eps, loss);
        },
        opt, options);
}

// ----------------------------------------------------------------------
// Lookup-table diagnostic: on a finite observation set, an overwide map
// should reach the exact per-observation optimum.
// ----------------------------------------------------------------------

struct LookupCheckReport {
    Vec deviations;  ///< per observation, max-norm gap to the exact action
    double max_deviation = 0.0;
    TrainReport train;
};

/**
 * Trains a fresh one-hidden-layer map of the given width on draws that
 * pick one of the finite observations uniformly and sample an outcome
 * from its conditional law, then measures how far the trained decisions
 * are from the supplied exact posterior actions.
 *
 * @param cells          the finite observation list (all the same dim).
 * @param outcome        pure sampler: (cell index, draw index) -> outcome.
 * @param exact_actions  per cell, the known optimal action.
 */
template <typename OutcomeFn, LossFunction LossFn>
LookupCheckReport lookup_table_check(const std::vector<Vec>& cells, OutcomeFn&& outcome,
                                     const std::vector<Vec>& exact_actions, LossFn loss,
                                     std::size_t width, nnet::OptimState opt,
                                     const TrainOptions& options, std::uint64_t seed) {
    if (cells.empty() || cells.size() != exact_actions.size())
        throw ConfigError("lookup_table_check: cells and exact actions must align");
    if (cells.size() > 8)
        throw ConfigError("lookup_table_check: meant for small finite observation sets");
    const std::size_t in_dim = cells[0].size();
    const std::size_t out_dim = exact_actions[0].size();

    struct FiniteScenario {
        const std::vector<Vec>* cells;
        std::remove_reference_t<OutcomeFn>* outcome;
        std::uint64_t seed;

        PairSample draw_pair(std::uint64_t k) const {
            const std::size_t i = Rng::at(seed, 0, k).uniform_index(cells->size());
            return PairSample{(*cells)[i], (*outcome)(i, k)};
        }
    };

    DecisionMap map(nnet::init_weights({in_dim, width, out_dim},
                                       {nnet::Activation::relu, nnet::Activation::linear},
                                       seed),
                    decisions::Prescriptor::identity(out_dim));
    FiniteScenario scenario{&cells, std::addressof(outcome), seed};

    LookupCheckReport report;
    report.train = train_bayes(map, scenario, loss, opt, options);
    report.deviations.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const Vec a = map.decide(cells[i]);
        double dev = 0.0;
        for (std::size_t j = 0; j < out_dim; ++j)
            dev = std::max(dev, std::abs(a[j] - exact_actions[i][j]));
        report.deviations.push_back(dev);
        report.max_deviation = std::max(report.max_deviation, dev);
    }
    return report;
}

// ----------------------------------------------------------------------
// Report serialization.
// ----------------------------------------------------------------------

/// JSON view of a report: curves, iterate metadata, and the final network
/// as a checkpoint object. Stored iterate networks are summarized by
/// iteration and step size only, to keep reports compact.
inline nlohmann::json train_report_json(const TrainReport& r) {
    nlohmann::json iterates = nlohmann::json::array();
    for (const StoredIterate& it : r.iterates)
        iterates.push_back({{"iteration", it.iteration}, {"step_size", it.step_size}});
    return {
        {"format", "e2eso-train-report-v1"},
        {"iterations", r.iterations},
        {"samples_consumed", r.samples_consumed},
        {"selection_seed", r.selection_seed},
        {"selected_index", r.selected_index},
        {"selection_probs", r.selection_probs},
        {"loss_curve", r.loss_curve},
        {"grad_norm_curve", r.grad_norm_curve},
        {"iterates", std::move(iterates)},
        {"wall_clock_seconds", r.wall_clock_seconds},
        {"final_net", nnet::checkpoint_json(r.final_net)},
    };
}

/// Writes the loss and gradient-norm curves as a plot-ready CSV.
inline void write_loss_curve_csv(const TrainReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open loss curve file for writing: " + path);
    out << "iteration,loss,grad_norm\n";
    out.precision(17);
    for (std::size_t k = 0; k < r.loss_curve.size(); ++k)
        out << (k + 1) << ',' << r.loss_curve[k] << ',' << r.grad_norm_curve[k] << '\n';
    if (!out)
        throw IoError("failed while writing loss curve file: " + path);
}

}  // namespace e2eso::training

// Task losses with analytic gradients and the prescriptor layers that map
// network features to feasible actions: identity, capacity-scaled sigmoid,
// Euclidean ball projection, and a merit-order economic-dispatch layer.
// Every prescriptor exposes its input Jacobian so gradients can be chained
// into backpropagation, plus a Lipschitz constant for the composition bound.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "nnet.hpp"

namespace e2eso::decisions {

/// Scalar loss value together with its gradient in the action.
struct LossGrad {
    double value = 0.0;
    Vec grad;
};

// ---------------------------------------------------------------------------
// Newsvendor
// ---------------------------------------------------------------------------

/// Discrete newsvendor: order a units at wholesale price, sell min(a, y) at
/// retail price; demand levels are integers 1..levels.
struct NewsvendorParams {
    int levels = 11;
    double wholesale = 5.0;   // p
    double retail = 7.0;      // q
};

inline void validate(const NewsvendorParams& params) {
    if (params.levels < 1)
        throw ConfigError("newsvendor: need at least one demand level");
    if (!(params.wholesale > 0.0))
        throw ConfigError("newsvendor: wholesale price must be positive");
    if (!(params.retail > params.wholesale))
        throw ConfigError("newsvendor: retail price must exceed the wholesale price");
}

/**
 * @brief Newsvendor cost p*a - q*min(a, y) for integer demand y and order a.
 *
 * Negative values are profits. Both levels must lie in 1..levels; the action
 * is discrete so there is no gradient here (training uses the softmax head
 * below instead).
 */
inline double newsvendor_loss(const NewsvendorParams& params, int y, int a) {
    if (y < 1 || y > params.levels)
        throw DomainError("newsvendor_loss: demand level " + std::to_string(y) + " outside 1.." +
                          std::to_string(params.levels));
    if (a < 1 || a > params.levels)
        throw DomainError("newsvendor_loss: order level " + std::to_string(a) + " outside 1.." +
                          std::to_string(params.levels));
    return params.wholesale * a - params.retail * std::min(a, y);
}

/// Numerically stable softmax.
inline Vec softmax(std::span<const double> logits) {
    double zmax = logits[0];
    for (double z : logits)
        zmax = std::max(zmax, z);
    Vec probs(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - zmax);
        total += probs[i];
    }
    for (double& p : probs)
        p /= total;
    return probs;
}

/**
 * @brief Differentiable newsvendor training head.
 *
 * The network emits one logit per order level; the training loss is the
 * softmax-weighted expected cost sum_a pi_a * loss(y, a), whose gradient in
 * logit j is pi_j * (loss(y, j) - expected cost). Deployment discards the
 * relaxation and orders the argmax level (argmax_level below).
 */
inline LossGrad newsvendor_softmax_loss(const NewsvendorParams& params, int y,
                                        std::span<const double> logits) {
    if (logits.size() != static_cast<std::size_t>(params.levels))
        throw DomainError("newsvendor_softmax_loss: expected one logit per demand level");
    const Vec probs = softmax(logits);
    LossGrad out;
    Vec losses(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        losses[i] = newsvendor_loss(params, y, static_cast<int>(i) + 1);
        out.value += probs[i] * losses[i];
    }
    out.grad.resize(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i)
        out.grad[i] = probs[i] * (losses[i] - out.value);
    return out;
}

/// Deployed order level for a logit vector: argmax, ties to the smaller level.
inline int argmax_level(std::span<const double> logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best])
            best = i;
    return static_cast<int>(best) + 1;
}

// ---------------------------------------------------------------------------
// Economic dispatch
// ---------------------------------------------------------------------------

/// Thermal generator fleet with per-unit costs and capacities. The merit
/// order (indices by ascending cost, ties by lower index) is cached because
/// dispatch runs in inner training loops.
struct GeneratorFleet {
    Vec costs;
    Vec capacities;
    std::vector<std::size_t> merit_order;

    static GeneratorFleet make(Vec costs, Vec capacities) {
        if (costs.empty() || costs.size() != capacities.size())
            throw ConfigError("fleet: costs and capacities must be nonempty and equal length");
        for (double c : costs)
            if (!(c > 0.0))
                throw ConfigError("fleet: costs must be positive");
        for (double cap : capacities)
            if (!(cap > 0.0))
                throw ConfigError("fleet: capacities must be positive");
        GeneratorFleet f;
        f.costs = std::move(costs);
        f.capacities = std::move(capacities);
        f.merit_order.resize(f.costs.size());
        std::iota(f.merit_order.begin(), f.merit_order.end(), std::size_t{0});
        std::stable_sort(f.merit_order.begin(), f.merit_order.end(),
                         [&](std::size_t a, std::size_t b) { return f.costs[a] < f.costs[b]; });
        return f;
    }

    std::size_t count() const { return costs.size(); }
    double max_cost() const { return *std::max_element(costs.begin(), costs.end()); }
    double total_capacity() const { return sum(capacities); }
};

/**
 * @brief Dispatch cost c'a + penalty * max(demand - y - sum(a), 0).
 *
 * y is the realized wind output, a the thermal generation vector (must lie
 * in the feasible box [0, capacity_j] per component). The gradient in a is
 * c - penalty * 1 while a shortfall remains and c otherwise; the kink at
 * zero shortfall takes the no-shortfall branch.
 */
inline LossGrad dispatch_loss(const GeneratorFleet& fleet, double demand, double penalty,
                              double y, std::span<const double> a) {
    if (a.size() != fleet.count())
        throw DomainError("dispatch_loss: action dimension does not match fleet size");
    if (!(y >= 0.0))
        throw DomainError("dispatch_loss: wind output must be nonnegative");
    constexpr double kFeasTol = 1e-9;
    for (std::size_t j = 0; j < a.size(); ++j)
        if (a[j] < -kFeasTol || a[j] > fleet.capacities[j] + kFeasTol)
            throw DomainError("dispatch_loss: generator " + std::to_string(j) +
                              " outside [0, capacity]");
    const double shortfall = demand - y - sum(a);
    LossGrad out;
    out.value = dot(fleet.costs, a) + penalty * std::max(shortfall, 0.0);
    out.grad.resize(a.size());
    for (std::size_t j = 0; j < a.size(); ++j)
        out.grad[j] = fleet.costs[j] - (shortfall > 0.0 ? penalty : 0.0);
    return out;
}

/// Squared Euclidean loss ||y - a||^2 with gradient 2(a - y).
inline LossGrad squared_loss(std::span<const double> y, std::span<const double> a) {
    if (y.size() != a.size())
        throw DomainError("squared_loss: vectors differ in length");
    LossGrad out;
    out.grad.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - y[i];
        out.value += d * d;
        out.grad[i] = 2.0 * d;
    }
    return out;
}

/// Solution of the deterministic dispatch problem for a point prediction.
struct DispatchResult {
    Vec action;
    double cost = 0.0;     // c'a only; any penalty term is a property of realized y
    Vec da_dyhat;          // piecewise-constant sensitivity, left derivative at breakpoints
};

/**
 * @brief Minimize c'a + penalty * max(demand - y_hat - sum(a), 0) over the box.
 *
 * With penalty above every unit cost the optimum fills the residual demand
 * max(demand - y_hat, 0) by ascending cost (merit order, ties by lower
 * index) until it is met or capacity runs out. The sensitivity da/dy_hat is
 * -1 on the marginal generator and 0 elsewhere; at a breakpoint where the
 * residual exactly exhausts a generator, the left derivative (in y_hat) is
 * reported, i.e. -1 on the next generator in merit order if one exists.
 * Negative predictions are clamped to 0 defensively.
 */
inline DispatchResult dispatch_solve(const GeneratorFleet& fleet, double demand, double penalty,
                                     double y_hat) {
    if (!(demand > 0.0))
        throw ConfigError("dispatch_solve: demand must be positive");
    if (!(penalty > fleet.max_cost()))
        throw ConfigError("dispatch_solve: penalty must exceed every generation cost");
    if (!std::isfinite(y_hat))
        throw DomainError("dispatch_solve: prediction must be finite");
    DispatchResult out;
    out.action.assign(fleet.count(), 0.0);
    out.da_dyhat.assign(fleet.count(), 0.0);
    double remaining = std::max(demand - std::max(y_hat, 0.0), 0.0);
    if (remaining == 0.0)
        return out;
    // Load in merit order; track who absorbed the last unit.
    std::size_t last_pos = fleet.count();
    bool last_full = false;
    for (std::size_t pos = 0; pos < fleet.count() && remaining > 0.0; ++pos) {
        const std::size_t j = fleet.merit_order[pos];
        const double load = std::min(fleet.capacities[j], remaining);
        out.action[j] = load;
        remaining -= load;
        last_pos = pos;
        last_full = load == fleet.capacities[j];
    }
    out.cost = dot(fleet.costs, out.action);
    if (remaining > 0.0)
        return out;  // every generator saturated; marginal sensitivity vanishes
    if (!last_full) {
        out.da_dyhat[fleet.merit_order[last_pos]] = -1.0;
    } else if (last_pos + 1 < fleet.count()) {
        // Breakpoint: the residual exactly filled the last loaded generator;
        // the left derivative moves the next merit-order generator.
        out.da_dyhat[fleet.merit_order[last_pos + 1]] = -1.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prescriptors
// ---------------------------------------------------------------------------

/// Action computed from a feature vector together with its Jacobian
/// d(action)/d(feature), shaped action_dim x input_dim.
struct PrescriptorResult {
    Vec action;
    Matrix jacobian;
};

/// Constraint-enforcing output layer appended to the feature extractor.
struct Prescriptor {
    enum class Kind { identity, sigmoid_capacity, ball_projection, dispatch_opl };

    Kind kind = Kind::identity;
    std::size_t dim = 0;        // identity / ball_projection input dimension
    Vec capacities;             // sigmoid_capacity
    double radius = 0.0;        // ball_projection
    GeneratorFleet fleet;       // dispatch_opl
    double demand = 0.0;
    double penalty = 0.0;

    static Prescriptor identity(std::size_t dim) {
        if (dim == 0)
            throw ConfigError("prescriptor: zero-dimensional identity");
        Prescriptor p;
        p.kind = Kind::identity;
        p.dim = dim;
        return p;
    }

    static Prescriptor sigmoid_capacity(Vec caps) {
        if (caps.empty())
            throw ConfigError("prescriptor: empty capacity vector");
        for (double c : caps)
            if (!(c > 0.0))
                throw ConfigError("prescriptor: capacities must be positive");
        Prescriptor p;
        p.kind = Kind::sigmoid_capacity;
        p.capacities = std::move(caps);
        p.dim = p.capacities.size();
        return p;
    }

    static Prescriptor ball_projection(double radius, std::size_t dim) {
        if (!(radius > 0.0))
            throw ConfigError("prescriptor: ball radius must be positive");
        if (dim == 0)
            throw ConfigError("prescriptor: zero-dimensional ball");
        Prescriptor p;
        p.kind = Kind::ball_projection;
        p.radius = radius;
        p.dim = dim;
        return p;
    }

    static Prescriptor dispatch_opl(GeneratorFleet fleet, double demand, double penalty) {
        if (!(demand > 0.0))
            throw ConfigError("prescriptor: demand must be positive");
        if (!(penalty > fleet.max_cost()))
            throw ConfigError("prescriptor: penalty must exceed every generation cost");
        Prescriptor p;
        p.kind = Kind::dispatch_opl;
        p.fleet = std::move(fleet);
        p.demand = demand;
        p.penalty = penalty;
        p.dim = 1;
        return p;
    }

    std::size_t input_dim() const { return dim; }

    std::size_t action_dim() const {
        return kind == Kind::dispatch_opl ? fleet.count() : dim;
    }
};

/// Lipschitz constant of the prescriptor as a map from features to actions.
inline double lipschitz_bound(const Prescriptor& p) {
    switch (p.kind) {
        case Prescriptor::Kind::identity:
            return 1.0;
        case Prescriptor::Kind::sigmoid_capacity:
            // slope of cap * sigmoid is at most cap / 4
            return *std::max_element(p.capacities.begin(), p.capacities.end()) / 4.0;
        case Prescriptor::Kind::ball_projection:
            return 1.0;  // projections onto convex sets are 1-Lipschitz
        case Prescriptor::Kind::dispatch_opl:
            // each component of the merit-order dispatch has slope in [-1, 0]
            return std::sqrt(static_cast<double>(p.fleet.count()));
    }
    throw ContractError("lipschitz_bound: unknown prescriptor kind");
}

/**
 * @brief Map features r to a feasible action and the Jacobian da/dr.
 *
 * identity: a = r, J = I. sigmoid_capacity: a_j = cap_j * sigmoid(r_j),
 * J diagonal. ball_projection: a = r inside the ball; outside, a scales to
 * the boundary and J = (radius/||r||) (I - rr'/||r||^2), which annihilates
 * the radial direction. dispatch_opl: r is a scalar wind prediction passed
 * through dispatch_solve (clamped at 0; the clamp contributes slope 0 for
 * r <= 0).
 */
inline PrescriptorResult apply_prescriptor(const Prescriptor& p, std::span<const double> r) {
    if (r.size() != p.input_dim())
        throw DomainError("apply_prescriptor: feature dimension " + std::to_string(r.size()) +
                          " does not match prescriptor input " + std::to_string(p.input_dim()));
    PrescriptorResult out;
    switch (p.kind) {
        case Prescriptor::Kind::identity: {
            out.action.assign(r.begin(), r.end());
            out.jacobian = Matrix::identity(p.dim);
            return out;
        }
        case Prescriptor::Kind::sigmoid_capacity: {
            const std::size_t n = p.capacities.size();
            out.action.resize(n);
            out.jacobian = Matrix(n, n);
            for (std::size_t j = 0; j < n; ++j) {
                const double s = nnet::stable_sigmoid(r[j]);
                out.action[j] = p.capacities[j] * s;
                out.jacobian(j, j) = p.capacities[j] * s * (1.0 - s);
            }
            return out;
        }
        case Prescriptor::Kind::ball_projection: {
            const double norm = norm2(r);
            if (norm <= p.radius) {
                out.action.assign(r.begin(), r.end());
                out.jacobian = Matrix::identity(p.dim);
                return out;
            }
            const double scale = p.radius / norm;
            out.action.resize(p.dim);
            for (std::size_t i = 0; i < p.dim; ++i)
                out.action[i] = scale * r[i];
            // Guarantee the feasibility invariant against rounding drift.
            while (norm2(out.action) > p.radius)
                for (double& v : out.action)
                    v = std::nextafter(v, 0.0);
            out.jacobian = Matrix(p.dim, p.dim);
            const double inv_sq = 1.0 / (norm * norm);
            for (std::size_t i = 0; i < p.dim; ++i)
                for (std::size_t j = 0; j < p.dim; ++j)
                    out.jacobian(i, j) = scale * ((i == j ? 1.0 : 0.0) - r[i] * r[j] * inv_sq);
            return out;
        }
        case Prescriptor::Kind::dispatch_opl: {
            DispatchResult d = dispatch_solve(p.fleet, p.demand, p.penalty, r[0]);
            out.action = std::move(d.action);
            out.jacobian = Matrix(p.fleet.count(), 1);
            const double clamp_slope = r[0] > 0.0 ? 1.0 : 0.0;
            for (std::size_t j = 0; j < p.fleet.count(); ++j)
                out.jacobian(j, 0) = d.da_dyhat[j] * clamp_slope;
            return out;
        }
    }
    throw ContractError("apply_prescriptor: unknown prescriptor kind");
}

// ---------------------------------------------------------------------------
// Serialization (embedded in decision-map checkpoints)
// ---------------------------------------------------------------------------

inline nlohmann::json prescriptor_json(const Prescriptor& p) {
    nlohmann::json j;
    switch (p.kind) {
        case Prescriptor::Kind::identity:
            j["kind"] = "identity";
            j["dim"] = p.dim;
            break;
        case Prescriptor::Kind::sigmoid_capacity:
            j["kind"] = "sigmoid_capacity";
            j["capacities"] = p.capacities;
            break;
        case Prescriptor::Kind::ball_projection:
            j["kind"] = "ball_projection";
            j["radius"] = p.radius;
            j["dim"] = p.dim;
            break;
        case Prescriptor::Kind::dispatch_opl:
            j["kind"] = "dispatch_opl";
            j["costs"] = p.fleet.costs;
            j["capacities"] = p.fleet.capacities;
            j["demand"] = p.demand;
            j["penalty"] = p.penalty;
            break;
    }
    return j;
}

inline Prescriptor prescriptor_from_json(const nlohmann::json& j) {
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "identity")
            return Prescriptor::identity(j.at("dim").get<std::size_t>());
        if (kind == "sigmoid_capacity")
            return Prescriptor::sigmoid_capacity(j.at("capacities").get<Vec>());
        if (kind == "ball_projection")
            return Prescriptor::ball_projection(j.at("radius").get<double>(),
                                                j.at("dim").get<std::size_t>());
        if (kind == "dispatch_opl")
            return Prescriptor::dispatch_opl(
                GeneratorFleet::make(j.at("costs").get<Vec>(), j.at("capacities").get<Vec>()),
                j.at("demand").get<double>(), j.at("penalty").get<double>());
        throw FormatError("prescriptor: unknown kind: " + kind);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("prescriptor: ") + e.what());
    }
}

}  // namespace e2eso::decisions

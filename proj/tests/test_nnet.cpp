#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <e2eso/nnet.hpp>
#include <e2eso/rng.hpp>

#include "oracles.hpp"

using namespace e2eso;
using namespace e2eso::nnet;

namespace {

Mlp make_identity2() {
    Mlp net;
    net.layer_dims = {2, 2};
    net.activations = {Activation::linear};
    net.weights = {Matrix::identity(2)};
    net.biases = {Vec{0.0, 0.0}};
    return net;
}

/// Random net whose hidden preactivations at x stay away from relu kinks,
/// so finite differences are trustworthy.
struct Fixture {
    Mlp net;
    Vec x;
};

Fixture sample_net(Rng& rng, const std::vector<std::size_t>& dims,
                   const std::vector<Activation>& acts, double kink_margin) {
    for (int attempt = 0; attempt < 200; ++attempt) {
        Mlp net = init_weights(dims, acts, rng.raw());
        for (auto& b : net.biases)
            for (double& v : b)
                v = rng.uniform(-0.3, 0.3);
        Vec x(dims.front());
        for (double& v : x)
            v = rng.normal();
        ForwardTape tape;
        forward(net, x, &tape);
        double closest = 1e9;
        for (const auto& pre : tape.pre)
            for (double z : pre)
                closest = std::min(closest, std::abs(z));
        if (closest > kink_margin)
            return {std::move(net), std::move(x)};
    }
    FAIL("could not sample a network away from activation kinks");
    return {};
}

}  // namespace

TEST_CASE("forward pinned examples", "[nnet]") {
    SECTION("identity linear network reproduces its input") {
        Mlp net = make_identity2();
        Vec y = forward(net, Vec{1.0, 2.0});
        REQUIRE(y == Vec{1.0, 2.0});
    }
    SECTION("relu clamps a negative preactivation to zero") {
        Mlp net;
        net.layer_dims = {2, 1};
        net.activations = {Activation::relu};
        net.weights = {Matrix(1, 2, 1.0)};
        net.biases = {Vec{-3.0}};
        Vec y = forward(net, Vec{1.0, 1.0});
        REQUIRE(y == Vec{0.0});
    }
    SECTION("sigmoid at zero is one half") {
        Mlp net;
        net.layer_dims = {1, 1};
        net.activations = {Activation::sigmoid};
        net.weights = {Matrix(1, 1, 1.0)};
        net.biases = {Vec{0.0}};
        Vec y = forward(net, Vec{0.0});
        REQUIRE(y == Vec{0.5});
    }
    SECTION("input dimension mismatch is rejected") {
        Mlp net = make_identity2();
        REQUIRE_THROWS_AS(forward(net, Vec{1.0}), DomainError);
    }
    SECTION("finite inputs map to finite outputs") {
        Rng rng(7);
        for (int t = 0; t < 50; ++t) {
            Mlp net = init_weights({3, 5, 2},
                                   {Activation::softplus,
                                    t % 2 ? Activation::sigmoid : Activation::relu},
                                   rng.raw());
            Vec x{rng.uniform(-1e6, 1e6), rng.uniform(-1e6, 1e6), rng.uniform(-1e6, 1e6)};
            REQUIRE(all_finite(forward(net, x)));
        }
    }
}

TEST_CASE("backward pinned examples", "[nnet]") {
    SECTION("identity linear chain rule") {
        Mlp net = make_identity2();
        Vec x{3.0, -4.0};
        ForwardTape tape;
        forward(net, x, &tape);
        Vec dx;
        Gradients g = backward(net, tape, Vec{1.0, 0.0}, &dx);
        REQUIRE(dx == Vec{1.0, 0.0});
        // grad over weights equals outer(upstream, x)
        REQUIRE(g.weights[0](0, 0) == 3.0);
        REQUIRE(g.weights[0](0, 1) == -4.0);
        REQUIRE(g.weights[0](1, 0) == 0.0);
        REQUIRE(g.weights[0](1, 1) == 0.0);
        REQUIRE(g.biases[0] == Vec{1.0, 0.0});
    }
    SECTION("zero upstream gradient yields zero everywhere") {
        Rng rng(11);
        Fixture f = sample_net(rng, {4, 6, 3},
                               {Activation::relu, Activation::sigmoid}, 1e-6);
        ForwardTape tape;
        forward(f.net, f.x, &tape);
        Vec dx;
        Gradients g = backward(f.net, tape, Vec(3, 0.0), &dx);
        REQUIRE(g.squared_norm() == 0.0);
        REQUIRE(norm2(dx) == 0.0);
    }
    SECTION("stale tape is rejected after a parameter update") {
        Mlp net = make_identity2();
        ForwardTape tape;
        forward(net, Vec{1.0, 2.0}, &tape);
        OptimState opt = OptimState::sgd(0.1);
        Gradients g = Gradients::zeros_like(net);
        step(net, opt, g);
        REQUIRE_THROWS_AS(backward(net, tape, Vec{1.0, 0.0}), ContractError);
    }
    SECTION("three-layer relu net matches central finite differences") {
        Rng rng(2024);
        Fixture f = sample_net(rng, {4, 8, 8, 2},
                               {Activation::relu, Activation::relu, Activation::linear}, 1e-2);
        Vec upstream{rng.normal(), rng.normal()};
        ForwardTape tape;
        forward(f.net, f.x, &tape);
        Gradients analytic = backward(f.net, tape, upstream);
        auto loss = [&](std::span<const double> y) { return dot(upstream, y); };
        Gradients fd = oracles::fd_param_gradient(f.net, f.x, loss, 1e-4);
        REQUIRE(oracles::max_grad_rel_err(analytic, fd) < 1e-5);
    }
}

TEST_CASE("gradient correctness across activations", "[nnet][property]") {
    // 100 random (net, input, upstream) triples spanning every activation.
    Rng rng(31337);
    const std::vector<std::vector<Activation>> smooth_stacks = {
        {Activation::sigmoid, Activation::linear},
        {Activation::softplus, Activation::sigmoid},
        {Activation::linear, Activation::softplus},
        {Activation::softplus, Activation::softplus, Activation::linear},
    };
    const std::vector<std::vector<Activation>> kinked_stacks = {
        {Activation::relu, Activation::linear},
        {Activation::relu, Activation::sigmoid},
        {Activation::relu, Activation::relu, Activation::linear},
        {Activation::softplus, Activation::relu},
    };
    int checked = 0;
    for (int t = 0; t < 100; ++t) {
        const bool smooth = t % 2 == 0;
        const auto& stacks = smooth ? smooth_stacks : kinked_stacks;
        const auto& acts = stacks[static_cast<std::size_t>(t) % stacks.size()];
        std::vector<std::size_t> dims{1 + rng.uniform_index(5)};
        for (std::size_t l = 0; l < acts.size(); ++l)
            dims.push_back(1 + rng.uniform_index(7));
        Fixture f = sample_net(rng, dims, acts, smooth ? 0.0 : 1e-2);
        Vec upstream(dims.back());
        for (double& v : upstream)
            v = rng.normal();
        ForwardTape tape;
        forward(f.net, f.x, &tape);
        Gradients analytic = backward(f.net, tape, upstream);
        auto loss = [&](std::span<const double> y) { return dot(upstream, y); };
        // Smooth nets get a 5-point stencil and the tight tolerance; kinked
        // nets get the plain central stencil at h = 1e-4.
        Gradients fd = smooth ? oracles::fd_param_gradient(f.net, f.x, loss, 1e-3, true)
                              : oracles::fd_param_gradient(f.net, f.x, loss, 1e-4);
        const double err = oracles::max_grad_rel_err(analytic, fd);
        REQUIRE(err < (smooth ? 1e-7 : 1e-5));
        ++checked;
    }
    REQUIRE(checked == 100);
}

TEST_CASE("input sensitivity matches finite differences", "[nnet]") {
    Rng rng(99);
    Fixture f = sample_net(rng, {3, 6, 2},
                           {Activation::softplus, Activation::sigmoid}, 0.0);
    Vec upstream{0.7, -1.3};
    ForwardTape tape;
    forward(f.net, f.x, &tape);
    Vec dx;
    backward(f.net, tape, upstream, &dx);
    auto loss_of_x = [&](std::span<const double> xx) {
        return dot(upstream, forward(f.net, xx));
    };
    Vec fd = oracles::fd_gradient(loss_of_x, f.x, 1e-3, true);
    for (std::size_t i = 0; i < dx.size(); ++i)
        REQUIRE(oracles::rel_err(dx[i], fd[i]) < 1e-7);
}

TEST_CASE("sgd step examples and schedule", "[nnet]") {
    auto scalar_net = [] {
        Mlp net;
        net.layer_dims = {1, 1};
        net.activations = {Activation::linear};
        net.weights = {Matrix(1, 1, 1.0)};
        net.biases = {Vec{}};
        return net;
    };
    auto grad_of = [](const Mlp& net, double g) {
        Gradients gr = Gradients::zeros_like(net);
        gr.weights[0](0, 0) = g;
        return gr;
    };
    SECTION("first step with eta0 = 0.5 and grad 2 zeroes the weight") {
        Mlp net = scalar_net();
        OptimState opt = OptimState::sgd(0.5);
        step(net, opt, grad_of(net, 2.0));
        REQUIRE(net.weights[0](0, 0) == 0.0);
        REQUIRE(opt.step_count == 1);
    }
    SECTION("fourth step applies eta0 / 2") {
        Mlp net = scalar_net();
        OptimState opt = OptimState::sgd(0.5);
        opt.step_count = 3;  // next update is iteration k = 4
        step(net, opt, grad_of(net, 2.0));
        REQUIRE(net.weights[0](0, 0) == 0.5);
    }
    SECTION("zero gradient leaves parameters unchanged but advances the count") {
        Mlp net = scalar_net();
        OptimState opt = OptimState::sgd(0.5);
        step(net, opt, grad_of(net, 0.0));
        REQUIRE(net.weights[0](0, 0) == 1.0);
        REQUIRE(opt.step_count == 1);
    }
    SECTION("effective step sizes follow eta0 / sqrt(k) exactly up to 1e4") {
        Mlp net = scalar_net();
        OptimState opt = OptimState::sgd(0.01);
        Gradients zero = Gradients::zeros_like(net);
        for (std::uint64_t k = 1; k <= 10000; ++k) {
            REQUIRE(next_step_size(opt) == 0.01 / std::sqrt(static_cast<double>(k)));
            step(net, opt, zero);
            REQUIRE(opt.step_count == k);
        }
    }
    SECTION("nonpositive base step is rejected") {
        REQUIRE_THROWS_AS(OptimState::sgd(0.0), ConfigError);
        REQUIRE_THROWS_AS(OptimState::adam(-1.0), ConfigError);
    }
    SECTION("mismatched gradient shape is rejected") {
        Mlp net = scalar_net();
        Mlp other = make_identity2();
        OptimState opt = OptimState::sgd(0.5);
        REQUIRE_THROWS_AS(step(net, opt, Gradients::zeros_like(other)), ContractError);
    }
}

TEST_CASE("adam reproduces the reference update", "[nnet]") {
    // Single weight, constant gradient g: after one step the bias-corrected
    // moments give exactly w -= eta * g / (|g| + eps).
    Mlp net;
    net.layer_dims = {1, 1};
    net.activations = {Activation::linear};
    net.weights = {Matrix(1, 1, 0.0)};
    net.biases = {Vec{}};
    OptimState opt = OptimState::adam(0.001);
    Gradients g = Gradients::zeros_like(net);
    g.weights[0](0, 0) = 0.3;
    step(net, opt, g);
    const double expect = -0.001 * 0.3 / (0.3 + 1e-8);
    REQUIRE_THAT(net.weights[0](0, 0), Catch::Matchers::WithinULP(expect, 4));
    // Second identical step: moments stay at g after bias correction.
    step(net, opt, g);
    REQUIRE_THAT(net.weights[0](0, 0), Catch::Matchers::WithinRel(2.0 * expect, 1e-12));
}

TEST_CASE("init_weights determinism and shapes", "[nnet]") {
    const std::vector<std::size_t> dims{20, 500, 500, 1};
    const std::vector<Activation> acts{Activation::relu, Activation::relu, Activation::linear};
    SECTION("same seed gives bit-identical weights") {
        Mlp a = init_weights(dims, acts, 42);
        Mlp b = init_weights(dims, acts, 42);
        for (std::size_t l = 0; l < a.weights.size(); ++l)
            REQUIRE(a.weights[l].data == b.weights[l].data);
    }
    SECTION("different seeds differ") {
        Mlp a = init_weights(dims, acts, 42);
        Mlp b = init_weights(dims, acts, 43);
        bool any_diff = false;
        for (std::size_t l = 0; l < a.weights.size(); ++l)
            if (a.weights[l].data != b.weights[l].data)
                any_diff = true;
        REQUIRE(any_diff);
    }
    SECTION("shapes follow the layer dimensions") {
        Mlp net = init_weights(dims, acts, 1);
        REQUIRE(net.weights[0].rows == 500);
        REQUIRE(net.weights[0].cols == 20);
        REQUIRE(net.weights[1].rows == 500);
        REQUIRE(net.weights[1].cols == 500);
        REQUIRE(net.weights[2].rows == 1);
        REQUIRE(net.weights[2].cols == 500);
        REQUIRE(net.param_count() == 500 * 20 + 500 + 500 * 500 + 500 + 500 + 1);
    }
    SECTION("degenerate layer lists are rejected") {
        REQUIRE_THROWS_AS(init_weights({}, {}, 1), ConfigError);
        REQUIRE_THROWS_AS(init_weights({4}, {}, 1), ConfigError);
        REQUIRE_THROWS_AS(init_weights({4, 0}, {Activation::linear}, 1), ConfigError);
        REQUIRE_THROWS_AS(init_weights({4, 2}, {}, 1), ConfigError);
    }
}

TEST_CASE("training trajectory is deterministic in the seed", "[nnet]") {
    auto run = [](std::uint64_t seed) {
        Mlp net = init_weights({2, 8, 1}, {Activation::relu, Activation::linear}, seed);
        OptimState opt = OptimState::sgd(0.05);
        Rng rng(seed);
        for (int k = 0; k < 300; ++k) {
            Vec x{rng.normal(), rng.normal()};
            const double target = x[0] - 0.5 * x[1];
            ForwardTape tape;
            Vec y = forward(net, x, &tape);
            Vec upstream{2.0 * (y[0] - target)};
            Gradients g = backward(net, tape, upstream);
            step(net, opt, g);
        }
        return net;
    };
    Mlp a = run(5);
    Mlp b = run(5);
    Mlp c = run(6);
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
        REQUIRE(a.weights[l].data == b.weights[l].data);
        REQUIRE(a.biases[l] == b.biases[l]);
    }
    bool differs = false;
    for (std::size_t l = 0; l < a.weights.size(); ++l)
        if (a.weights[l].data != c.weights[l].data)
            differs = true;
    REQUIRE(differs);
}

TEST_CASE("checkpoint round trip is value-exact", "[nnet]") {
    Rng rng(77);
    Mlp net = init_weights({5, 7, 3}, {Activation::softplus, Activation::sigmoid}, rng.raw());
    for (auto& b : net.biases)
        for (double& v : b)
            v = rng.normal();
    // Include a bias-free variant in the same round trip.
    Mlp bare = init_weights({2, 1}, {Activation::linear}, 3, /*with_bias=*/false);

    const auto dir = std::filesystem::temp_directory_path();
    const std::string p1 = (dir / "e2eso_ckpt_a.json").string();
    const std::string p2 = (dir / "e2eso_ckpt_b.json").string();
    save_checkpoint(net, p1);
    save_checkpoint(bare, p2);
    Mlp back = load_checkpoint(p1);
    Mlp bare_back = load_checkpoint(p2);

    REQUIRE(back.layer_dims == net.layer_dims);
    REQUIRE(back.activations == net.activations);
    REQUIRE(back.init_seed == net.init_seed);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        REQUIRE(back.weights[l].data == net.weights[l].data);
        REQUIRE(back.biases[l] == net.biases[l]);
    }
    REQUIRE(bare_back.biases[0].empty());
    REQUIRE(bare_back.weights[0].data == bare.weights[0].data);
    REQUIRE(forward(bare_back, Vec{1.5, -2.0}) == forward(bare, Vec{1.5, -2.0}));

    SECTION("missing and malformed files raise distinct errors") {
        REQUIRE_THROWS_AS(load_checkpoint((dir / "absent.json").string()), IoError);
        const std::string bad = (dir / "e2eso_ckpt_bad.json").string();
        std::ofstream(bad) << "{\"format\": \"something-else\"}";
        REQUIRE_THROWS_AS(load_checkpoint(bad), FormatError);
        std::ofstream(bad) << "not json";
        REQUIRE_THROWS_AS(load_checkpoint(bad), FormatError);
    }
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

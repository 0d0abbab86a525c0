#include <doctest.h>

#include <cmath>
#include <functional>

#include "support/gaussian_chain.hpp"
#include "trajvae/graph.hpp"
#include "trajvae/rng.hpp"

using namespace trajvae;
namespace g = trajvae::graph;

namespace {

// Central finite differences over a flat input vector.
double fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                   int coord, double step = 1e-6) {
    const double orig = x[coord];
    x[coord] = orig + step;
    const double fp = f(x);
    x[coord] = orig - step;
    const double fm = f(x);
    return (fp - fm) / (2.0 * step);
}

void check_grads(const std::function<g::Var(g::Tape&, g::Var)>& build, const Eigen::VectorXd& x0,
                 double tol = 1e-6) {
    auto value = [&](const Eigen::VectorXd& x) {
        g::Tape t;
        g::Var in = t.leaf(x);
        return build(t, in).scalar();
    };
    g::Tape t;
    g::Var in = t.leaf(x0);
    g::Var out = build(t, in);
    t.backward(out);
    const Eigen::VectorXd grad = t.grad(in);
    for (int i = 0; i < x0.size(); ++i) {
        const double fd = fd_gradient(value, x0, i);
        CHECK(grad[i] == doctest::Approx(fd).epsilon(tol).scale(1.0));
    }
}

}  // namespace

TEST_CASE("elementwise and reduction op gradients vs finite differences") {
    Rng rng(3);
    Eigen::VectorXd x = rng.normal_vec(5);

    check_grads([](g::Tape&, g::Var v) { return g::sum(g::tanh_(v)); }, x);
    check_grads([](g::Tape&, g::Var v) { return g::sum(g::sigmoid_(v)); }, x);
    check_grads([](g::Tape&, g::Var v) { return g::sum(g::exp_(v)); }, x);
    check_grads([](g::Tape&, g::Var v) { return g::sum(g::square_(v)); }, x);
    check_grads([](g::Tape&, g::Var v) { return g::sum(g::mul(v, g::scale(v, 2.0))); }, x);
    check_grads([](g::Tape&, g::Var v) { return g::logsumexp(v); }, x);
    check_grads([](g::Tape&, g::Var v) { return g::dot(g::softmax(v), g::square_(v)); }, x);
    check_grads(
        [](g::Tape&, g::Var v) {
            return g::sum(g::log_(g::offset(g::square_(v), 0.5)));
        },
        x);
    check_grads(
        [](g::Tape&, g::Var v) {
            return g::sum(g::sqrt_(g::offset(g::square_(v), 1.0)));
        },
        x);
    check_grads(
        [](g::Tape&, g::Var v) {
            return g::sum(g::div(v, g::offset(g::square_(v), 2.0)));
        },
        x);
    check_grads(
        [](g::Tape&, g::Var v) {
            g::Var a = g::slice(v, 0, 2);
            g::Var b = g::slice(v, 2, 3);
            return g::add(g::sum(g::mul(a, a)), g::logsumexp(b));
        },
        x);
    check_grads(
        [](g::Tape&, g::Var v) {
            return g::sum(g::sub_scalar(v, g::logsumexp(v)));
        },
        x);
}

TEST_CASE("matvec / affine gradients") {
    Rng rng(5);
    // pack W (3x2), b (3), x (2) into one flat vector
    Eigen::VectorXd all = rng.normal_vec(3 * 2 + 3 + 2);
    auto build = [](g::Tape&, g::Var v) {
        g::Var W = g::slice(v, 0, 6);
        g::Var b = g::slice(v, 6, 3);
        g::Var x = g::slice(v, 9, 2);
        return g::sum(g::tanh_(g::affine(W, b, 3, 2, x)));
    };
    check_grads(build, all);
}

TEST_CASE("concat / weighted_sum gradients") {
    Rng rng(6);
    Eigen::VectorXd all = rng.normal_vec(3 + 3 * 4);
    auto build = [](g::Tape&, g::Var v) {
        g::Var scores = g::slice(v, 0, 3);
        std::vector<g::Var> feats = {g::slice(v, 3, 4), g::slice(v, 7, 4), g::slice(v, 11, 4)};
        g::Var w = g::softmax(scores);
        return g::sum(g::square_(g::weighted_sum(w, feats)));
    };
    check_grads(build, all);
}

TEST_CASE("fused gaussian ops match their compositional forms and gradients") {
    Rng rng(7);
    const int d = 4;
    Eigen::VectorXd all(3 * d);
    all << rng.normal_vec(d), 0.5 * rng.normal_vec(d), rng.normal_vec(d);

    SUBCASE("gaussian_logpdf value") {
        g::Tape t;
        g::Var v = t.leaf(all);
        g::Var mean = g::slice(v, 0, d), ls = g::slice(v, d, d), x = g::slice(v, 2 * d, d);
        const double got = g::gaussian_logpdf(mean, ls, x).scalar();
        double expect = 0.0;
        for (int j = 0; j < d; ++j) {
            const double s = std::exp(all[d + j]);
            const double r = (all[2 * d + j] - all[j]) / s;
            expect += -0.5 * std::log(2.0 * M_PI) - std::log(s) - 0.5 * r * r;
        }
        CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("gaussian_logpdf gradients") {
        check_grads(
            [d](g::Tape&, g::Var v) {
                return g::gaussian_logpdf(g::slice(v, 0, d), g::slice(v, d, d),
                                          g::slice(v, 2 * d, d));
            },
            all);
    }
    SUBCASE("kl_std_normal value and gradients") {
        g::Tape t;
        g::Var v = t.leaf(all);
        const double got = g::kl_std_normal(g::slice(v, 0, d), g::slice(v, d, d)).scalar();
        double expect = 0.0;
        for (int j = 0; j < d; ++j) {
            const double var = std::exp(2.0 * all[d + j]);
            expect += 0.5 * (var + all[j] * all[j] - 1.0) - all[d + j];
        }
        CHECK(got == doctest::Approx(expect).epsilon(1e-12));
        CHECK(got >= 0.0);
        check_grads(
            [d](g::Tape&, g::Var v2) {
                return g::kl_std_normal(g::slice(v2, 0, d), g::slice(v2, d, d));
            },
            all);
    }
}

TEST_CASE("clamp passes gradient only inside the interval") {
    Eigen::VectorXd x(3);
    x << -2.0, 0.3, 4.0;
    g::Tape t;
    g::Var in = t.leaf(x);
    g::Var out = g::sum(g::clamp_(in, -1.0, 1.0));
    t.backward(out);
    CHECK(t.grad(in)[0] == 0.0);
    CHECK(t.grad(in)[1] == 1.0);
    CHECK(t.grad(in)[2] == 0.0);
    CHECK(out.scalar() == doctest::Approx(-1.0 + 0.3 + 1.0));
}

TEST_CASE("gradient accumulates across reuse of a node") {
    Eigen::VectorXd x(2);
    x << 1.5, -0.5;
    g::Tape t;
    g::Var in = t.leaf(x);
    g::Var y = g::add(g::sum(g::square_(in)), g::sum(in));  // x^2 + x, both branches use `in`
    t.backward(y);
    CHECK(t.grad(in)[0] == doctest::Approx(2.0 * 1.5 + 1.0));
    CHECK(t.grad(in)[1] == doctest::Approx(2.0 * -0.5 + 1.0));
}

TEST_CASE("subadditivity chain on randomized linear-Gaussian systems") {
    // H(V|tau) <= sum_i [H(z_i|tau) - H(z_i|V_i,tau)] <= sum_i H(z_i|tau),
    // evaluated analytically via Gaussian conditioning.
    Rng rng(17);
    for (int k = 0; k < 100; ++k) {
        const int M = 2 + rng.uniform_int(4);
        const int P = 2 + rng.uniform_int(5);
        auto sys = chain_oracle::random_system(rng, M, P);
        auto rep = chain_oracle::evaluate_chain(sys);
        CHECK(rep.entropies_positive);
        CHECK(rep.h_v_tau <= rep.rolled_bound + 1e-9);
        CHECK(rep.rolled_bound <= rep.sum_marginals + 1e-9);
    }
}

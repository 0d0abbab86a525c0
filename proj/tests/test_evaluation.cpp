#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "trajvae/evaluation.hpp"
#include "trajvae/training.hpp"

using namespace trajvae;
namespace fs = std::filesystem;

namespace {

Trajectory constant_demo(const Eigen::Vector2d& s, int T, const std::string& skill) {
    Trajectory t;
    t.states = s.transpose().replicate(T, 1);
    t.actions = Eigen::MatrixXd::Zero(T, 2);
    t.skill_id = skill;
    return t;
}

GeneratedTrajectory gen_from(const Eigen::MatrixXd& states) {
    GeneratedTrajectory g;
    g.states = states;
    g.actions = Eigen::MatrixXd::Zero(states.rows(), 2);
    g.conditioning_latent = Eigen::VectorXd::Zero(2);
    return g;
}

}  // namespace

TEST_CASE("state_mse") {
    Rng rng(1);
    Eigen::MatrixXd states(3, 2);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) states(i, j) = rng.normal();
    Trajectory demo;
    demo.states = states;
    demo.actions = Eigen::MatrixXd::Zero(3, 2);

    CHECK(state_mse(gen_from(states), demo) == 0.0);
    SUBCASE("constant offset delta gives delta^2") {
        Eigen::MatrixXd shifted = states.array() + 0.75;
        CHECK(state_mse(gen_from(shifted), demo) == doctest::Approx(0.75 * 0.75).epsilon(1e-12));
    }
    SUBCASE("matches hand computation") {
        Eigen::MatrixXd other(3, 2);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 2; ++j) other(i, j) = rng.normal();
        double acc = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 2; ++j) {
                const double d = other(i, j) - states(i, j);
                acc += d * d;
            }
        CHECK(state_mse(gen_from(other), demo) == doctest::Approx(acc / 6.0).epsilon(1e-12));
    }
    SUBCASE("symmetry") {
        Eigen::MatrixXd other = states.array() + 0.1;
        Trajectory demo2;
        demo2.states = other;
        demo2.actions = demo.actions;
        CHECK(state_mse(gen_from(other), demo) ==
              doctest::Approx(state_mse(gen_from(states), demo2)).epsilon(1e-15));
    }
    SUBCASE("shape mismatch") {
        Trajectory shorter;
        shorter.states = states.topRows(2);
        shorter.actions = Eigen::MatrixXd::Zero(2, 2);
        CHECK_THROWS_AS(state_mse(gen_from(states), shorter), InvalidInput);
    }
}

TEST_CASE("eval_composite") {
    ModelConfig mc;
    mc.d_latent = 3;
    mc.encoder_hidden = 8;
    mc.attention_dim = 4;
    CompositionSpec comp{"ab", {"a", "b"}};

    SUBCASE("fresh bundle reproduces constant demos exactly: mse 0, std 0") {
        // zero-init residual dynamics repeats s_1, and a zero-field demo is constant
        ModelBundle b = init_parameters(mc, 0);
        Trajectory da = constant_demo({0.2, -0.4}, 8, "a");
        Trajectory db = constant_demo({0.2, -0.4}, 8, "b");
        Trajectory dc1 = constant_demo({0.2, -0.4}, 8, "ab");
        Trajectory dc2 = constant_demo({0.2, -0.4}, 8, "ab");
        std::vector<std::vector<const Trajectory*>> sub = {{&da}, {&db}};
        std::vector<const Trajectory*> comps = {&dc1, &dc2};
        for (auto mode : {CompositeEmbedding::Sum, CompositeEmbedding::Encode}) {
            MseStats s = eval_composite(b, comp, sub, comps, mode);
            CHECK(s.mse_mean == 0.0);
            CHECK(s.mse_std == 0.0);
        }
    }
    SUBCASE("errors") {
        ModelBundle b = init_parameters(mc, 0);
        Trajectory da = constant_demo({0.0, 0.0}, 4, "a");
        std::vector<std::vector<const Trajectory*>> sub = {{&da}};
        CHECK_THROWS_AS(eval_composite(b, comp, sub, {}, CompositeEmbedding::Sum), InvalidInput);
    }
    SUBCASE("trained diag run: encode-mode MSE never exceeds the untrained bundle's in 5/5 seeds") {
        DatasetManifest m = default_manifest("diag");
        m.demos_per_skill = 5;
        m.sim.T = 25;
        Dataset ds = generate_dataset(m);
        const CompositionSpec& dcomp = ds.manifest.compositions[0];
        std::vector<std::vector<const Trajectory*>> sub;
        for (const auto& id : dcomp.subskill_ids) sub.push_back(ds.demos_of(id));
        auto cdemos = ds.demos_of(dcomp.composite_id);

        TrainConfig tc;
        tc.objective_config.objective = Objective::Original;
        tc.objective_config.rollout_T = 25;
        tc.epochs = 60;
        tc.batch_size = 10;
        tc.eval_every = 60;
        for (std::uint64_t seed : {0, 1, 2, 3, 4}) {
            ModelBundle before = init_parameters(ModelConfig{}, seed);
            TrainResult r = train_single(ds, tc, ModelConfig{}, seed);
            const double mse_before =
                eval_composite(before, dcomp, sub, cdemos, CompositeEmbedding::Encode).mse_mean;
            const double mse_after =
                eval_composite(r.bundle, dcomp, sub, cdemos, CompositeEmbedding::Encode).mse_mean;
            CHECK(mse_after <= mse_before + 1e-12);
        }
    }
}

TEST_CASE("additivity_error") {
    ModelConfig mc;
    mc.d_latent = 3;
    mc.encoder_hidden = 8;
    mc.attention_dim = 4;
    Rng rng(3);

    SUBCASE("encoder mapping everything to zero mean gives zero") {
        ModelBundle b = init_parameters(mc, 0);
        for (const char* part : {"enc.mean.W", "enc.mean.b"}) {
            const auto& e = b.layout.entries[b.layout.find(part)];
            b.params.segment(e.offset, e.size()).setZero();
        }
        Trajectory da = constant_demo({1.0, 0.0}, 5, "a");
        Trajectory db = constant_demo({0.0, 1.0}, 5, "b");
        Trajectory dc = constant_demo({1.0, 1.0}, 5, "ab");
        CompositionSpec comp{"ab", {"a", "b"}};
        CHECK(additivity_error(b, comp, std::vector<const Trajectory*>{&da, &db}, dc) == 0.0);
    }
    SUBCASE("M=1 with composite demo equal to the subskill demo") {
        ModelBundle b = init_parameters(mc, 1);
        Rng prng(5);
        for (int i = 0; i < b.params.size(); ++i) b.params[i] += 0.2 * prng.normal();
        Trajectory da = constant_demo({0.5, 0.5}, 6, "a");
        da.states.row(3) << 1.0, -1.0;  // something non-constant
        CompositionSpec comp{"solo", {"a"}};
        CHECK(additivity_error(b, comp, std::vector<const Trajectory*>{&da}, da) == 0.0);
    }
    SUBCASE("invariant under permutation of subskill demos") {
        ModelBundle b = init_parameters(mc, 2);
        Rng prng(7);
        for (int i = 0; i < b.params.size(); ++i) b.params[i] += 0.2 * prng.normal();
        Trajectory da = constant_demo({1.0, 0.0}, 5, "a");
        Trajectory db = constant_demo({0.0, 1.0}, 5, "b");
        Trajectory dcm = constant_demo({1.0, 1.0}, 5, "ab");
        da.states.row(2) << 0.4, 0.6;
        db.states.row(1) << -0.2, 0.9;
        CompositionSpec comp{"ab", {"a", "b"}};
        const double e1 = additivity_error(b, comp, std::vector<const Trajectory*>{&da, &db}, dcm);
        const double e2 = additivity_error(b, comp, std::vector<const Trajectory*>{&db, &da}, dcm);
        CHECK(e1 == doctest::Approx(e2).epsilon(1e-12));
    }
}

TEST_CASE("compare_runs") {
    auto row = [](const std::string& obj, std::uint64_t seed, int epoch, double mse) {
        MetricsRow r;
        r.run_id = obj + "-s" + std::to_string(seed);
        r.objective = obj;
        r.seed = seed;
        r.epoch = epoch;
        r.eval_mse_sum_embedding = mse;
        return r;
    };

    SUBCASE("single run aggregates to itself") {
        RunMetrics run;
        run.rows = {row("original", 0, 0, 1.5), row("original", 0, 5, 1.0)};
        auto agg = compare_runs({run});
        REQUIRE(agg.size() == 2 * kMetricNames.size());
        for (const auto& r : agg) {
            CHECK(r.n_seeds == 1);
            CHECK(r.std == 0.0);
        }
        CHECK(agg[0].objective == "original");
    }
    SUBCASE("two seeds with 1.0 and 3.0 give mean 2.0 and std 1.0") {
        RunMetrics a, b;
        a.rows = {row("original", 0, 5, 1.0)};
        b.rows = {row("original", 1, 5, 3.0)};
        auto agg = compare_runs({a, b});
        bool found = false;
        for (const auto& r : agg)
            if (r.metric == "eval_mse_sum_embedding") {
                CHECK(r.mean == doctest::Approx(2.0));
                CHECK(r.std == doctest::Approx(1.0));
                CHECK(r.n_seeds == 2);
                found = true;
            }
        CHECK(found);
    }
    SUBCASE("order invariance and external recomputation") {
        Rng rng(11);
        std::vector<RunMetrics> runs;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            RunMetrics run;
            for (int epoch : {0, 5, 10})
                run.rows.push_back(row("reg_variational", seed, epoch, rng.uniform() * 4.0));
            runs.push_back(run);
        }
        auto agg1 = compare_runs(runs);
        std::vector<RunMetrics> reversed(runs.rbegin(), runs.rend());
        auto agg2 = compare_runs(reversed);
        REQUIRE(agg1.size() == agg2.size());
        for (size_t i = 0; i < agg1.size(); ++i) {
            CHECK(agg1[i].mean == agg2[i].mean);
            CHECK(agg1[i].std == agg2[i].std);
        }
        // independent recomputation for one cell
        double vals[5];
        for (int s = 0; s < 5; ++s) vals[s] = runs[s].rows[1].eval_mse_sum_embedding;
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= 5.0;
        double sq = 0.0;
        for (double v : vals) sq += (v - mean) * (v - mean);
        const double stddev = std::sqrt(sq / 5.0);
        for (const auto& r : agg1)
            if (r.epoch == 5 && r.metric == "eval_mse_sum_embedding") {
                CHECK(std::abs(r.mean - mean) < 1e-9);
                CHECK(std::abs(r.std - stddev) < 1e-9);
            }
    }
}

TEST_CASE("metrics CSV round-trip and schema") {
    RunMetrics run;
    MetricsRow r;
    r.run_id = "original-s0";
    r.objective = "original";
    r.seed = 0;
    r.epoch = 5;
    r.train_loss = 1.25;
    r.action_nll = 0.5;
    r.state_nll = 0.25;
    r.kl = 0.5;
    r.mi_term = 0.0;
    r.eval_mse_sum_embedding = 0.125;
    r.eval_mse_encoded = 0.0625;
    r.additivity_error = 0.3;
    run.rows = {r};

    fs::path p = fs::temp_directory_path() / "trajvae_metrics_test.csv";
    write_metrics_csv(p.string(), run);
    RunMetrics back = read_metrics_csv(p.string());
    REQUIRE(back.rows.size() == 1);
    CHECK(back.rows[0].run_id == "original-s0");
    CHECK(back.rows[0].train_loss == 1.25);
    CHECK(back.rows[0].additivity_error == 0.3);

    // schema violation
    {
        std::ofstream out(p);
        out << "wrong,header\n1,2\n";
    }
    CHECK_THROWS_AS(read_metrics_csv(p.string()), ValidationError);
    fs::remove(p);
}

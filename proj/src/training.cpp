#include "trajvae/training.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace trajvae {

namespace {

struct Adam {
    Eigen::VectorXd m, v;
    int t = 0;
    double lr;
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    Adam(int n, double learning_rate) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)), lr(learning_rate) {}

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
        ++t;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(beta1, t);
        const double bc2 = 1.0 - std::pow(beta2, t);
        params.array() -=
            lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    }
};

constexpr double kGradClipNorm = 10.0;

struct EvalPools {
    std::vector<const Trajectory*> training;  // subskill demos
    std::vector<Trajectory> training_copy;    // value copies for batching
    std::vector<Trajectory> composite_pool;
    // per composition, demo lists in comp.subskill_ids order
    std::vector<std::vector<std::vector<const Trajectory*>>> subskill_demos;
    std::vector<std::vector<const Trajectory*>> composite_demos;
};

EvalPools split_dataset(const Dataset& dataset) {
    EvalPools pools;
    for (const auto& t : dataset.trajectories) {
        if (dataset.is_composite(t.skill_id)) {
            pools.composite_pool.push_back(t);
        } else {
            pools.training.push_back(&t);
            pools.training_copy.push_back(t);
        }
    }
    for (const auto& comp : dataset.manifest.compositions) {
        std::vector<std::vector<const Trajectory*>> per_sub;
        for (const auto& id : comp.subskill_ids) {
            auto demos = dataset.demos_of(id);
            if (demos.empty())
                throw InvalidInput("dataset has no demonstrations of subskill '" + id + "'");
            per_sub.push_back(std::move(demos));
        }
        pools.subskill_demos.push_back(std::move(per_sub));
        pools.composite_demos.push_back(dataset.demos_of(comp.composite_id));
    }
    return pools;
}

// Shuffles each skill's demos and interleaves them round-robin so every
// batch of size >= n_skills sees every subskill.
std::vector<int> interleaved_order(const std::vector<Trajectory>& pool, Rng& rng) {
    std::map<std::string, std::vector<int>> by_skill;
    for (size_t i = 0; i < pool.size(); ++i)
        by_skill[pool[i].skill_id].push_back(static_cast<int>(i));
    std::vector<std::vector<int>> lists;
    for (auto& [_, idxs] : by_skill) {
        rng.shuffle(idxs);
        lists.push_back(idxs);
    }
    std::vector<int> order;
    order.reserve(pool.size());
    size_t k = 0;
    while (order.size() < pool.size()) {
        for (auto& lst : lists)
            if (k < lst.size()) order.push_back(lst[k]);
        ++k;
    }
    return order;
}

struct LossAverages {
    double loss = 0.0, action_nll = 0.0, state_nll = 0.0, kl = 0.0, mi = 0.0;
};

// Deterministic loss snapshot over the full training pool: same noise
// realization at every epoch so the logged curves are comparable.
LossAverages loss_snapshot(const ModelBundle& bundle, const EvalPools& pools,
                           const Dataset& dataset, const ObjectiveConfig& cfg,
                           std::uint64_t seed) {
    Rng noise(mix_seed(seed, 0x5eed));
    BatchLossEval ev =
        regularized_loss(bundle, pools.training_copy, dataset.manifest.compositions, cfg, noise,
                         /*with_grad=*/false, pools.composite_pool);
    LossAverages avg;
    const double n = std::max(1, ev.n_trajectories);
    avg.loss = ev.loss / n;
    avg.action_nll = ev.action_nll / n;
    avg.state_nll = ev.state_nll / n;
    avg.kl = ev.kl / n;
    avg.mi = ev.n_compositions > 0 ? ev.mi_term / ev.n_compositions : 0.0;
    return avg;
}

struct EvalMetrics {
    double mse_sum = 0.0, mse_encoded = 0.0, additivity = 0.0;
};

EvalMetrics eval_snapshot(const ModelBundle& bundle, const Dataset& dataset,
                          const EvalPools& pools) {
    EvalMetrics out;
    const auto& comps = dataset.manifest.compositions;
    if (comps.empty()) return out;
    for (size_t c = 0; c < comps.size(); ++c) {
        const auto& sub = pools.subskill_demos[c];
        const auto& cdemos = pools.composite_demos[c];
        if (cdemos.empty())
            throw InvalidInput("dataset has no composite demonstrations of '" +
                               comps[c].composite_id + "'");
        out.mse_sum +=
            eval_composite(bundle, comps[c], sub, cdemos, CompositeEmbedding::Sum).mse_mean;
        out.mse_encoded +=
            eval_composite(bundle, comps[c], sub, cdemos, CompositeEmbedding::Encode).mse_mean;
        double add_err = 0.0;
        for (size_t j = 0; j < cdemos.size(); ++j) {
            std::vector<const Trajectory*> one_each;
            for (const auto& demos : sub) one_each.push_back(demos[j % demos.size()]);
            add_err += additivity_error(bundle, comps[c], one_each, *cdemos[j]);
        }
        out.additivity += add_err / static_cast<double>(cdemos.size());
    }
    out.mse_sum /= static_cast<double>(comps.size());
    out.mse_encoded /= static_cast<double>(comps.size());
    out.additivity /= static_cast<double>(comps.size());
    return out;
}

}  // namespace

TrainResult train_single(const Dataset& dataset, const TrainConfig& train_config,
                         const ModelConfig& model_config, std::uint64_t seed) {
    train_config.validate();
    model_config.validate();
    dataset.manifest.validate();
    const ObjectiveConfig& cfg = train_config.objective_config;
    if (cfg.objective == Objective::RegVariational && !model_config.with_aux_posterior)
        throw ConfigError("reg_variational requires with_aux_posterior");

    EvalPools pools = split_dataset(dataset);
    if (pools.training_copy.empty()) throw InvalidInput("dataset has no subskill demonstrations");

    TrainResult result;
    result.bundle = init_parameters(model_config, seed);
    result.metrics.rows.reserve(static_cast<size_t>(train_config.epochs / train_config.eval_every + 2));

    const std::string run_id = to_string(cfg.objective) + "-s" + std::to_string(seed);
    auto emit_row = [&](int epoch) {
        const LossAverages avg = loss_snapshot(result.bundle, pools, dataset, cfg, seed);
        const EvalMetrics ev = eval_snapshot(result.bundle, dataset, pools);
        MetricsRow row;
        row.run_id = run_id;
        row.objective = to_string(cfg.objective);
        row.seed = seed;
        row.epoch = epoch;
        row.train_loss = avg.loss;
        row.action_nll = avg.action_nll;
        row.state_nll = avg.state_nll;
        row.kl = avg.kl;
        row.mi_term = avg.mi;
        row.eval_mse_sum_embedding = ev.mse_sum;
        row.eval_mse_encoded = ev.mse_encoded;
        row.additivity_error = ev.additivity;
        if (!std::isfinite(row.train_loss) || !std::isfinite(row.eval_mse_sum_embedding) ||
            !std::isfinite(row.eval_mse_encoded) || !std::isfinite(row.additivity_error))
            throw NumericalError("non-finite metrics at epoch " + std::to_string(epoch) +
                                 " (run " + run_id + ")");
        result.metrics.rows.push_back(std::move(row));
    };

    emit_row(0);

    Rng rng(mix_seed(seed, 0x7ea1));
    Adam adam(result.bundle.layout.total, train_config.learning_rate);
    const int n_pool = static_cast<int>(pools.training_copy.size());

    for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
        const std::vector<int> order = interleaved_order(pools.training_copy, rng);
        int batch_index = 0;
        for (int start = 0; start < n_pool; start += train_config.batch_size, ++batch_index) {
            const int len = std::min(train_config.batch_size, n_pool - start);
            std::vector<Trajectory> batch;
            batch.reserve(len);
            for (int i = 0; i < len; ++i) batch.push_back(pools.training_copy[order[start + i]]);

            BatchLossEval ev = regularized_loss(result.bundle, batch, dataset.manifest.compositions,
                                                cfg, rng, /*with_grad=*/true, pools.composite_pool);
            if (!std::isfinite(ev.loss) || !ev.grad.allFinite()) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << " batch " << batch_index
                    << " (run " << run_id << "): loss=" << ev.loss
                    << " action_nll=" << ev.action_nll << " state_nll=" << ev.state_nll
                    << " kl=" << ev.kl << " mi_term=" << ev.mi_term;
                throw NumericalError(msg.str());
            }
            const double gn = ev.grad.norm();
            if (gn > kGradClipNorm) ev.grad *= kGradClipNorm / gn;
            adam.step(result.bundle.params, ev.grad);
        }
        if (epoch % train_config.eval_every == 0 || epoch == train_config.epochs) emit_row(epoch);
    }
    return result;
}

std::vector<TrainResult> train(const Dataset& dataset, const TrainConfig& train_config,
                               const ModelConfig& model_config) {
    std::vector<TrainResult> results;
    results.reserve(train_config.seeds.size());
    for (std::uint64_t seed : train_config.seeds)
        results.push_back(train_single(dataset, train_config, model_config, seed));
    return results;
}

}  // namespace trajvae

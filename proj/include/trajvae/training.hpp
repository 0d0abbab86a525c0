#pragma once

#include <cstdint>
#include <vector>

#include "trajvae/evaluation.hpp"
#include "trajvae/model.hpp"
#include "trajvae/objectives.hpp"
#include "trajvae/synthdata.hpp"

namespace trajvae {

struct TrainConfig {
    ObjectiveConfig objective_config;
    int epochs = 200;
    int batch_size = 16;
    double learning_rate = 1e-3;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    int eval_every = 5;

    void validate() const {
        objective_config.validate();
        if (epochs < 0) throw InvalidInput("epochs must be >= 0");
        if (batch_size < 1) throw InvalidInput("batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw InvalidInput("learning_rate must be > 0");
        if (seeds.empty()) throw InvalidInput("seeds must be nonempty");
        if (eval_every < 1) throw InvalidInput("eval_every must be >= 1");
    }
};

struct TrainResult {
    ModelBundle bundle;
    RunMetrics metrics;
};

// One run per seed: ELBO batches over the subskill demonstrations, the MI
// regularizer over the manifest's compositions, Adam updates with gradient
// clipping, metrics rows at epoch 0 / every eval_every epochs / the final
// epoch. Bit-reproducible given (dataset, configs, seed).
std::vector<TrainResult> train(const Dataset& dataset, const TrainConfig& train_config,
                               const ModelConfig& model_config);

TrainResult train_single(const Dataset& dataset, const TrainConfig& train_config,
                         const ModelConfig& model_config, std::uint64_t seed);

}  // namespace trajvae

#pragma once

#include <span>
#include <string>
#include <vector>

#include "trajvae/model.hpp"
#include "trajvae/objectives.hpp"
#include "trajvae/types.hpp"

namespace trajvae {

// Mean over all T x d_state entries of squared differences.
double state_mse(const GeneratedTrajectory& generated, const Trajectory& demo);

struct MseStats {
    double mse_mean = 0.0;
    double mse_std = 0.0;  // population std over demos
};

// Per composite demo: build the conditioning latent from posterior means
// (sum mode pairs composite demo j with subskill demo j mod count), run a
// mean-mode rollout from the demo's first state for the demo's length, and
// score against the demo.
MseStats eval_composite(const ModelBundle& bundle, const CompositionSpec& comp,
                        std::span<const std::vector<const Trajectory*>> subskill_demos,
                        std::span<const Trajectory* const> composite_demos,
                        CompositeEmbedding mode);

// || mean(encode(composite)) - sum_i mean(encode(subskill_i)) ||_2
double additivity_error(const ModelBundle& bundle, const CompositionSpec& comp,
                        std::span<const Trajectory* const> subskill_demos,
                        const Trajectory& composite_demo);

// ----- run aggregation -----

struct MetricsRow {
    std::string run_id;
    std::string objective;
    std::uint64_t seed = 0;
    int epoch = 0;
    double train_loss = 0.0;
    double action_nll = 0.0;
    double state_nll = 0.0;
    double kl = 0.0;
    double mi_term = 0.0;
    double eval_mse_sum_embedding = 0.0;
    double eval_mse_encoded = 0.0;
    double additivity_error = 0.0;
};

struct RunMetrics {
    std::vector<MetricsRow> rows;
};

extern const std::vector<std::string> kMetricNames;  // numeric metric columns, CSV order

void write_metrics_csv(const std::string& path, const RunMetrics& metrics);
RunMetrics read_metrics_csv(const std::string& path);

struct AggregateRow {
    std::string objective;
    int epoch = 0;
    std::string metric;
    double mean = 0.0;
    double std = 0.0;  // population std over seeds
    int n_seeds = 0;
};

// Groups rows by (objective, epoch), averages each metric over seeds.
// Output order is (objective, epoch, metric-column order), independent of
// input order.
std::vector<AggregateRow> compare_runs(const std::vector<RunMetrics>& runs);

void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows);

}  // namespace trajvae

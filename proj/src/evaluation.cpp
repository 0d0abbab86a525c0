#include "trajvae/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "trajvae/fmt_util.hpp"

namespace trajvae {

double state_mse(const GeneratedTrajectory& generated, const Trajectory& demo) {
    if (generated.states.rows() != demo.states.rows() ||
        generated.states.cols() != demo.states.cols())
        throw InvalidInput("state_mse: shape mismatch between generated and demo states");
    return (generated.states - demo.states).array().square().mean();
}

MseStats eval_composite(const ModelBundle& bundle, const CompositionSpec& comp,
                        std::span<const std::vector<const Trajectory*>> subskill_demos,
                        std::span<const Trajectory* const> composite_demos,
                        CompositeEmbedding mode) {
    comp.validate();
    if (composite_demos.empty()) throw InvalidInput("eval_composite: no composite demos");
    if (mode == CompositeEmbedding::Sum) {
        if (subskill_demos.size() != comp.subskill_ids.size())
            throw InvalidInput("eval_composite: need one demo list per subskill");
        for (const auto& demos : subskill_demos)
            if (demos.empty()) throw InvalidInput("eval_composite: empty subskill demo list");
    }

    std::vector<double> mses;
    mses.reserve(composite_demos.size());
    Rng unused(0);
    for (size_t j = 0; j < composite_demos.size(); ++j) {
        const Trajectory& cdemo = *composite_demos[j];
        Eigen::VectorXd z = Eigen::VectorXd::Zero(bundle.config.d_latent);
        if (mode == CompositeEmbedding::Sum) {
            for (const auto& demos : subskill_demos)
                z += encode(bundle, demos[j % demos.size()]->states).mean;
        } else {
            z = encode(bundle, cdemo.states).mean;
        }
        GeneratedTrajectory gen = rollout(bundle, z, cdemo.states.row(0).transpose(),
                                          cdemo.length(), RolloutMode::Mean, unused);
        mses.push_back(state_mse(gen, cdemo));
    }
    MseStats out;
    for (double m : mses) out.mse_mean += m;
    out.mse_mean /= static_cast<double>(mses.size());
    double sq = 0.0;
    for (double m : mses) sq += (m - out.mse_mean) * (m - out.mse_mean);
    out.mse_std = std::sqrt(sq / static_cast<double>(mses.size()));
    return out;
}

double additivity_error(const ModelBundle& bundle, const CompositionSpec& comp,
                        std::span<const Trajectory* const> subskill_demos,
                        const Trajectory& composite_demo) {
    comp.validate();
    if (subskill_demos.size() != comp.subskill_ids.size())
        throw InvalidInput("additivity_error: need exactly one demo per subskill");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(bundle.config.d_latent);
    for (const Trajectory* demo : subskill_demos) sum += encode(bundle, demo->states).mean;
    return (encode(bundle, composite_demo.states).mean - sum).norm();
}

// ----- metrics CSV -----

const std::vector<std::string> kMetricNames = {
    "train_loss", "action_nll", "state_nll", "kl", "mi_term",
    "eval_mse_sum_embedding", "eval_mse_encoded", "additivity_error"};

namespace {
const char* kHeader =
    "run_id,objective,seed,epoch,train_loss,action_nll,state_nll,kl,mi_term,"
    "eval_mse_sum_embedding,eval_mse_encoded,additivity_error";

double metric_of(const MetricsRow& r, const std::string& name) {
    if (name == "train_loss") return r.train_loss;
    if (name == "action_nll") return r.action_nll;
    if (name == "state_nll") return r.state_nll;
    if (name == "kl") return r.kl;
    if (name == "mi_term") return r.mi_term;
    if (name == "eval_mse_sum_embedding") return r.eval_mse_sum_embedding;
    if (name == "eval_mse_encoded") return r.eval_mse_encoded;
    if (name == "additivity_error") return r.additivity_error;
    throw InvalidInput("unknown metric: " + name);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}
}  // namespace

void write_metrics_csv(const std::string& path, const RunMetrics& metrics) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open metrics file for writing: " + path);
    out << kHeader << "\n";
    for (const auto& r : metrics.rows) {
        out << r.run_id << ',' << r.objective << ',' << r.seed << ',' << r.epoch << ','
            << format_double(r.train_loss) << ',' << format_double(r.action_nll) << ','
            << format_double(r.state_nll) << ',' << format_double(r.kl) << ','
            << format_double(r.mi_term) << ',' << format_double(r.eval_mse_sum_embedding) << ','
            << format_double(r.eval_mse_encoded) << ',' << format_double(r.additivity_error)
            << "\n";
    }
}

RunMetrics read_metrics_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open metrics file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("metrics file is empty: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kHeader)
        throw ValidationError("metrics file header does not match the expected schema: " + path);

    RunMetrics metrics;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 12)
            throw ValidationError(path + ":" + std::to_string(lineno) + ": expected 12 columns");
        MetricsRow r;
        try {
            r.run_id = fields[0];
            r.objective = fields[1];
            r.seed = std::stoull(fields[2]);
            r.epoch = std::stoi(fields[3]);
            r.train_loss = parse_double(fields[4]);
            r.action_nll = parse_double(fields[5]);
            r.state_nll = parse_double(fields[6]);
            r.kl = parse_double(fields[7]);
            r.mi_term = parse_double(fields[8]);
            r.eval_mse_sum_embedding = parse_double(fields[9]);
            r.eval_mse_encoded = parse_double(fields[10]);
            r.additivity_error = parse_double(fields[11]);
        } catch (const std::exception& e) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        metrics.rows.push_back(std::move(r));
    }
    return metrics;
}

std::vector<AggregateRow> compare_runs(const std::vector<RunMetrics>& runs) {
    if (runs.empty()) throw InvalidInput("compare_runs: no runs given");
    std::vector<MetricsRow> all;
    for (const auto& run : runs)
        all.insert(all.end(), run.rows.begin(), run.rows.end());
    // canonical order makes aggregation independent of input file order
    std::sort(all.begin(), all.end(), [](const MetricsRow& a, const MetricsRow& b) {
        if (a.objective != b.objective) return a.objective < b.objective;
        if (a.epoch != b.epoch) return a.epoch < b.epoch;
        return a.seed < b.seed;
    });

    std::vector<AggregateRow> out;
    size_t i = 0;
    while (i < all.size()) {
        size_t j = i;
        while (j < all.size() && all[j].objective == all[i].objective && all[j].epoch == all[i].epoch)
            ++j;
        const int n = static_cast<int>(j - i);
        for (const auto& metric : kMetricNames) {
            AggregateRow row;
            row.objective = all[i].objective;
            row.epoch = all[i].epoch;
            row.metric = metric;
            row.n_seeds = n;
            for (size_t k = i; k < j; ++k) row.mean += metric_of(all[k], metric);
            row.mean /= n;
            double sq = 0.0;
            for (size_t k = i; k < j; ++k) {
                const double d = metric_of(all[k], metric) - row.mean;
                sq += d * d;
            }
            row.std = std::sqrt(sq / n);
            out.push_back(std::move(row));
        }
        i = j;
    }
    return out;
}

void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open aggregate file for writing: " + path);
    out << "objective,epoch,metric,mean,std,n_seeds\n";
    for (const auto& r : rows)
        out << r.objective << ',' << r.epoch << ',' << r.metric << ',' << format_double(r.mean)
            << ',' << format_double(r.std) << ',' << r.n_seeds << "\n";
}

}  // namespace trajvae

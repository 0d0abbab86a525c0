#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "trajvae/gaussian.hpp"
#include "trajvae/graph.hpp"
#include "trajvae/params.hpp"
#include "trajvae/rng.hpp"
#include "trajvae/types.hpp"

namespace trajvae {

enum class DynamicsArch { Mlp, CausalConv };

std::string to_string(DynamicsArch a);
DynamicsArch dynamics_arch_from_string(const std::string& s);

struct ModelConfig {
    int d_state = 2;
    int d_action = 2;
    int d_latent = 4;
    int encoder_hidden = 32;  // BiLSTM hidden size per direction; decoder MLP width
    int attention_dim = 16;
    DynamicsArch dynamics_arch = DynamicsArch::Mlp;
    int mixture_components = 1;  // K
    double log_std_min = -5.0;
    double log_std_max = 2.0;
    bool with_aux_posterior = true;

    void validate() const;
};

struct ModelBundle {
    ModelConfig config;
    ParamLayout layout;
    Eigen::VectorXd params;  // flat, layout order
    int format_version = 1;
    std::uint64_t seed = 0;

    Eigen::Map<const Eigen::MatrixXd> segment(std::string_view name) const {
        const auto& e = layout.entries[layout.find(name)];
        return {params.data() + e.offset, e.rows, e.cols};
    }
    bool has_aux() const { return layout.has("aux.fwd.W"); }
};

// Deterministic layout for a config; aux encoder segments included when
// config.with_aux_posterior is set.
ParamLayout build_layout(const ModelConfig& config);

struct GeneratedTrajectory {
    Eigen::MatrixXd states;   // T x d_state
    Eigen::MatrixXd actions;  // T x d_action
    Eigen::VectorXd conditioning_latent;
};

enum class RolloutMode { Stochastic, Mean };

// ----- plain (value-level) model operations -----

DiagGaussian encode(const ModelBundle& bundle, const Eigen::MatrixXd& states);

struct AttentionParams {
    Eigen::MatrixXd W;  // attention_dim x feature_dim
    Eigen::VectorXd b;  // attention_dim
    Eigen::VectorXd v;  // attention_dim
};
AttentionParams encoder_attention(const ModelBundle& bundle);

struct PooledFeatures {
    Eigen::VectorXd pooled;
    Eigen::VectorXd weights;  // simplex over timesteps
};
PooledFeatures attention_pool(const Eigen::MatrixXd& step_features, const AttentionParams& params);

Eigen::VectorXd sample_latent(const DiagGaussian& g, const Eigen::VectorXd& noise);

double policy_logprob(const ModelBundle& bundle, const Eigen::VectorXd& z,
                      const Eigen::VectorXd& s_t, const Eigen::VectorXd& a_t);
Eigen::VectorXd policy_logprob_batch(const ModelBundle& bundle, const Eigen::VectorXd& z,
                                     const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions);

double dynamics_logprob(const ModelBundle& bundle, const Eigen::VectorXd& z,
                        const Eigen::VectorXd& s_t, const Eigen::VectorXd& s_next);

GeneratedTrajectory rollout(const ModelBundle& bundle, const Eigen::VectorXd& z,
                            const Eigen::VectorXd& s_1, int T, RolloutMode mode, Rng& noise);

DiagGaussian aux_posterior(const ModelBundle& bundle, const GeneratedTrajectory& traj);

// ----- graph (differentiable) model operations -----

// Binds a bundle's parameter segments to a tape, creating one leaf per
// segment on first use, so gradients from any number of loss terms sharing
// the tape accumulate into the same leaves.
class BoundModel {
public:
    BoundModel(graph::Tape& tape, const ModelBundle& bundle)
        : tape_(&tape), bundle_(&bundle), seg_nodes_(bundle.layout.entries.size(), -1) {}

    graph::Tape& tape() const { return *tape_; }
    const ModelBundle& bundle() const { return *bundle_; }
    const ModelConfig& config() const { return bundle_->config; }

    graph::Var seg(std::string_view name);
    const ParamLayout::Entry& entry(std::string_view name) const {
        return bundle_->layout.entries[bundle_->layout.find(name)];
    }

    // After backward(): adds d(loss)/d(segment) into a flat gradient vector.
    void accumulate_grads(Eigen::VectorXd& flat_grad) const;

private:
    graph::Tape* tape_;
    const ModelBundle* bundle_;
    std::vector<int> seg_nodes_;
};

struct EncodeOut {
    graph::Var mean;
    graph::Var log_std;
    graph::Var attn_weights;
};

// prefix is "enc" for the main encoder or "aux" for the auxiliary posterior.
EncodeOut encode_g(BoundModel& bm, std::span<const graph::Var> state_steps,
                   const std::string& prefix = "enc");
EncodeOut encode_g(BoundModel& bm, const Eigen::MatrixXd& states,
                   const std::string& prefix = "enc");

struct PolicyHead {
    graph::Var mean;
    graph::Var log_std;
};
PolicyHead policy_head_g(BoundModel& bm, graph::Var s, graph::Var z);
graph::Var policy_logprob_g(BoundModel& bm, graph::Var z, graph::Var s, graph::Var a);

struct DynamicsHead {
    graph::Var logits;               // K
    std::vector<graph::Var> means;   // K entries, each d_state (s_t + residual)
    std::vector<graph::Var> log_stds;
    std::vector<graph::Var> deltas;  // residuals, for mean-mode mixing
};
DynamicsHead dynamics_head_g(BoundModel& bm, graph::Var s, graph::Var z);
graph::Var dynamics_logprob_g(BoundModel& bm, graph::Var z, graph::Var s, graph::Var s_next);

struct RolloutOut {
    std::vector<graph::Var> states;   // T entries
    std::vector<graph::Var> actions;  // T entries
};
RolloutOut rollout_g(BoundModel& bm, graph::Var z, const Eigen::VectorXd& s_1, int T,
                     RolloutMode mode, Rng& noise);

// ----- initialization -----

// Deterministic parameter initialization. Output heads (encoder mean/log-std,
// policy output, dynamics output, aux heads) start at zero so the encoder
// posterior is exactly standard normal and mean-mode rollouts repeat s_1.
ModelBundle init_parameters(const ModelConfig& config, std::uint64_t seed);

}  // namespace trajvae

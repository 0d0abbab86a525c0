#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trajvae/gaussian.hpp"
#include "trajvae/model.hpp"
#include "trajvae/rng.hpp"
#include "trajvae/types.hpp"

namespace trajvae {

enum class Objective { Original, RegVariational, RegNonvariational };
enum class MiSampling { AsWritten, Cross };
enum class CompositeEmbedding { Sum, Encode };

std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);
std::string to_string(MiSampling m);
MiSampling mi_sampling_from_string(const std::string& s);
std::string to_string(CompositeEmbedding m);
CompositeEmbedding composite_embedding_from_string(const std::string& s);

struct ObjectiveConfig {
    Objective objective = Objective::Original;
    double lambda = 0.1;
    int n_mc = 8;  // N in the sample estimator
    MiSampling mi_sampling = MiSampling::AsWritten;
    CompositeEmbedding composite_embedding = CompositeEmbedding::Sum;
    int rollout_T = 50;

    void validate() const {
        if (lambda < 0.0) throw InvalidInput("lambda must be >= 0");
        if (n_mc < 1) throw InvalidInput("n_mc must be >= 1");
        if (rollout_T < 1) throw InvalidInput("rollout_T must be >= 1");
    }
};

struct LossComponents {
    double loss = 0.0;
    double action_nll = 0.0;
    double state_nll = 0.0;
    double kl = 0.0;
};

// Negative ELBO for one trajectory with a single reparameterized latent draw.
// Dynamics term is teacher-forced and summed over t = 1..T-1.
LossComponents elbo_loss(const ModelBundle& bundle, const Trajectory& traj, Rng& noise);

// Sum-of-subskill-posteriors distribution of V.
DiagGaussian build_V(const ModelBundle& bundle, const std::vector<Trajectory>& subskill_demos);

// Conditioning latent for a composite: sum of sampled subskill embeddings, or
// a sample from the encoded composite demonstration.
Eigen::VectorXd make_composite_latent(const ModelBundle& bundle, const CompositionSpec& comp,
                                      const std::vector<Trajectory>& subskill_demos,
                                      const Trajectory* composite_demo, CompositeEmbedding mode,
                                      Rng& noise);

// Single-sample variational MI lower bound: log Q_alpha(v | gen) + H(V).
// v is *v_sample when given (the latent that generated gen), otherwise a
// fresh reparameterized draw from V_dist.
double mi_variational_bound(const ModelBundle& bundle, const DiagGaussian& V_dist,
                            const GeneratedTrajectory& gen, Rng& noise,
                            const Eigen::VectorXd* v_sample = nullptr);

// Sample-based MI lower bound: H(V) + (1/N) sum_{n,i} log q_phi(z_{n,i} | gen).
// as_written draws z_{n,i} from q_phi(.|gen) itself; cross draws from the
// provided subskill posteriors.
double mi_sample_bound(const ModelBundle& bundle, const DiagGaussian& V_dist,
                       const GeneratedTrajectory& gen, int M, int n_mc, MiSampling mi_sampling,
                       Rng& noise,
                       const std::vector<DiagGaussian>* subskill_posteriors = nullptr);

struct BatchLossEval {
    double loss = 0.0;        // sum of per-trajectory ELBO losses - lambda * mi_term
    double action_nll = 0.0;  // sums over the batch
    double state_nll = 0.0;
    double kl = 0.0;
    double mi_term = 0.0;  // sum of MI bounds over compositions (0 for original)
    int n_trajectories = 0;
    int n_compositions = 0;
    Eigen::VectorXd grad;  // d(loss)/d(params), filled when with_grad
};

// Full training objective over a batch. The regularizer picks one demo per
// subskill per composition from the batch via noise; composite_pool supplies
// composite demonstrations for encode-mode conditioning.
BatchLossEval regularized_loss(const ModelBundle& bundle, std::span<const Trajectory> batch,
                               std::span<const CompositionSpec> compositions,
                               const ObjectiveConfig& cfg, Rng& noise, bool with_grad = false,
                               std::span<const Trajectory> composite_pool = {});

}  // namespace trajvae

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace trajvae {

// Diagonal Gaussian over the latent space. std is stored directly (not as
// log-std); conversion from network outputs happens in the model layer.
struct DiagGaussian {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;

    int dim() const { return static_cast<int>(mean.size()); }
    void validate() const;
};

// Differential entropy in nats: sum_j 1/2 (1 + ln(2 pi std_j^2)).
double gaussian_entropy(const DiagGaussian& g);

// Distribution of the sum of independent diagonal Gaussians:
// means add, variances add.
DiagGaussian sum_gaussians(const std::vector<DiagGaussian>& parts);

// Log-density at x in nats.
double log_density(const DiagGaussian& g, const Eigen::VectorXd& x);

// KL(g || N(0, I)) in nats; always >= 0.
double kl_to_standard_normal(const DiagGaussian& g);

// Monte-Carlo entropy estimate: -(1/n) sum log_density(g, x_k), x_k ~ g.
// Deterministic given the seed.
double mc_entropy_estimate(const DiagGaussian& g, std::int64_t n_samples, std::uint64_t seed);

}  // namespace trajvae

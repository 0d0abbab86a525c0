#include "trajvae/gaussian.hpp"

#include <cmath>

#include "trajvae/errors.hpp"
#include "trajvae/rng.hpp"

namespace trajvae {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)
}

void DiagGaussian::validate() const {
    if (mean.size() != std.size())
        throw InvalidInput("DiagGaussian mean/std length mismatch");
    if (mean.size() == 0) throw InvalidInput("DiagGaussian must have d_z >= 1");
    if (!mean.allFinite()) throw InvalidInput("DiagGaussian mean is not finite");
    for (int j = 0; j < std.size(); ++j)
        if (!(std[j] > 0.0) || !std::isfinite(std[j]))
            throw InvalidInput("DiagGaussian std must be positive and finite");
}

double gaussian_entropy(const DiagGaussian& g) {
    g.validate();
    double h = 0.0;
    for (int j = 0; j < g.std.size(); ++j)
        h += 0.5 * (1.0 + kLog2Pi + 2.0 * std::log(g.std[j]));
    return h;
}

DiagGaussian sum_gaussians(const std::vector<DiagGaussian>& parts) {
    if (parts.empty()) throw InvalidInput("sum_gaussians requires M >= 1 parts");
    parts[0].validate();
    DiagGaussian out;
    out.mean = parts[0].mean;
    Eigen::VectorXd var = parts[0].std.array().square();
    for (size_t i = 1; i < parts.size(); ++i) {
        parts[i].validate();
        if (parts[i].dim() != out.dim())
            throw InvalidInput("sum_gaussians parts have mismatched dimensions");
        out.mean += parts[i].mean;
        var.array() += parts[i].std.array().square();
    }
    out.std = var.array().sqrt();
    return out;
}

double log_density(const DiagGaussian& g, const Eigen::VectorXd& x) {
    g.validate();
    if (x.size() != g.mean.size())
        throw InvalidInput("log_density: x has wrong dimension");
    double lp = 0.0;
    for (int j = 0; j < x.size(); ++j) {
        const double r = (x[j] - g.mean[j]) / g.std[j];
        lp += -0.5 * kLog2Pi - std::log(g.std[j]) - 0.5 * r * r;
    }
    return lp;
}

double kl_to_standard_normal(const DiagGaussian& g) {
    g.validate();
    double kl = 0.0;
    for (int j = 0; j < g.mean.size(); ++j) {
        const double v = g.std[j] * g.std[j];
        kl += 0.5 * (v + g.mean[j] * g.mean[j] - 1.0) - std::log(g.std[j]);
    }
    return kl;
}

double mc_entropy_estimate(const DiagGaussian& g, std::int64_t n_samples, std::uint64_t seed) {
    g.validate();
    if (n_samples < 1) throw InvalidInput("mc_entropy_estimate requires n_samples >= 1");
    Rng rng(seed);
    const int d = g.dim();
    double acc = 0.0;
    Eigen::VectorXd x(d);
    for (std::int64_t k = 0; k < n_samples; ++k) {
        for (int j = 0; j < d; ++j) x[j] = g.mean[j] + g.std[j] * rng.normal();
        double lp = 0.0;
        for (int j = 0; j < d; ++j) {
            const double r = (x[j] - g.mean[j]) / g.std[j];
            lp += -0.5 * kLog2Pi - std::log(g.std[j]) - 0.5 * r * r;
        }
        acc += lp;
    }
    return -acc / static_cast<double>(n_samples);
}

}  // namespace trajvae

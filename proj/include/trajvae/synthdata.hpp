#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "trajvae/types.hpp"

namespace trajvae {

struct PointMassConfig {
    double dt = 0.05;
    int T = 50;
    double obs_noise_std = 0.01;
    // demos start uniformly in [-start_box, start_box]^2 so that skills
    // overlap in state space and the latent must carry the skill identity
    double start_box = 1.0;
    static constexpr int d_state = 2;   // (x, y)
    static constexpr int d_action = 2;  // commanded velocity

    void validate() const {
        if (!(dt > 0.0)) throw InvalidInput("dt must be > 0");
        if (T < 1) throw InvalidInput("T must be >= 1");
        if (obs_noise_std < 0.0) throw InvalidInput("obs_noise_std must be >= 0");
        if (start_box < 0.0) throw InvalidInput("start_box must be >= 0");
    }
};

// Scripted controller: commanded velocity as a function of time (and, in
// principle, state; the built-in fields are time-only).
struct VelocityField {
    enum class Kind { Constant, Sinusoid };
    Kind kind = Kind::Constant;
    double vx = 0.0, vy = 0.0;                      // constant
    int axis = 0;                                   // sinusoid: 0 = x, 1 = y
    double amplitude = 0.0, frequency = 0.0;        // sinusoid: a(t) = A sin(2 pi f t)

    static VelocityField constant(double vx, double vy);
    static VelocityField sinusoid(int axis, double amplitude, double frequency);

    Eigen::Vector2d eval(int step_index, double dt) const;
    void validate() const;
};

struct SubskillSpec {
    std::string skill_id;
    VelocityField velocity_field;
};

struct DatasetManifest {
    int format_version = 1;
    std::vector<SubskillSpec> subskills;
    std::vector<CompositionSpec> compositions;
    int demos_per_skill = 10;
    std::uint64_t seed = 0;
    PointMassConfig sim;

    void validate() const;
    const SubskillSpec& subskill(const std::string& id) const;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Trajectory> trajectories;

    std::vector<const Trajectory*> demos_of(const std::string& skill_id) const;
    bool is_composite(const std::string& skill_id) const;
};

// Euler integration of the summed velocity fields with additive Gaussian
// process noise; deterministic given the seed.
Trajectory simulate(const PointMassConfig& config, const std::vector<VelocityField>& controller,
                    const Eigen::Vector2d& s_1, std::uint64_t seed);

// demos_per_skill trajectories per subskill and per composite (composite
// controller = sum of its subskills' fields). Pure function of the manifest.
Dataset generate_dataset(const DatasetManifest& manifest);

// Built-in manifests: "diag_wiggle" (3 subskills + 1 composite, the default)
// and "diag" (2 subskills + 1 composite).
DatasetManifest default_manifest(const std::string& preset = "diag_wiggle");

// ----- on-disk formats -----
std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

void write_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace trajvae

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "trajvae/checkpoint.hpp"
#include "trajvae/evaluation.hpp"
#include "trajvae/gaussian.hpp"
#include "trajvae/objectives.hpp"
#include "trajvae/synthdata.hpp"
#include "trajvae/training.hpp"

namespace py = pybind11;
using namespace trajvae;

namespace {

Trajectory make_trajectory(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                           const std::string& skill_id) {
    Trajectory t{states, actions, skill_id};
    t.validate();
    return t;
}

ObjectiveConfig objective_config_from_kwargs(const std::string& objective, double lambda, int n_mc,
                                             const std::string& mi_sampling,
                                             const std::string& composite_embedding, int rollout_T) {
    ObjectiveConfig cfg;
    cfg.objective = objective_from_string(objective);
    cfg.lambda = lambda;
    cfg.n_mc = n_mc;
    cfg.mi_sampling = mi_sampling_from_string(mi_sampling);
    cfg.composite_embedding = composite_embedding_from_string(composite_embedding);
    cfg.rollout_T = rollout_T;
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(trajvae, m) {
    m.doc() = "trajectory CVAE with compositional latent-space regularizers";

    py::register_exception<InvalidInput>(m, "InvalidInputError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigurationError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "SchemaError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    // ----- latent math -----
    py::class_<DiagGaussian>(m, "DiagGaussian")
        .def(py::init([](Eigen::VectorXd mean, Eigen::VectorXd std) {
                 DiagGaussian g{std::move(mean), std::move(std)};
                 g.validate();
                 return g;
             }),
             py::arg("mean"), py::arg("std"))
        .def_readonly("mean", &DiagGaussian::mean)
        .def_readonly("std", &DiagGaussian::std)
        .def_property_readonly("dim", &DiagGaussian::dim)
        .def("__repr__", [](const DiagGaussian& g) {
            return "DiagGaussian(d=" + std::to_string(g.dim()) + ")";
        });

    m.def("gaussian_entropy", &gaussian_entropy, py::arg("g"));
    m.def("sum_gaussians", &sum_gaussians, py::arg("parts"));
    m.def("log_density", &log_density, py::arg("g"), py::arg("x"));
    m.def("kl_to_standard_normal", &kl_to_standard_normal, py::arg("g"));
    m.def("mc_entropy_estimate", &mc_entropy_estimate, py::arg("g"), py::arg("n_samples"),
          py::arg("seed"));

    // ----- data -----
    py::class_<Trajectory>(m, "Trajectory")
        .def(py::init(&make_trajectory), py::arg("states"), py::arg("actions"),
             py::arg("skill_id") = "")
        .def_readonly("states", &Trajectory::states)
        .def_readonly("actions", &Trajectory::actions)
        .def_readonly("skill_id", &Trajectory::skill_id)
        .def_property_readonly("T", &Trajectory::length);

    py::class_<CompositionSpec>(m, "CompositionSpec")
        .def(py::init([](std::string composite_id, std::vector<std::string> subskill_ids) {
                 CompositionSpec c{std::move(composite_id), std::move(subskill_ids)};
                 c.validate();
                 return c;
             }),
             py::arg("composite_id"), py::arg("subskill_ids"))
        .def_readonly("composite_id", &CompositionSpec::composite_id)
        .def_readonly("subskill_ids", &CompositionSpec::subskill_ids);

    py::class_<PointMassConfig>(m, "PointMassConfig")
        .def_readwrite("dt", &PointMassConfig::dt)
        .def_readwrite("T", &PointMassConfig::T)
        .def_readwrite("obs_noise_std", &PointMassConfig::obs_noise_std)
        .def_readwrite("start_box", &PointMassConfig::start_box);

    py::class_<DatasetManifest>(m, "DatasetManifest")
        .def_static("preset", &default_manifest, py::arg("name") = "diag_wiggle")
        .def_static("from_json", &manifest_from_json, py::arg("text"))
        .def("to_json", &manifest_to_json)
        .def_readwrite("demos_per_skill", &DatasetManifest::demos_per_skill)
        .def_readwrite("seed", &DatasetManifest::seed)
        .def_readwrite("sim", &DatasetManifest::sim)
        .def_readonly("compositions", &DatasetManifest::compositions);

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("manifest", &Dataset::manifest)
        .def_readonly("trajectories", &Dataset::trajectories)
        .def("skills", [](const Dataset& ds) {
            std::vector<std::string> out;
            for (const auto& t : ds.trajectories)
                if (std::find(out.begin(), out.end(), t.skill_id) == out.end())
                    out.push_back(t.skill_id);
            return out;
        });

    m.def("generate_dataset", &generate_dataset, py::arg("manifest"));
    m.def("write_dataset", &write_dataset, py::arg("dataset"), py::arg("dir"));
    m.def("load_dataset", &load_dataset, py::arg("dir"));

    // ----- model -----
    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init([](int d_state, int d_action, int d_latent, int encoder_hidden,
                         int attention_dim, const std::string& dynamics_arch,
                         int mixture_components) {
                 ModelConfig c;
                 c.d_state = d_state;
                 c.d_action = d_action;
                 c.d_latent = d_latent;
                 c.encoder_hidden = encoder_hidden;
                 c.attention_dim = attention_dim;
                 c.dynamics_arch = dynamics_arch_from_string(dynamics_arch);
                 c.mixture_components = mixture_components;
                 c.validate();
                 return c;
             }),
             py::arg("d_state") = 2, py::arg("d_action") = 2, py::arg("d_latent") = 4,
             py::arg("encoder_hidden") = 32, py::arg("attention_dim") = 16,
             py::arg("dynamics_arch") = "mlp", py::arg("mixture_components") = 1)
        .def_readonly("d_state", &ModelConfig::d_state)
        .def_readonly("d_action", &ModelConfig::d_action)
        .def_readonly("d_latent", &ModelConfig::d_latent);

    py::class_<ModelBundle>(m, "ModelBundle")
        .def_readonly("config", &ModelBundle::config)
        .def_readonly("seed", &ModelBundle::seed)
        .def_property_readonly("n_params",
                               [](const ModelBundle& b) { return b.layout.total; });

    py::class_<GeneratedTrajectory>(m, "GeneratedTrajectory")
        .def(py::init([](Eigen::MatrixXd states, Eigen::MatrixXd actions, Eigen::VectorXd z) {
                 return GeneratedTrajectory{std::move(states), std::move(actions), std::move(z)};
             }),
             py::arg("states"), py::arg("actions"), py::arg("conditioning_latent"))
        .def_readonly("states", &GeneratedTrajectory::states)
        .def_readonly("actions", &GeneratedTrajectory::actions)
        .def_readonly("conditioning_latent", &GeneratedTrajectory::conditioning_latent);

    m.def("init_parameters", &init_parameters, py::arg("config"), py::arg("seed"));
    m.def("encode", &encode, py::arg("bundle"), py::arg("states"));
    m.def(
        "sample_latent",
        [](const DiagGaussian& g, const Eigen::VectorXd& noise) { return sample_latent(g, noise); },
        py::arg("g"), py::arg("noise"));
    m.def(
        "rollout",
        [](const ModelBundle& bundle, const Eigen::VectorXd& z, const Eigen::VectorXd& s_1, int T,
           const std::string& mode, std::uint64_t seed) {
            Rng rng(seed);
            return rollout(bundle, z, s_1, T,
                           mode == "mean" ? RolloutMode::Mean : RolloutMode::Stochastic, rng);
        },
        py::arg("bundle"), py::arg("z"), py::arg("s_1"), py::arg("T"), py::arg("mode") = "mean",
        py::arg("seed") = 0);
    m.def("policy_logprob", &policy_logprob, py::arg("bundle"), py::arg("z"), py::arg("s_t"),
          py::arg("a_t"));
    m.def("dynamics_logprob", &dynamics_logprob, py::arg("bundle"), py::arg("z"), py::arg("s_t"),
          py::arg("s_next"));
    m.def("aux_posterior", &aux_posterior, py::arg("bundle"), py::arg("traj"));

    // ----- objectives -----
    m.def(
        "elbo_loss",
        [](const ModelBundle& bundle, const Trajectory& traj, std::uint64_t seed) {
            Rng rng(seed);
            LossComponents c = elbo_loss(bundle, traj, rng);
            return py::dict(py::arg("loss") = c.loss, py::arg("action_nll") = c.action_nll,
                            py::arg("state_nll") = c.state_nll, py::arg("kl") = c.kl);
        },
        py::arg("bundle"), py::arg("traj"), py::arg("seed") = 0);
    m.def(
        "build_V",
        [](const ModelBundle& bundle, const std::vector<Trajectory>& demos) {
            return build_V(bundle, demos);
        },
        py::arg("bundle"), py::arg("subskill_demos"));
    m.def(
        "mi_variational_bound",
        [](const ModelBundle& bundle, const DiagGaussian& V, const GeneratedTrajectory& gen,
           std::uint64_t seed) {
            Rng rng(seed);
            return mi_variational_bound(bundle, V, gen, rng);
        },
        py::arg("bundle"), py::arg("V_dist"), py::arg("gen"), py::arg("seed") = 0);
    m.def(
        "mi_sample_bound",
        [](const ModelBundle& bundle, const DiagGaussian& V, const GeneratedTrajectory& gen, int M,
           int n_mc, const std::string& mi_sampling, std::uint64_t seed) {
            Rng rng(seed);
            return mi_sample_bound(bundle, V, gen, M, n_mc,
                                   mi_sampling_from_string(mi_sampling), rng);
        },
        py::arg("bundle"), py::arg("V_dist"), py::arg("gen"), py::arg("M"), py::arg("n_mc") = 8,
        py::arg("mi_sampling") = "as_written", py::arg("seed") = 0);

    // ----- training / evaluation -----
    m.def(
        "train",
        [](const Dataset& dataset, const std::string& objective, double lambda, int epochs,
           int batch_size, double learning_rate, std::vector<std::uint64_t> seeds, int eval_every,
           int n_mc, const std::string& mi_sampling, const std::string& composite_embedding,
           int rollout_T, const ModelConfig& model_config) {
            TrainConfig tc;
            tc.objective_config = objective_config_from_kwargs(objective, lambda, n_mc, mi_sampling,
                                                               composite_embedding, rollout_T);
            tc.epochs = epochs;
            tc.batch_size = batch_size;
            tc.learning_rate = learning_rate;
            tc.seeds = std::move(seeds);
            tc.eval_every = eval_every;
            std::vector<TrainResult> results = train(dataset, tc, model_config);
            py::list out;
            for (auto& r : results) {
                py::list rows;
                for (const auto& row : r.metrics.rows)
                    rows.append(py::dict(
                        py::arg("run_id") = row.run_id, py::arg("objective") = row.objective,
                        py::arg("seed") = row.seed, py::arg("epoch") = row.epoch,
                        py::arg("train_loss") = row.train_loss,
                        py::arg("action_nll") = row.action_nll,
                        py::arg("state_nll") = row.state_nll, py::arg("kl") = row.kl,
                        py::arg("mi_term") = row.mi_term,
                        py::arg("eval_mse_sum_embedding") = row.eval_mse_sum_embedding,
                        py::arg("eval_mse_encoded") = row.eval_mse_encoded,
                        py::arg("additivity_error") = row.additivity_error));
                out.append(py::make_tuple(std::move(r.bundle), rows));
            }
            return out;
        },
        py::arg("dataset"), py::arg("objective") = "original", py::arg("lambda_") = 0.1,
        py::arg("epochs") = 200, py::arg("batch_size") = 16, py::arg("learning_rate") = 1e-3,
        py::arg("seeds") = std::vector<std::uint64_t>{0, 1, 2, 3, 4}, py::arg("eval_every") = 5,
        py::arg("n_mc") = 8, py::arg("mi_sampling") = "as_written",
        py::arg("composite_embedding") = "sum", py::arg("rollout_T") = 50,
        py::arg("model_config") = ModelConfig{});

    m.def("state_mse", &state_mse, py::arg("generated"), py::arg("demo"));
    m.def(
        "eval_composite",
        [](const ModelBundle& bundle, const CompositionSpec& comp,
           const std::vector<std::vector<Trajectory>>& subskill_demos,
           const std::vector<Trajectory>& composite_demos, const std::string& mode) {
            std::vector<std::vector<const Trajectory*>> sub;
            for (const auto& demos : subskill_demos) {
                std::vector<const Trajectory*> ptrs;
                for (const auto& d : demos) ptrs.push_back(&d);
                sub.push_back(std::move(ptrs));
            }
            std::vector<const Trajectory*> comps;
            for (const auto& d : composite_demos) comps.push_back(&d);
            MseStats s =
                eval_composite(bundle, comp, sub, comps, composite_embedding_from_string(mode));
            return py::make_tuple(s.mse_mean, s.mse_std);
        },
        py::arg("bundle"), py::arg("comp"), py::arg("subskill_demos"), py::arg("composite_demos"),
        py::arg("mode") = "sum");
    m.def(
        "additivity_error",
        [](const ModelBundle& bundle, const CompositionSpec& comp,
           const std::vector<Trajectory>& subskill_demos, const Trajectory& composite_demo) {
            std::vector<const Trajectory*> ptrs;
            for (const auto& d : subskill_demos) ptrs.push_back(&d);
            return additivity_error(bundle, comp, ptrs, composite_demo);
        },
        py::arg("bundle"), py::arg("comp"), py::arg("subskill_demos"), py::arg("composite_demo"));

    m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("bundle"));
    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
}

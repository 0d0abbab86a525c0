#include "trajvae/objectives.hpp"

#include <cmath>
#include <map>

namespace trajvae {

using graph::Tape;
using graph::Var;

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

std::string to_string(Objective o) {
    switch (o) {
        case Objective::Original: return "original";
        case Objective::RegVariational: return "reg_variational";
        case Objective::RegNonvariational: return "reg_nonvariational";
    }
    return "original";
}

Objective objective_from_string(const std::string& s) {
    if (s == "original") return Objective::Original;
    if (s == "reg_variational") return Objective::RegVariational;
    if (s == "reg_nonvariational") return Objective::RegNonvariational;
    throw InvalidInput("unknown objective: " + s);
}

std::string to_string(MiSampling m) { return m == MiSampling::AsWritten ? "as_written" : "cross"; }

MiSampling mi_sampling_from_string(const std::string& s) {
    if (s == "as_written") return MiSampling::AsWritten;
    if (s == "cross") return MiSampling::Cross;
    throw InvalidInput("unknown mi_sampling: " + s);
}

std::string to_string(CompositeEmbedding m) {
    return m == CompositeEmbedding::Sum ? "sum" : "encode";
}

CompositeEmbedding composite_embedding_from_string(const std::string& s) {
    if (s == "sum") return CompositeEmbedding::Sum;
    if (s == "encode") return CompositeEmbedding::Encode;
    throw InvalidInput("unknown composite_embedding: " + s);
}

namespace {

struct ElboVars {
    Var loss, action_nll, state_nll, kl;
};

ElboVars elbo_g(BoundModel& bm, const Trajectory& traj, Rng& noise) {
    Tape& t = bm.tape();
    traj.validate();
    const ModelConfig& c = bm.config();
    if (traj.states.cols() != c.d_state || traj.actions.cols() != c.d_action)
        throw InvalidInput("elbo_loss: trajectory dimensions do not match model config");
    const int T = traj.length();

    std::vector<Var> steps(T);
    for (int i = 0; i < T; ++i) steps[i] = t.leaf(traj.states.row(i).transpose());

    EncodeOut enc = encode_g(bm, steps);
    Var eps = t.leaf(noise.normal_vec(c.d_latent));
    Var z = graph::add(enc.mean, graph::mul(graph::exp_(enc.log_std), eps));

    Var action_lp = t.scalar(0.0);
    for (int i = 0; i < T; ++i) {
        Var a = t.leaf(traj.actions.row(i).transpose());
        action_lp = graph::add(action_lp, policy_logprob_g(bm, z, steps[i], a));
    }
    Var state_lp = t.scalar(0.0);
    for (int i = 0; i + 1 < T; ++i)
        state_lp = graph::add(state_lp, dynamics_logprob_g(bm, z, steps[i], steps[i + 1]));

    ElboVars out;
    out.action_nll = graph::neg(action_lp);
    out.state_nll = graph::neg(state_lp);
    out.kl = graph::kl_std_normal(enc.mean, enc.log_std);
    out.loss = graph::add(graph::add(out.action_nll, out.state_nll), out.kl);
    return out;
}

struct SubskillPosteriorVars {
    Var mean, log_std, std;
};

// H(V) for V = sum of independent diagonal-Gaussian posteriors.
Var entropy_of_sum_g(Tape& t, const std::vector<SubskillPosteriorVars>& parts, int d_latent) {
    Var var_sum = graph::exp_(graph::scale(parts[0].log_std, 2.0));
    for (size_t i = 1; i < parts.size(); ++i)
        var_sum = graph::add(var_sum, graph::exp_(graph::scale(parts[i].log_std, 2.0)));
    Var h = graph::scale(graph::sum(graph::log_(var_sum)), 0.5);
    return graph::add(h, t.scalar(0.5 * d_latent * (1.0 + kLog2Pi)));
}

Var sum_variance_g(const std::vector<SubskillPosteriorVars>& parts) {
    Var var_sum = graph::exp_(graph::scale(parts[0].log_std, 2.0));
    for (size_t i = 1; i < parts.size(); ++i)
        var_sum = graph::add(var_sum, graph::exp_(graph::scale(parts[i].log_std, 2.0)));
    return var_sum;
}

// One composition's MI-bound term, fully on the tape so gradients flow
// through the subskill posteriors, the generated trajectory and (for the
// variational bound) the auxiliary network.
Var composition_bound_g(BoundModel& bm, const std::vector<const Trajectory*>& subskill_demos,
                        const Trajectory* composite_demo, const ObjectiveConfig& cfg, Rng& noise) {
    Tape& t = bm.tape();
    const ModelConfig& c = bm.config();
    const int M = static_cast<int>(subskill_demos.size());

    std::vector<SubskillPosteriorVars> parts(M);
    for (int i = 0; i < M; ++i) {
        EncodeOut enc = encode_g(bm, subskill_demos[i]->states);
        parts[i] = {enc.mean, enc.log_std, graph::exp_(enc.log_std)};
    }
    Var h_v = entropy_of_sum_g(t, parts, c.d_latent);

    // conditioning latent and rollout start state
    Var z_tilde{};
    Eigen::VectorXd s1;
    if (cfg.composite_embedding == CompositeEmbedding::Sum) {
        for (int i = 0; i < M; ++i) {
            Var eps = t.leaf(noise.normal_vec(c.d_latent));
            Var zi = graph::add(parts[i].mean, graph::mul(parts[i].std, eps));
            z_tilde = (i == 0) ? zi : graph::add(z_tilde, zi);
        }
        s1 = Eigen::VectorXd::Zero(c.d_state);
        for (int i = 0; i < M; ++i) s1 += subskill_demos[i]->states.row(0).transpose();
        s1 /= static_cast<double>(M);
    } else {
        if (composite_demo == nullptr)
            throw ConfigError("composite_embedding=encode requires a composite demonstration");
        EncodeOut enc = encode_g(bm, composite_demo->states);
        Var eps = t.leaf(noise.normal_vec(c.d_latent));
        z_tilde = graph::add(enc.mean, graph::mul(graph::exp_(enc.log_std), eps));
        s1 = composite_demo->states.row(0).transpose();
    }

    RolloutOut gen = rollout_g(bm, z_tilde, s1, cfg.rollout_T, RolloutMode::Stochastic, noise);

    if (cfg.objective == Objective::RegVariational) {
        if (!bm.bundle().has_aux())
            throw ConfigError("reg_variational requires auxiliary posterior parameters");
        EncodeOut q = encode_g(bm, gen.states, "aux");
        Var v_sample = z_tilde;
        if (cfg.composite_embedding == CompositeEmbedding::Encode) {
            // encode-mode z_tilde is not a draw of V; draw one from V_dist
            Var eps = t.leaf(noise.normal_vec(c.d_latent));
            Var mean_v = parts[0].mean;
            for (int i = 1; i < M; ++i) mean_v = graph::add(mean_v, parts[i].mean);
            v_sample = graph::add(mean_v, graph::mul(graph::sqrt_(sum_variance_g(parts)), eps));
        }
        return graph::add(graph::gaussian_logpdf(q.mean, q.log_std, v_sample), h_v);
    }

    // non-variational: encoder applied to the generated states
    EncodeOut q = encode_g(bm, gen.states, "enc");
    Var q_std = graph::exp_(q.log_std);
    Var acc = t.scalar(0.0);
    for (int n = 0; n < cfg.n_mc; ++n) {
        for (int i = 0; i < M; ++i) {
            Var eps = t.leaf(noise.normal_vec(c.d_latent));
            Var zni = (cfg.mi_sampling == MiSampling::AsWritten)
                          ? graph::add(q.mean, graph::mul(q_std, eps))
                          : graph::add(parts[i].mean, graph::mul(parts[i].std, eps));
            acc = graph::add(acc, graph::gaussian_logpdf(q.mean, q.log_std, zni));
        }
    }
    return graph::add(h_v, graph::scale(acc, 1.0 / static_cast<double>(cfg.n_mc)));
}

}  // namespace

LossComponents elbo_loss(const ModelBundle& bundle, const Trajectory& traj, Rng& noise) {
    Tape tape;
    BoundModel bm(tape, bundle);
    ElboVars v = elbo_g(bm, traj, noise);
    return {v.loss.scalar(), v.action_nll.scalar(), v.state_nll.scalar(), v.kl.scalar()};
}

DiagGaussian build_V(const ModelBundle& bundle, const std::vector<Trajectory>& subskill_demos) {
    if (subskill_demos.empty()) throw InvalidInput("build_V requires at least one subskill demo");
    std::vector<DiagGaussian> posteriors;
    posteriors.reserve(subskill_demos.size());
    for (const auto& demo : subskill_demos) posteriors.push_back(encode(bundle, demo.states));
    return sum_gaussians(posteriors);
}

Eigen::VectorXd make_composite_latent(const ModelBundle& bundle, const CompositionSpec& comp,
                                      const std::vector<Trajectory>& subskill_demos,
                                      const Trajectory* composite_demo, CompositeEmbedding mode,
                                      Rng& noise) {
    comp.validate();
    if (mode == CompositeEmbedding::Encode) {
        if (composite_demo == nullptr)
            throw ConfigError("make_composite_latent: encode mode requires a composite demo");
        DiagGaussian g = encode(bundle, composite_demo->states);
        return sample_latent(g, noise.normal_vec(g.dim()));
    }
    if (subskill_demos.empty())
        throw InvalidInput("make_composite_latent: sum mode requires subskill demos");
    Eigen::VectorXd z = Eigen::VectorXd::Zero(bundle.config.d_latent);
    for (const auto& demo : subskill_demos) {
        DiagGaussian g = encode(bundle, demo.states);
        z += sample_latent(g, noise.normal_vec(g.dim()));
    }
    return z;
}

double mi_variational_bound(const ModelBundle& bundle, const DiagGaussian& V_dist,
                            const GeneratedTrajectory& gen, Rng& noise,
                            const Eigen::VectorXd* v_sample) {
    if (!bundle.has_aux())
        throw ConfigError("mi_variational_bound: bundle has no auxiliary posterior parameters");
    V_dist.validate();
    Eigen::VectorXd v = v_sample ? *v_sample : sample_latent(V_dist, noise.normal_vec(V_dist.dim()));
    DiagGaussian q = aux_posterior(bundle, gen);
    return log_density(q, v) + gaussian_entropy(V_dist);
}

double mi_sample_bound(const ModelBundle& bundle, const DiagGaussian& V_dist,
                       const GeneratedTrajectory& gen, int M, int n_mc, MiSampling mi_sampling,
                       Rng& noise, const std::vector<DiagGaussian>* subskill_posteriors) {
    if (n_mc < 1) throw InvalidInput("mi_sample_bound: n_mc must be >= 1");
    if (M < 1) throw InvalidInput("mi_sample_bound: M must be >= 1");
    V_dist.validate();
    if (mi_sampling == MiSampling::Cross) {
        if (subskill_posteriors == nullptr || static_cast<int>(subskill_posteriors->size()) != M)
            throw ConfigError("mi_sample_bound: cross sampling requires M subskill posteriors");
    }
    DiagGaussian q = encode(bundle, gen.states);
    double acc = 0.0;
    for (int n = 0; n < n_mc; ++n) {
        for (int i = 0; i < M; ++i) {
            const DiagGaussian& src =
                (mi_sampling == MiSampling::AsWritten) ? q : (*subskill_posteriors)[i];
            Eigen::VectorXd z = sample_latent(src, noise.normal_vec(src.dim()));
            acc += log_density(q, z);
        }
    }
    return gaussian_entropy(V_dist) + acc / static_cast<double>(n_mc);
}

BatchLossEval regularized_loss(const ModelBundle& bundle, std::span<const Trajectory> batch,
                               std::span<const CompositionSpec> compositions,
                               const ObjectiveConfig& cfg, Rng& noise, bool with_grad,
                               std::span<const Trajectory> composite_pool) {
    cfg.validate();
    BatchLossEval out;
    if (with_grad) out.grad = Eigen::VectorXd::Zero(bundle.layout.total);

    for (const Trajectory& traj : batch) {
        Tape tape;
        BoundModel bm(tape, bundle);
        ElboVars v = elbo_g(bm, traj, noise);
        out.loss += v.loss.scalar();
        out.action_nll += v.action_nll.scalar();
        out.state_nll += v.state_nll.scalar();
        out.kl += v.kl.scalar();
        ++out.n_trajectories;
        if (with_grad) {
            tape.backward(v.loss);
            bm.accumulate_grads(out.grad);
        }
    }

    const bool regularize = cfg.objective != Objective::Original && cfg.lambda != 0.0;
    if (regularize && !compositions.empty()) {
        // per-skill demo pools within the batch
        std::map<std::string, std::vector<int>> pools;
        for (size_t i = 0; i < batch.size(); ++i)
            pools[batch[i].skill_id].push_back(static_cast<int>(i));

        for (const CompositionSpec& comp : compositions) {
            comp.validate();
            std::vector<const Trajectory*> demos;
            demos.reserve(comp.subskill_ids.size());
            for (const std::string& id : comp.subskill_ids) {
                auto it = pools.find(id);
                if (it == pools.end())
                    throw InvalidInput("batch has no demonstration of subskill '" + id + "'");
                demos.push_back(&batch[it->second[noise.uniform_int(
                    static_cast<int>(it->second.size()))]]);
            }
            const Trajectory* composite_demo = nullptr;
            if (cfg.composite_embedding == CompositeEmbedding::Encode) {
                std::vector<int> cpool;
                for (size_t i = 0; i < composite_pool.size(); ++i)
                    if (composite_pool[i].skill_id == comp.composite_id)
                        cpool.push_back(static_cast<int>(i));
                if (cpool.empty())
                    throw ConfigError("encode mode: no composite demonstration of '" +
                                      comp.composite_id + "' available");
                composite_demo =
                    &composite_pool[cpool[noise.uniform_int(static_cast<int>(cpool.size()))]];
            }

            Tape tape;
            BoundModel bm(tape, bundle);
            Var bound = composition_bound_g(bm, demos, composite_demo, cfg, noise);
            out.mi_term += bound.scalar();
            ++out.n_compositions;
            if (with_grad) {
                Var term = graph::scale(bound, -cfg.lambda);
                tape.backward(term);
                bm.accumulate_grads(out.grad);
            }
        }
        out.loss -= cfg.lambda * out.mi_term;
    }
    return out;
}

}  // namespace trajvae

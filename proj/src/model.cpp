#include "trajvae/model.hpp"

#include <cmath>

namespace trajvae {

using graph::Tape;
using graph::Var;

std::string to_string(DynamicsArch a) {
    return a == DynamicsArch::Mlp ? "mlp" : "causal_conv";
}

DynamicsArch dynamics_arch_from_string(const std::string& s) {
    if (s == "mlp") return DynamicsArch::Mlp;
    if (s == "causal_conv") return DynamicsArch::CausalConv;
    throw InvalidInput("unknown dynamics_arch: " + s);
}

void ModelConfig::validate() const {
    if (d_state < 1 || d_action < 1 || d_latent < 1 || encoder_hidden < 1 || attention_dim < 1 ||
        mixture_components < 1)
        throw InvalidInput("ModelConfig sizes must be >= 1");
    if (!(log_std_min < log_std_max))
        throw InvalidInput("ModelConfig log_std clamp must have low < high");
}

namespace {

void add_sequence_encoder(ParamLayout& layout, const ModelConfig& c, const std::string& prefix) {
    const int h = c.encoder_hidden;
    layout.add(prefix + ".fwd.W", 4 * h, c.d_state);
    layout.add(prefix + ".fwd.U", 4 * h, h);
    layout.add(prefix + ".fwd.b", 4 * h, 1);
    layout.add(prefix + ".bwd.W", 4 * h, c.d_state);
    layout.add(prefix + ".bwd.U", 4 * h, h);
    layout.add(prefix + ".bwd.b", 4 * h, 1);
    layout.add(prefix + ".attn.W", c.attention_dim, 2 * h);
    layout.add(prefix + ".attn.b", c.attention_dim, 1);
    layout.add(prefix + ".attn.v", c.attention_dim, 1);
    layout.add(prefix + ".mean.W", c.d_latent, 2 * h);
    layout.add(prefix + ".mean.b", c.d_latent, 1);
    layout.add(prefix + ".logstd.W", c.d_latent, 2 * h);
    layout.add(prefix + ".logstd.b", c.d_latent, 1);
}

}  // namespace

ParamLayout build_layout(const ModelConfig& c) {
    c.validate();
    ParamLayout layout;
    const int h = c.encoder_hidden;
    const int in_dec = c.d_state + c.d_latent;
    const int dyn_out = c.mixture_components * (1 + 2 * c.d_state);

    add_sequence_encoder(layout, c, "enc");

    layout.add("pol.h1.W", h, in_dec);
    layout.add("pol.h1.b", h, 1);
    layout.add("pol.h2.W", h, h);
    layout.add("pol.h2.b", h, 1);
    layout.add("pol.out.W", 2 * c.d_action, h);
    layout.add("pol.out.b", 2 * c.d_action, 1);
    layout.add("pol.skip.W", 2 * c.d_action, c.d_latent);

    if (c.dynamics_arch == DynamicsArch::Mlp) {
        layout.add("dyn.h1.W", h, in_dec);
        layout.add("dyn.h1.b", h, 1);
        layout.add("dyn.h2.W", h, h);
        layout.add("dyn.h2.b", h, 1);
    } else {
        layout.add("dyn.in.W", h, in_dec);
        layout.add("dyn.in.b", h, 1);
        for (int blk = 1; blk <= 2; ++blk) {
            const std::string p = "dyn.blk" + std::to_string(blk);
            layout.add(p + ".filter.W", h, h);
            layout.add(p + ".filter.b", h, 1);
            layout.add(p + ".gate.W", h, h);
            layout.add(p + ".gate.b", h, 1);
        }
    }
    layout.add("dyn.out.W", dyn_out, h);
    layout.add("dyn.out.b", dyn_out, 1);
    layout.add("dyn.skip.W", dyn_out, c.d_latent);

    if (c.with_aux_posterior) add_sequence_encoder(layout, c, "aux");
    return layout;
}

ModelBundle init_parameters(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelBundle b;
    b.config = config;
    b.layout = build_layout(config);
    b.params = Eigen::VectorXd::Zero(b.layout.total);
    b.seed = seed;

    Rng rng(mix_seed(seed, 0x1717));
    const int h = config.encoder_hidden;
    for (const auto& e : b.layout.entries) {
        auto seg = b.params.segment(e.offset, e.size());
        const bool is_bias = e.cols == 1 && e.name.ends_with(".b");
        // log-std heads start at zero (posterior std exactly 1); decoder output
        // heads start at zero (identity mean-mode rollout); mean heads start
        // small but nonzero so the posterior carries a skill signal from the
        // first step while the KL stays near zero
        const bool zero_head = e.name.find(".logstd.") != std::string::npos ||
                               e.name.find(".out.") != std::string::npos ||
                               e.name.find(".skip.") != std::string::npos;
        const bool mean_head = e.name.find(".mean.") != std::string::npos;
        if (zero_head || (mean_head && is_bias)) continue;
        if (is_bias) {
            // forget-gate bias 1, everything else 0
            if (e.name.ends_with("fwd.b") || e.name.ends_with("bwd.b"))
                seg.segment(h, h).setOnes();
            continue;
        }
        double a = 1.0 / std::sqrt(static_cast<double>(e.cols));
        if (mean_head) a *= 0.1;
        for (int i = 0; i < e.size(); ++i) seg[i] = (2.0 * rng.uniform() - 1.0) * a;
    }
    return b;
}

// ----- BoundModel -----

Var BoundModel::seg(std::string_view name) {
    const int idx = bundle_->layout.find(name);
    if (seg_nodes_[idx] < 0) {
        const auto& e = bundle_->layout.entries[idx];
        seg_nodes_[idx] = tape_->leaf(bundle_->params.segment(e.offset, e.size())).id;
    }
    return Var{tape_, seg_nodes_[idx]};
}

void BoundModel::accumulate_grads(Eigen::VectorXd& flat_grad) const {
    for (size_t i = 0; i < seg_nodes_.size(); ++i) {
        if (seg_nodes_[i] < 0) continue;
        const auto& e = bundle_->layout.entries[i];
        flat_grad.segment(e.offset, e.size()) += tape_->grad(Var{tape_, seg_nodes_[i]});
    }
}

// ----- encoder -----

namespace {

// One LSTM direction; returns the hidden state at every step.
std::vector<Var> lstm_pass(BoundModel& bm, std::span<const Var> steps, const std::string& prefix,
                           bool reverse) {
    Tape& t = bm.tape();
    const int h = bm.config().encoder_hidden;
    const int d = bm.config().d_state;
    Var W = bm.seg(prefix + ".W");
    Var U = bm.seg(prefix + ".U");
    Var b = bm.seg(prefix + ".b");

    const int T = static_cast<int>(steps.size());
    std::vector<Var> out(T);
    Var hprev = t.leaf(Eigen::VectorXd::Zero(h));
    Var cprev = t.leaf(Eigen::VectorXd::Zero(h));
    for (int k = 0; k < T; ++k) {
        const int idx = reverse ? T - 1 - k : k;
        Var pre = add(add(matvec(W, 4 * h, d, steps[idx]), matvec(U, 4 * h, h, hprev)), b);
        Var gi = sigmoid_(slice(pre, 0, h));
        Var gf = sigmoid_(slice(pre, h, h));
        Var gg = tanh_(slice(pre, 2 * h, h));
        Var go = sigmoid_(slice(pre, 3 * h, h));
        Var c = add(mul(gf, cprev), mul(gi, gg));
        Var hh = mul(go, tanh_(c));
        out[idx] = hh;
        hprev = hh;
        cprev = c;
    }
    return out;
}

}  // namespace

EncodeOut encode_g(BoundModel& bm, std::span<const Var> state_steps, const std::string& prefix) {
    Tape& t = bm.tape();
    const ModelConfig& c = bm.config();
    if (state_steps.empty()) throw InvalidInput("encode requires T >= 1");
    for (const Var& s : state_steps)
        if (s.size() != c.d_state) throw InvalidInput("encode: state has wrong dimension");
    if (prefix == "aux" && !bm.bundle().has_aux())
        throw ConfigError("bundle has no auxiliary posterior parameters");

    const int T = static_cast<int>(state_steps.size());
    const int h = c.encoder_hidden;
    const std::string& trunk = prefix;
    // translation-invariant input: the embedding describes the motion, the
    // start state is supplied to the decoders separately
    std::vector<Var> centered(T);
    for (int k = 0; k < T; ++k) centered[k] = graph::sub(state_steps[k], state_steps[0]);
    std::vector<Var> hf = lstm_pass(bm, centered, trunk + ".fwd", false);
    std::vector<Var> hb = lstm_pass(bm, centered, trunk + ".bwd", true);

    std::vector<Var> feats(T);
    for (int k = 0; k < T; ++k) feats[k] = concat2(hf[k], hb[k]);

    Var aW = bm.seg(trunk + ".attn.W");
    Var ab = bm.seg(trunk + ".attn.b");
    Var av = bm.seg(trunk + ".attn.v");
    std::vector<Var> scores(T);
    for (int k = 0; k < T; ++k)
        scores[k] = dot(av, tanh_(affine(aW, ab, c.attention_dim, 2 * h, feats[k])));
    Var w = softmax(concat(scores));
    Var pooled = weighted_sum(w, feats);

    EncodeOut out;
    out.mean = affine(bm.seg(prefix + ".mean.W"), bm.seg(prefix + ".mean.b"), c.d_latent, 2 * h, pooled);
    out.log_std = clamp_(
        affine(bm.seg(prefix + ".logstd.W"), bm.seg(prefix + ".logstd.b"), c.d_latent, 2 * h, pooled),
        c.log_std_min, c.log_std_max);
    out.attn_weights = w;
    (void)t;
    return out;
}

EncodeOut encode_g(BoundModel& bm, const Eigen::MatrixXd& states, const std::string& prefix) {
    std::vector<Var> steps(states.rows());
    for (int i = 0; i < states.rows(); ++i)
        steps[i] = bm.tape().leaf(states.row(i).transpose());
    return encode_g(bm, steps, prefix);
}

// ----- decoder heads -----

namespace {

Var decoder_trunk(BoundModel& bm, const std::string& prefix, Var x) {
    const ModelConfig& c = bm.config();
    const int h = c.encoder_hidden;
    const int in = c.d_state + c.d_latent;
    if (prefix == "dyn" && c.dynamics_arch == DynamicsArch::CausalConv) {
        // Gated residual stack (WaveNet-style gating over the step embedding).
        Var hcur = tanh_(affine(bm.seg("dyn.in.W"), bm.seg("dyn.in.b"), h, in, x));
        for (int blk = 1; blk <= 2; ++blk) {
            const std::string p = "dyn.blk" + std::to_string(blk);
            Var f = tanh_(affine(bm.seg(p + ".filter.W"), bm.seg(p + ".filter.b"), h, h, hcur));
            Var g = sigmoid_(affine(bm.seg(p + ".gate.W"), bm.seg(p + ".gate.b"), h, h, hcur));
            hcur = add(hcur, mul(f, g));
        }
        return hcur;
    }
    Var h1 = tanh_(affine(bm.seg(prefix + ".h1.W"), bm.seg(prefix + ".h1.b"), h, in, x));
    return tanh_(affine(bm.seg(prefix + ".h2.W"), bm.seg(prefix + ".h2.b"), h, h, h1));
}

}  // namespace

PolicyHead policy_head_g(BoundModel& bm, Var s, Var z) {
    const ModelConfig& c = bm.config();
    if (s.size() != c.d_state || z.size() != c.d_latent)
        throw InvalidInput("policy head: input dimension mismatch");
    Var trunk = decoder_trunk(bm, "pol", concat2(s, z));
    // linear-in-z skip path next to the tanh trunk
    Var out = add(affine(bm.seg("pol.out.W"), bm.seg("pol.out.b"), 2 * c.d_action,
                         c.encoder_hidden, trunk),
                  matvec(bm.seg("pol.skip.W"), 2 * c.d_action, c.d_latent, z));
    PolicyHead head;
    head.mean = slice(out, 0, c.d_action);
    head.log_std = clamp_(slice(out, c.d_action, c.d_action), c.log_std_min, c.log_std_max);
    return head;
}

Var policy_logprob_g(BoundModel& bm, Var z, Var s, Var a) {
    if (a.size() != bm.config().d_action)
        throw InvalidInput("policy_logprob: action dimension mismatch");
    PolicyHead head = policy_head_g(bm, s, z);
    return gaussian_logpdf(head.mean, head.log_std, a);
}

DynamicsHead dynamics_head_g(BoundModel& bm, Var s, Var z) {
    const ModelConfig& c = bm.config();
    if (s.size() != c.d_state || z.size() != c.d_latent)
        throw InvalidInput("dynamics head: input dimension mismatch");
    const int K = c.mixture_components;
    const int d = c.d_state;
    Var trunk = decoder_trunk(bm, "dyn", concat2(s, z));
    Var out = add(affine(bm.seg("dyn.out.W"), bm.seg("dyn.out.b"), K * (1 + 2 * d),
                         c.encoder_hidden, trunk),
                  matvec(bm.seg("dyn.skip.W"), K * (1 + 2 * d), c.d_latent, z));

    DynamicsHead head;
    std::vector<Var> logit_parts(K);
    head.means.resize(K);
    head.log_stds.resize(K);
    head.deltas.resize(K);
    for (int k = 0; k < K; ++k) {
        const int base = k * (1 + 2 * d);
        logit_parts[k] = slice(out, base, 1);
        head.deltas[k] = slice(out, base + 1, d);
        head.means[k] = add(s, head.deltas[k]);  // residual head
        head.log_stds[k] = clamp_(slice(out, base + 1 + d, d), c.log_std_min, c.log_std_max);
    }
    head.logits = concat(logit_parts);
    return head;
}

Var dynamics_logprob_g(BoundModel& bm, Var z, Var s, Var s_next) {
    if (s_next.size() != bm.config().d_state)
        throw InvalidInput("dynamics_logprob: s_next dimension mismatch");
    DynamicsHead head = dynamics_head_g(bm, s, z);
    const int K = bm.config().mixture_components;
    Var log_w = sub_scalar(head.logits, logsumexp(head.logits));
    std::vector<Var> terms(K);
    for (int k = 0; k < K; ++k)
        terms[k] = add(slice(log_w, k, 1), gaussian_logpdf(head.means[k], head.log_stds[k], s_next));
    return logsumexp(concat(terms));
}

// ----- rollout -----

RolloutOut rollout_g(BoundModel& bm, Var z, const Eigen::VectorXd& s_1, int T, RolloutMode mode,
                     Rng& noise) {
    Tape& t = bm.tape();
    const ModelConfig& c = bm.config();
    if (T < 1) throw InvalidInput("rollout requires T >= 1");
    if (s_1.size() != c.d_state) throw InvalidInput("rollout: s_1 dimension mismatch");
    const int K = c.mixture_components;

    RolloutOut out;
    out.states.resize(T);
    out.actions.resize(T);
    out.states[0] = t.leaf(s_1);

    for (int step = 0; step < T; ++step) {
        Var s = out.states[step];
        PolicyHead pol = policy_head_g(bm, s, z);
        if (mode == RolloutMode::Stochastic) {
            Var eps = t.leaf(noise.normal_vec(c.d_action));
            out.actions[step] = add(pol.mean, mul(exp_(pol.log_std), eps));
        } else {
            out.actions[step] = pol.mean;
        }
        if (step + 1 >= T) break;

        DynamicsHead dyn = dynamics_head_g(bm, s, z);
        Var next{};
        if (mode == RolloutMode::Stochastic) {
            int k = 0;
            if (K > 1) {
                // component choice by inverse CDF; the pick itself is not differentiated
                Eigen::VectorXd logits = dyn.logits.value();
                Eigen::VectorXd w = (logits.array() - logits.maxCoeff()).exp();
                w /= w.sum();
                const double u = noise.uniform();
                double cum = 0.0;
                for (k = 0; k < K - 1; ++k) {
                    cum += w[k];
                    if (u < cum) break;
                }
            }
            Var eps = t.leaf(noise.normal_vec(c.d_state));
            next = add(dyn.means[k], mul(exp_(dyn.log_stds[k]), eps));
        } else {
            Var w = softmax(dyn.logits);
            next = add(s, weighted_sum(w, dyn.deltas));  // mixture mean
        }
        if (!next.value().allFinite())
            throw RolloutDivergence(step + 1, "rollout produced a non-finite state at step " +
                                                  std::to_string(step + 1));
        out.states[step + 1] = next;
    }
    return out;
}

// ----- plain wrappers -----

DiagGaussian encode(const ModelBundle& bundle, const Eigen::MatrixXd& states) {
    if (states.cols() != bundle.config.d_state)
        throw InvalidInput("encode: states column count != d_state");
    Tape tape;
    BoundModel bm(tape, bundle);
    EncodeOut enc = encode_g(bm, states);
    DiagGaussian g;
    g.mean = enc.mean.value();
    g.std = enc.log_std.value().array().exp();
    return g;
}

AttentionParams encoder_attention(const ModelBundle& bundle) {
    AttentionParams p;
    p.W = bundle.segment("enc.attn.W");
    p.b = bundle.segment("enc.attn.b").col(0);
    p.v = bundle.segment("enc.attn.v").col(0);
    return p;
}

PooledFeatures attention_pool(const Eigen::MatrixXd& step_features, const AttentionParams& params) {
    const int T = static_cast<int>(step_features.rows());
    if (T < 1) throw InvalidInput("attention_pool requires T >= 1");
    if (step_features.cols() != params.W.cols())
        throw InvalidInput("attention_pool: feature dimension mismatch");
    Eigen::VectorXd scores(T);
    for (int k = 0; k < T; ++k) {
        Eigen::VectorXd a = (params.W * step_features.row(k).transpose() + params.b).array().tanh();
        scores[k] = params.v.dot(a);
    }
    Eigen::VectorXd w = (scores.array() - scores.maxCoeff()).exp();
    w /= w.sum();
    PooledFeatures out;
    out.weights = w;
    out.pooled = step_features.transpose() * w;
    return out;
}

Eigen::VectorXd sample_latent(const DiagGaussian& g, const Eigen::VectorXd& noise) {
    if (noise.size() != g.mean.size())
        throw InvalidInput("sample_latent: noise dimension mismatch");
    return g.mean.array() + g.std.array() * noise.array();
}

double policy_logprob(const ModelBundle& bundle, const Eigen::VectorXd& z,
                      const Eigen::VectorXd& s_t, const Eigen::VectorXd& a_t) {
    Tape tape;
    BoundModel bm(tape, bundle);
    return policy_logprob_g(bm, tape.leaf(z), tape.leaf(s_t), tape.leaf(a_t)).scalar();
}

Eigen::VectorXd policy_logprob_batch(const ModelBundle& bundle, const Eigen::VectorXd& z,
                                     const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
    if (states.rows() != actions.rows())
        throw InvalidInput("policy_logprob_batch: row count mismatch");
    Eigen::VectorXd out(states.rows());
    for (int i = 0; i < states.rows(); ++i)
        out[i] = policy_logprob(bundle, z, states.row(i).transpose(), actions.row(i).transpose());
    return out;
}

double dynamics_logprob(const ModelBundle& bundle, const Eigen::VectorXd& z,
                        const Eigen::VectorXd& s_t, const Eigen::VectorXd& s_next) {
    Tape tape;
    BoundModel bm(tape, bundle);
    return dynamics_logprob_g(bm, tape.leaf(z), tape.leaf(s_t), tape.leaf(s_next)).scalar();
}

GeneratedTrajectory rollout(const ModelBundle& bundle, const Eigen::VectorXd& z,
                            const Eigen::VectorXd& s_1, int T, RolloutMode mode, Rng& noise) {
    if (z.size() != bundle.config.d_latent) throw InvalidInput("rollout: latent dimension mismatch");
    Tape tape;
    BoundModel bm(tape, bundle);
    RolloutOut r = rollout_g(bm, tape.leaf(z), s_1, T, mode, noise);
    GeneratedTrajectory gen;
    gen.states.resize(T, bundle.config.d_state);
    gen.actions.resize(T, bundle.config.d_action);
    for (int i = 0; i < T; ++i) {
        gen.states.row(i) = r.states[i].value().transpose();
        gen.actions.row(i) = r.actions[i].value().transpose();
    }
    gen.conditioning_latent = z;
    return gen;
}

DiagGaussian aux_posterior(const ModelBundle& bundle, const GeneratedTrajectory& traj) {
    if (!bundle.has_aux())
        throw ConfigError("aux_posterior: bundle has no auxiliary posterior parameters");
    Tape tape;
    BoundModel bm(tape, bundle);
    EncodeOut enc = encode_g(bm, traj.states, "aux");
    DiagGaussian g;
    g.mean = enc.mean.value();
    g.std = enc.log_std.value().array().exp();
    return g;
}

}  // namespace trajvae

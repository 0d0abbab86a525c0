#include "trajvae/graph.hpp"

#include <cassert>
#include <cmath>

#include "trajvae/errors.hpp"

namespace trajvae::graph {

const Eigen::VectorXd& Var::value() const { return tape->cval(id); }
int Var::size() const { return static_cast<int>(tape->cval(id).size()); }
double Var::scalar() const { return tape->cval(id)[0]; }

Var Tape::leaf(Eigen::VectorXd value) { return make(std::move(value)); }

Var Tape::scalar(double v) {
    Eigen::VectorXd x(1);
    x[0] = v;
    return make(std::move(x));
}

Var Tape::make(Eigen::VectorXd value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::set_back(Var v, std::function<void(Tape&)> back) {
    nodes_[v.id].back = std::move(back);
}

void Tape::backward(Var root) {
    if (root.size() != 1) throw InvalidInput("backward root must be a scalar node");
    for (auto& n : nodes_) n.grad = Eigen::VectorXd::Zero(n.value.size());
    nodes_[root.id].grad[0] = 1.0;
    for (int i = root.id; i >= 0; --i)
        if (nodes_[i].back) nodes_[i].back(*this);
}

const Eigen::VectorXd& Tape::grad(Var v) const { return nodes_[v.id].grad; }

namespace {
inline Tape& T(Var a) { return *a.tape; }
}  // namespace

Var add(Var a, Var b) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id) + t.cval(b.id));
    t.set_back(o, [ia = a.id, ib = b.id, io = o.id](Tape& t2) {
        t2.g(ia) += t2.g(io);
        t2.g(ib) += t2.g(io);
    });
    return o;
}

Var sub(Var a, Var b) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id) - t.cval(b.id));
    t.set_back(o, [ia = a.id, ib = b.id, io = o.id](Tape& t2) {
        t2.g(ia) += t2.g(io);
        t2.g(ib) -= t2.g(io);
    });
    return o;
}

Var mul(Var a, Var b) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id).cwiseProduct(t.cval(b.id)));
    t.set_back(o, [ia = a.id, ib = b.id, io = o.id](Tape& t2) {
        t2.g(ia).array() += t2.g(io).array() * t2.cval(ib).array();
        t2.g(ib).array() += t2.g(io).array() * t2.cval(ia).array();
    });
    return o;
}

Var div(Var a, Var b) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id).cwiseQuotient(t.cval(b.id)));
    t.set_back(o, [ia = a.id, ib = b.id, io = o.id](Tape& t2) {
        const auto& bv = t2.cval(ib).array();
        t2.g(ia).array() += t2.g(io).array() / bv;
        t2.g(ib).array() -= t2.g(io).array() * t2.cval(io).array() / bv;
    });
    return o;
}

Var scale(Var a, double k) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id) * k);
    t.set_back(o, [ia = a.id, io = o.id, k](Tape& t2) { t2.g(ia) += k * t2.g(io); });
    return o;
}

Var offset(Var a, double k) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id).array() + k);
    t.set_back(o, [ia = a.id, io = o.id](Tape& t2) { t2.g(ia) += t2.g(io); });
    return o;
}

Var neg(Var a) { return scale(a, -1.0); }

Var tanh_(Var a) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id).array().tanh());
    t.set_back(o, [ia = a.id, io = o.id](Tape& t2) {
        t2.g(ia).array() += t2.g(io).array() * (1.0 - t2.cval(io).array().square());
    });
    return o;
}

Var sigmoid_(Var a) {
    Tape& t = T(a);
    Var o = t.make((1.0 / (1.0 + (-t.cval(a.id).array()).exp())).matrix());
    t.set_back(o, [ia = a.id, io = o.id](Tape& t2) {
        const auto& y = t2.cval(io).array();
        t2.g(ia).array() += t2.g(io).array() * y * (1.0 - y);
    });
    return o;
}

Var exp_(Var a) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id).array().exp());
    t.set_back(o, [ia = a.id, io = o.id](Tape& t2) {
        t2.g(ia).array() += t2.g(io).array() * t2.cval(io).array();
    });
    return o;
}

Var log_(Var a) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id).array().log());
    t.set_back(o, [ia = a.id, io = o.id](Tape& t2) {
        t2.g(ia).array() += t2.g(io).array() / t2.cval(ia).array();
    });
    return o;
}

Var sqrt_(Var a) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id).array().sqrt());
    t.set_back(o, [ia = a.id, io = o.id](Tape& t2) {
        t2.g(ia).array() += t2.g(io).array() * 0.5 / t2.cval(io).array();
    });
    return o;
}

Var square_(Var a) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id).array().square());
    t.set_back(o, [ia = a.id, io = o.id](Tape& t2) {
        t2.g(ia).array() += t2.g(io).array() * 2.0 * t2.cval(ia).array();
    });
    return o;
}

Var clamp_(Var a, double lo, double hi) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id).array().max(lo).min(hi));
    t.set_back(o, [ia = a.id, io = o.id, lo, hi](Tape& t2) {
        const auto& x = t2.cval(ia);
        for (int j = 0; j < x.size(); ++j)
            if (x[j] >= lo && x[j] <= hi) t2.g(ia)[j] += t2.g(io)[j];
    });
    return o;
}

Var matvec(Var w_flat, int rows, int cols, Var x) {
    Tape& t = T(x);
    assert(w_flat.size() == rows * cols && x.size() == cols);
    Eigen::Map<const Eigen::MatrixXd> W(t.cval(w_flat.id).data(), rows, cols);
    Var o = t.make(W * t.cval(x.id));
    t.set_back(o, [iw = w_flat.id, ix = x.id, io = o.id, rows, cols](Tape& t2) {
        Eigen::Map<const Eigen::MatrixXd> W2(t2.cval(iw).data(), rows, cols);
        Eigen::Map<Eigen::MatrixXd> gW(t2.g(iw).data(), rows, cols);
        gW.noalias() += t2.g(io) * t2.cval(ix).transpose();
        t2.g(ix).noalias() += W2.transpose() * t2.g(io);
    });
    return o;
}

Var affine(Var w_flat, Var b, int rows, int cols, Var x) {
    return add(matvec(w_flat, rows, cols, x), b);
}

Var slice(Var a, int off, int len) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id).segment(off, len));
    t.set_back(o, [ia = a.id, io = o.id, off, len](Tape& t2) {
        t2.g(ia).segment(off, len) += t2.g(io);
    });
    return o;
}

Var concat(std::span<const Var> parts) {
    Tape& t = T(parts[0]);
    int total = 0;
    for (const Var& p : parts) total += p.size();
    Eigen::VectorXd v(total);
    std::vector<int> ids;
    std::vector<int> offs;
    ids.reserve(parts.size());
    offs.reserve(parts.size());
    int off = 0;
    for (const Var& p : parts) {
        v.segment(off, p.size()) = t.cval(p.id);
        ids.push_back(p.id);
        offs.push_back(off);
        off += p.size();
    }
    Var o = t.make(std::move(v));
    t.set_back(o, [ids = std::move(ids), offs = std::move(offs), io = o.id](Tape& t2) {
        for (size_t k = 0; k < ids.size(); ++k) {
            const int n = static_cast<int>(t2.cval(ids[k]).size());
            t2.g(ids[k]) += t2.g(io).segment(offs[k], n);
        }
    });
    return o;
}

Var concat2(Var a, Var b) {
    const Var parts[2] = {a, b};
    return concat(parts);
}

Var sum(Var a) {
    Tape& t = T(a);
    Eigen::VectorXd v(1);
    v[0] = t.cval(a.id).sum();
    Var o = t.make(std::move(v));
    t.set_back(o, [ia = a.id, io = o.id](Tape& t2) {
        t2.g(ia).array() += t2.g(io)[0];
    });
    return o;
}

Var dot(Var a, Var b) {
    Tape& t = T(a);
    Eigen::VectorXd v(1);
    v[0] = t.cval(a.id).dot(t.cval(b.id));
    Var o = t.make(std::move(v));
    t.set_back(o, [ia = a.id, ib = b.id, io = o.id](Tape& t2) {
        t2.g(ia) += t2.g(io)[0] * t2.cval(ib);
        t2.g(ib) += t2.g(io)[0] * t2.cval(ia);
    });
    return o;
}

Var sub_scalar(Var a, Var s) {
    Tape& t = T(a);
    Var o = t.make(t.cval(a.id).array() - t.cval(s.id)[0]);
    t.set_back(o, [ia = a.id, is = s.id, io = o.id](Tape& t2) {
        t2.g(ia) += t2.g(io);
        t2.g(is)[0] -= t2.g(io).sum();
    });
    return o;
}

Var softmax(Var a) {
    Tape& t = T(a);
    const auto& x = t.cval(a.id);
    Eigen::VectorXd y = (x.array() - x.maxCoeff()).exp();
    y /= y.sum();
    Var o = t.make(std::move(y));
    t.set_back(o, [ia = a.id, io = o.id](Tape& t2) {
        const auto& yv = t2.cval(io);
        const double gy = t2.g(io).dot(yv);
        t2.g(ia).array() += yv.array() * (t2.g(io).array() - gy);
    });
    return o;
}

Var logsumexp(Var a) {
    Tape& t = T(a);
    const auto& x = t.cval(a.id);
    const double m = x.maxCoeff();
    Eigen::VectorXd v(1);
    v[0] = m + std::log((x.array() - m).exp().sum());
    Var o = t.make(std::move(v));
    t.set_back(o, [ia = a.id, io = o.id](Tape& t2) {
        const double lse = t2.cval(io)[0];
        t2.g(ia).array() += t2.g(io)[0] * (t2.cval(ia).array() - lse).exp();
    });
    return o;
}

Var weighted_sum(Var w, std::span<const Var> features) {
    Tape& t = T(w);
    assert(static_cast<size_t>(w.size()) == features.size());
    Eigen::VectorXd pooled = Eigen::VectorXd::Zero(features[0].size());
    std::vector<int> ids;
    ids.reserve(features.size());
    for (size_t k = 0; k < features.size(); ++k) {
        pooled += t.cval(w.id)[static_cast<int>(k)] * t.cval(features[k].id);
        ids.push_back(features[k].id);
    }
    Var o = t.make(std::move(pooled));
    t.set_back(o, [iw = w.id, ids = std::move(ids), io = o.id](Tape& t2) {
        for (size_t k = 0; k < ids.size(); ++k) {
            t2.g(iw)[static_cast<int>(k)] += t2.g(io).dot(t2.cval(ids[k]));
            t2.g(ids[k]) += t2.cval(iw)[static_cast<int>(k)] * t2.g(io);
        }
    });
    return o;
}

Var gaussian_logpdf(Var mean, Var log_std, Var x) {
    Tape& t = T(mean);
    constexpr double kLog2Pi = 1.8378770664093454836;
    const auto& mu = t.cval(mean.id).array();
    const auto& ls = t.cval(log_std.id).array();
    const auto& xv = t.cval(x.id).array();
    const int d = static_cast<int>(mu.size());
    const Eigen::ArrayXd q = (xv - mu) * (-ls).exp();
    Eigen::VectorXd v(1);
    v[0] = -ls.sum() - 0.5 * q.square().sum() - 0.5 * d * kLog2Pi;
    Var o = t.make(std::move(v));
    t.set_back(o, [im = mean.id, il = log_std.id, ix = x.id, io = o.id](Tape& t2) {
        const double go = t2.g(io)[0];
        const auto& mu2 = t2.cval(im).array();
        const auto& ls2 = t2.cval(il).array();
        const auto& xv2 = t2.cval(ix).array();
        const Eigen::ArrayXd inv_var = (-2.0 * ls2).exp();
        const Eigen::ArrayXd r = (xv2 - mu2) * inv_var;  // (x-mu)/sigma^2
        t2.g(im).array() += go * r;
        t2.g(ix).array() -= go * r;
        t2.g(il).array() += go * ((xv2 - mu2).square() * inv_var - 1.0);
    });
    return o;
}

Var kl_std_normal(Var mean, Var log_std) {
    Tape& t = T(mean);
    const auto& mu = t.cval(mean.id).array();
    const auto& ls = t.cval(log_std.id).array();
    Eigen::VectorXd v(1);
    v[0] = 0.5 * ((2.0 * ls).exp() + mu.square() - 1.0).sum() - ls.sum();
    Var o = t.make(std::move(v));
    t.set_back(o, [im = mean.id, il = log_std.id, io = o.id](Tape& t2) {
        const double go = t2.g(io)[0];
        t2.g(im).array() += go * t2.cval(im).array();
        t2.g(il).array() += go * ((2.0 * t2.cval(il).array()).exp() - 1.0);
    });
    return o;
}

}  // namespace trajvae::graph

#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>
#include <vector>

namespace trajvae::graph {

class Tape;

// Handle to a node on a tape. Every node holds a vector value; scalars are
// size-1 vectors.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Eigen::VectorXd& value() const;
    int size() const;
    double scalar() const;  // value()[0], for size-1 nodes
};

// Define-by-run reverse-mode tape. Nodes are appended during the forward
// pass; backward() walks them in reverse. A tape is single-use per loss
// evaluation and is not thread-safe; build one per evaluation.
class Tape {
public:
    Tape() { nodes_.reserve(1024); }

    Var leaf(Eigen::VectorXd value);
    Var scalar(double v);

    // Seeds d(root)/d(root) = 1 and propagates. root must be size 1.
    void backward(Var root);

    const Eigen::VectorXd& grad(Var v) const;
    int num_nodes() const { return static_cast<int>(nodes_.size()); }

    // op plumbing
    Var make(Eigen::VectorXd value);
    void set_back(Var v, std::function<void(Tape&)> back);
    Eigen::VectorXd& val(int id) { return nodes_[id].value; }
    const Eigen::VectorXd& cval(int id) const { return nodes_[id].value; }
    Eigen::VectorXd& g(int id) { return nodes_[id].grad; }

private:
    struct Node {
        Eigen::VectorXd value;
        Eigen::VectorXd grad;
        std::function<void(Tape&)> back;
    };
    std::vector<Node> nodes_;
};

// ----- primitive ops -----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);             // elementwise
Var div(Var a, Var b);             // elementwise
Var scale(Var a, double k);
Var offset(Var a, double k);       // a + k, elementwise
Var neg(Var a);
Var tanh_(Var a);
Var sigmoid_(Var a);
Var exp_(Var a);
Var log_(Var a);
Var sqrt_(Var a);
Var square_(Var a);
Var clamp_(Var a, double lo, double hi);   // zero gradient outside [lo, hi]
Var matvec(Var w_flat, int rows, int cols, Var x);  // column-major W
Var affine(Var w_flat, Var b, int rows, int cols, Var x);
Var slice(Var a, int off, int len);
Var concat(std::span<const Var> parts);
Var concat2(Var a, Var b);
Var sum(Var a);                    // -> size 1
Var dot(Var a, Var b);             // -> size 1
Var sub_scalar(Var a, Var s);      // a - s (s size 1, broadcast)
Var softmax(Var a);
Var logsumexp(Var a);              // -> size 1
Var weighted_sum(Var w, std::span<const Var> features);

// Fused density/divergence ops (exact closed-form backward).
// log N(x; mean, exp(log_std)^2) summed over dimensions; size-1 output.
Var gaussian_logpdf(Var mean, Var log_std, Var x);
// KL( N(mean, exp(log_std)^2) || N(0, I) ); size-1 output.
Var kl_std_normal(Var mean, Var log_std);

}  // namespace trajvae::graph

#pragma once

#include <functional>
#include <vector>

#include "orthodistill/tensor.hpp"

namespace orthodistill {

class Tape;

// Handle to a value recorded on a tape. Cheap to copy; the tensor itself
// lives on the tape for the tape's lifetime.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const std::vector<std::size_t>& shape() const { return value().shape(); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    std::size_t size() const { return value().size(); }
};

// Division and log guard; normalizer sums and KL logs can underflow at
// small temperatures (configurable per call site).
inline constexpr double kGuardEps = 1e-12;

// Reverse-mode tape over tensor-valued primitives. Recording happens in
// program order; backward() replays the records in exact reverse order and
// accumulates adjoints, so two backward passes over the same tape are
// bitwise identical. A tape is confined to one thread.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Tracked input: its gradient is available after backward().
    Var leaf(Tensor value);
    // Untracked value: no gradient flows into or through it.
    Var constant(Tensor value);

    // Seeds d(root)/d(root) = 1 and sweeps the tape backwards. Resets all
    // adjoints first, so repeated calls do not accumulate.
    void backward(const Var& root);

    const Tensor& value(const Var& v) const;
    // Adjoint accumulated by the last backward(); zero tensor for nodes the
    // root does not depend on.
    const Tensor& grad(const Var& v) const;

    std::size_t node_count() const { return nodes_.size(); }

    // --- used by the op implementations ---
    using BackFn = std::function<void(Tape&, std::size_t self)>;
    Var record(Tensor value, std::vector<std::size_t> parents, BackFn back);
    bool tracked(std::size_t id) const { return nodes_[id].tracked; }
    Tensor& adjoint(std::size_t id) { return adjoints_[id]; }
    const Tensor& node_value(std::size_t id) const { return nodes_[id].value; }
    void check_owns(const Var& v, const char* op) const;

private:
    struct Node {
        Tensor value;
        std::vector<std::size_t> parents;
        BackFn back;      // empty for leaves and constants
        bool tracked = false;  // depends on at least one leaf
    };
    std::vector<Node> nodes_;
    std::vector<Tensor> adjoints_;  // allocated by backward()
};

// ---- primitives -----------------------------------------------------------
// Shape contracts are checked; violations throw std::invalid_argument naming
// the primitive and both shapes.

Var add(Var a, Var b);        // same shape
Var sub(Var a, Var b);
Var mul(Var a, Var b);        // elementwise
Var divide(Var a, Var b, double eps = kGuardEps);  // denominator guarded away from 0
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);     // rank-2 only
Var transpose(Var a);
Var exp(Var a);
Var log(Var a, double eps = kGuardEps);  // log(max(x, eps))
Var tanh(Var a);
Var sqrt(Var a);
Var sum(Var a);               // -> scalar
Var mean(Var a);              // -> scalar
Var row_sums(Var m);          // n x d -> n
Var rows_mean(Var m);         // n x d -> n, mean over columns per row
Var row_norms(Var m, double eps = kGuardEps);  // n x d -> n, L2 norm per row (guarded)
Var rows_add(Var m, Var v);   // broadcast v (len d) across rows of m (n x d)
Var rows_mul(Var m, Var v);
Var colv_sub(Var m, Var v);   // subtract v_i from every entry of row i (v len n)
Var colv_div(Var m, Var v, double eps = kGuardEps);
Var row_softmax(Var m);       // stabilized softmax per row
Var row_softmax_nodiag(Var m);  // square m; diagonal excluded from support and normalizer
Var concat_rows(Var a, Var b);  // stack two matrices with equal column counts
Var slice_rows(Var m, std::size_t first, std::size_t count);
Var reshape(Var a, std::vector<std::size_t> shape);

// ---- gradient checking -----------------------------------------------------

// Builds a scalar graph from leaves bound to `inputs`, runs one analytic
// backward, then central finite differences with the given step, and returns
// max over all coordinates of |g_analytic - g_fd| / max(1, |g_fd|).
// Throws if the function value is not finite near the evaluation point.
using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;
double finite_diff_check(const GraphFn& f, const std::vector<Tensor>& inputs, double step);

// Single-input convenience.
double finite_diff_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double step);

}  // namespace orthodistill

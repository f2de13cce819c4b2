#include "orthodistill/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "orthodistill/kernels.hpp"
#include "orthodistill/util.hpp"

namespace orthodistill {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(cat(op, ": shape mismatch ", a.shape_str(), " vs ", b.shape_str()));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) shape_error(op, a, b);
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
    if (a.rank() != rank)
        throw std::invalid_argument(cat(op, ": expected rank-", rank, " operand, got ", a.shape_str()));
}

// dst += src (same shape by construction)
void axpy(Tensor& dst, const Tensor& src) {
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t i = 0, n = dst.size(); i < n; ++i) d[i] += s[i];
}

double guard_away_from_zero(double x, double eps) {
    if (x > eps || x < -eps) return x;
    return x < 0.0 ? -eps : eps;
}

void require_same_tape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || a.tape != b.tape)
        throw std::invalid_argument(cat(op, ": operands recorded on different tapes"));
}

}  // namespace

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackFn back) {
    bool tracked = false;
    for (std::size_t p : parents) tracked = tracked || nodes_[p].tracked;
    nodes_.push_back(Node{std::move(value), std::move(parents), std::move(back), tracked});
    return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, true});
    return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, false});
    return Var{this, nodes_.size() - 1};
}

void Tape::check_owns(const Var& v, const char* op) const {
    if (v.tape != this || v.id >= nodes_.size())
        throw std::invalid_argument(cat(op, ": value is not on this tape"));
}

const Tensor& Tape::value(const Var& v) const {
    check_owns(v, "value");
    return nodes_[v.id].value;
}

const Tensor& Tape::grad(const Var& v) const {
    check_owns(v, "grad");
    if (adjoints_.size() != nodes_.size())
        throw std::logic_error("grad: backward() has not been run on this tape");
    return adjoints_[v.id];
}

void Tape::backward(const Var& root) {
    check_owns(root, "backward");
    const Tensor& rv = nodes_[root.id].value;
    if (!rv.is_scalar())
        throw std::invalid_argument(cat("backward: root must be scalar, got ", rv.shape_str()));

    adjoints_.clear();
    adjoints_.reserve(nodes_.size());
    for (const Node& n : nodes_) adjoints_.push_back(Tensor::zeros(n.value.shape()));
    adjoints_[root.id][0] = 1.0;

    // Exact reverse order of recording; untracked subgraphs cannot reach a
    // leaf, so their records are skipped.
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        const Node& n = nodes_[i];
        if (n.tracked && n.back) n.back(*this, i);
    }

    // Tracked records may have written into constant parents; no gradient
    // flows into an untracked value, so those adjoints read as zero.
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (!nodes_[i].tracked)
            for (std::size_t j = 0; j < adjoints_[i].size(); ++j) adjoints_[i][j] = 0.0;
}

// ---- elementwise -----------------------------------------------------------

Var add(Var a, Var b) {
    require_same_tape(a, b, "add");
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    require_same_shape("add", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
    return a.tape->record(std::move(out), {a.id, b.id},
                          [pa = a.id, pb = b.id](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              axpy(t.adjoint(pa), g);
                              axpy(t.adjoint(pb), g);
                          });
}

Var sub(Var a, Var b) {
    require_same_tape(a, b, "sub");
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    require_same_shape("sub", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
    return a.tape->record(std::move(out), {a.id, b.id},
                          [pa = a.id, pb = b.id](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              axpy(t.adjoint(pa), g);
                              Tensor& db = t.adjoint(pb);
                              for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
                          });
}

Var mul(Var a, Var b) {
    require_same_tape(a, b, "mul");
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    require_same_shape("mul", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
    return a.tape->record(std::move(out), {a.id, b.id},
                          [pa = a.id, pb = b.id](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              const Tensor& va = t.node_value(pa);
                              const Tensor& vb = t.node_value(pb);
                              Tensor& da = t.adjoint(pa);
                              Tensor& db = t.adjoint(pb);
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  da[i] += g[i] * vb[i];
                                  db[i] += g[i] * va[i];
                              }
                          });
}

Var divide(Var a, Var b, double eps) {
    require_same_tape(a, b, "divide");
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    require_same_shape("divide", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= guard_away_from_zero(tb[i], eps);
    return a.tape->record(std::move(out), {a.id, b.id},
                          [pa = a.id, pb = b.id, eps](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              const Tensor& va = t.node_value(pa);
                              const Tensor& vb = t.node_value(pb);
                              Tensor& da = t.adjoint(pa);
                              Tensor& db = t.adjoint(pb);
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  double d = guard_away_from_zero(vb[i], eps);
                                  da[i] += g[i] / d;
                                  if (vb[i] > eps || vb[i] < -eps)
                                      db[i] -= g[i] * va[i] / (d * d);
                              }
                          });
}

Var scale(Var a, double c) {
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return a.tape->record(std::move(out), {a.id},
                          [pa = a.id, c](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              Tensor& da = t.adjoint(pa);
                              for (std::size_t i = 0; i < g.size(); ++i) da[i] += c * g[i];
                          });
}

Var add_scalar(Var a, double c) {
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
    return a.tape->record(std::move(out), {a.id},
                          [pa = a.id](Tape& t, std::size_t self) {
                              axpy(t.adjoint(pa), t.adjoint(self));
                          });
}

Var exp(Var a) {
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return a.tape->record(std::move(out), {a.id},
                          [pa = a.id](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              const Tensor& y = t.node_value(self);
                              Tensor& da = t.adjoint(pa);
                              for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i];
                          });
}

Var log(Var a, double eps) {
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(out[i], eps));
    return a.tape->record(std::move(out), {a.id},
                          [pa = a.id, eps](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              const Tensor& x = t.node_value(pa);
                              Tensor& da = t.adjoint(pa);
                              for (std::size_t i = 0; i < g.size(); ++i)
                                  if (x[i] > eps) da[i] += g[i] / x[i];
                          });
}

Var tanh(Var a) {
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    return a.tape->record(std::move(out), {a.id},
                          [pa = a.id](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              const Tensor& y = t.node_value(self);
                              Tensor& da = t.adjoint(pa);
                              for (std::size_t i = 0; i < g.size(); ++i)
                                  da[i] += g[i] * (1.0 - y[i] * y[i]);
                          });
}

Var sqrt(Var a) {
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
    return a.tape->record(std::move(out), {a.id},
                          [pa = a.id](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              const Tensor& y = t.node_value(self);
                              Tensor& da = t.adjoint(pa);
                              for (std::size_t i = 0; i < g.size(); ++i)
                                  da[i] += g[i] / (2.0 * std::max(y[i], kGuardEps));
                          });
}

// ---- reductions ------------------------------------------------------------

Var sum(Var a) {
    double acc = 0.0;
    const Tensor& ta = a.value();
    for (std::size_t i = 0; i < ta.size(); ++i) acc += ta[i];
    return a.tape->record(Tensor::scalar(acc), {a.id},
                          [pa = a.id](Tape& t, std::size_t self) {
                              double g = t.adjoint(self)[0];
                              Tensor& da = t.adjoint(pa);
                              for (std::size_t i = 0; i < da.size(); ++i) da[i] += g;
                          });
}

Var mean(Var a) {
    const Tensor& ta = a.value();
    if (ta.size() == 0) throw std::invalid_argument("mean: empty operand");
    double acc = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) acc += ta[i];
    double inv = 1.0 / static_cast<double>(ta.size());
    return a.tape->record(Tensor::scalar(acc * inv), {a.id},
                          [pa = a.id, inv](Tape& t, std::size_t self) {
                              double g = t.adjoint(self)[0] * inv;
                              Tensor& da = t.adjoint(pa);
                              for (std::size_t i = 0; i < da.size(); ++i) da[i] += g;
                          });
}

Var row_sums(Var m) {
    const Tensor& tm = m.value();
    require_rank("row_sums", tm, 2);
    std::size_t n = tm.rows(), d = tm.cols();
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += tm.at(i, j);
        out[i] = acc;
    }
    return m.tape->record(std::move(out), {m.id},
                          [pm = m.id, n, d](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              Tensor& dm = t.adjoint(pm);
                              for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < d; ++j) dm[i * d + j] += g[i];
                          });
}

Var rows_mean(Var m) {
    const Tensor& tm = m.value();
    require_rank("rows_mean", tm, 2);
    std::size_t n = tm.rows(), d = tm.cols();
    if (d == 0) throw std::invalid_argument("rows_mean: zero columns");
    double inv = 1.0 / static_cast<double>(d);
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += tm.at(i, j);
        out[i] = acc * inv;
    }
    return m.tape->record(std::move(out), {m.id},
                          [pm = m.id, n, d, inv](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              Tensor& dm = t.adjoint(pm);
                              for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < d; ++j) dm[i * d + j] += g[i] * inv;
                          });
}

Var row_norms(Var m, double eps) {
    const Tensor& tm = m.value();
    require_rank("row_norms", tm, 2);
    std::size_t n = tm.rows(), d = tm.cols();
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += tm.at(i, j) * tm.at(i, j);
        out[i] = std::max(std::sqrt(acc), eps);
    }
    return m.tape->record(std::move(out), {m.id},
                          [pm = m.id, n, d, eps](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              const Tensor& r = t.node_value(self);
                              const Tensor& x = t.node_value(pm);
                              Tensor& dm = t.adjoint(pm);
                              for (std::size_t i = 0; i < n; ++i) {
                                  if (r[i] <= eps) continue;
                                  double gi = g[i] / r[i];
                                  for (std::size_t j = 0; j < d; ++j)
                                      dm[i * d + j] += gi * x[i * d + j];
                              }
                          });
}

// ---- broadcasts ------------------------------------------------------------

namespace {
void require_rowvec(const char* op, const Tensor& m, const Tensor& v) {
    if (m.rank() != 2 || v.rank() != 1 || v.size() != m.cols()) shape_error(op, m, v);
}
void require_colvec(const char* op, const Tensor& m, const Tensor& v) {
    if (m.rank() != 2 || v.rank() != 1 || v.size() != m.rows()) shape_error(op, m, v);
}
}  // namespace

Var rows_add(Var m, Var v) {
    require_same_tape(m, v, "rows_add");
    const Tensor& tm = m.value();
    const Tensor& tv = v.value();
    require_rowvec("rows_add", tm, tv);
    std::size_t n = tm.rows(), d = tm.cols();
    Tensor out = tm;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] += tv[j];
    return m.tape->record(std::move(out), {m.id, v.id},
                          [pm = m.id, pv = v.id, n, d](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              axpy(t.adjoint(pm), g);
                              Tensor& dv = t.adjoint(pv);
                              for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < d; ++j) dv[j] += g[i * d + j];
                          });
}

Var rows_mul(Var m, Var v) {
    require_same_tape(m, v, "rows_mul");
    const Tensor& tm = m.value();
    const Tensor& tv = v.value();
    require_rowvec("rows_mul", tm, tv);
    std::size_t n = tm.rows(), d = tm.cols();
    Tensor out = tm;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] *= tv[j];
    return m.tape->record(std::move(out), {m.id, v.id},
                          [pm = m.id, pv = v.id, n, d](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              const Tensor& vm = t.node_value(pm);
                              const Tensor& vv = t.node_value(pv);
                              Tensor& dm = t.adjoint(pm);
                              Tensor& dv = t.adjoint(pv);
                              for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < d; ++j) {
                                      dm[i * d + j] += g[i * d + j] * vv[j];
                                      dv[j] += g[i * d + j] * vm[i * d + j];
                                  }
                          });
}

Var colv_sub(Var m, Var v) {
    require_same_tape(m, v, "colv_sub");
    const Tensor& tm = m.value();
    const Tensor& tv = v.value();
    require_colvec("colv_sub", tm, tv);
    std::size_t n = tm.rows(), d = tm.cols();
    Tensor out = tm;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] -= tv[i];
    return m.tape->record(std::move(out), {m.id, v.id},
                          [pm = m.id, pv = v.id, n, d](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              axpy(t.adjoint(pm), g);
                              Tensor& dv = t.adjoint(pv);
                              for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < d; ++j) dv[i] -= g[i * d + j];
                          });
}

Var colv_div(Var m, Var v, double eps) {
    require_same_tape(m, v, "colv_div");
    const Tensor& tm = m.value();
    const Tensor& tv = v.value();
    require_colvec("colv_div", tm, tv);
    std::size_t n = tm.rows(), d = tm.cols();
    Tensor out = tm;
    for (std::size_t i = 0; i < n; ++i) {
        double inv = 1.0 / guard_away_from_zero(tv[i], eps);
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] *= inv;
    }
    return m.tape->record(std::move(out), {m.id, v.id},
                          [pm = m.id, pv = v.id, n, d, eps](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              const Tensor& vm = t.node_value(pm);
                              const Tensor& vv = t.node_value(pv);
                              Tensor& dm = t.adjoint(pm);
                              Tensor& dv = t.adjoint(pv);
                              for (std::size_t i = 0; i < n; ++i) {
                                  double den = guard_away_from_zero(vv[i], eps);
                                  bool live = vv[i] > eps || vv[i] < -eps;
                                  for (std::size_t j = 0; j < d; ++j) {
                                      dm[i * d + j] += g[i * d + j] / den;
                                      if (live)
                                          dv[i] -= g[i * d + j] * vm[i * d + j] / (den * den);
                                  }
                              }
                          });
}

// ---- linear algebra --------------------------------------------------------

Var matmul(Var a, Var b) {
    require_same_tape(a, b, "matmul");
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    require_rank("matmul", ta, 2);
    require_rank("matmul", tb, 2);
    if (ta.cols() != tb.rows()) shape_error("matmul", ta, tb);
    std::size_t n = ta.rows(), k = ta.cols(), m = tb.cols();
    Tensor out({n, m});
    kernels::matmul(ta.data(), tb.data(), out.data(), n, k, m);
    return a.tape->record(std::move(out), {a.id, b.id},
                          [pa = a.id, pb = b.id, n, k, m](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              const Tensor& va = t.node_value(pa);
                              const Tensor& vb = t.node_value(pb);
                              Tensor da({n, k});
                              kernels::matmul(g.data(), vb.data(), da.data(), n, m, k, false, true);
                              axpy(t.adjoint(pa), da);
                              Tensor db({k, m});
                              kernels::matmul(va.data(), g.data(), db.data(), k, n, m, true, false);
                              axpy(t.adjoint(pb), db);
                          });
}

Var transpose(Var a) {
    const Tensor& ta = a.value();
    require_rank("transpose", ta, 2);
    std::size_t n = ta.rows(), m = ta.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j * n + i] = ta[i * m + j];
    return a.tape->record(std::move(out), {a.id},
                          [pa = a.id, n, m](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);  // m x n
                              Tensor& da = t.adjoint(pa);         // n x m
                              for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < m; ++j)
                                      da[i * m + j] += g[j * n + i];
                          });
}

// ---- softmax ---------------------------------------------------------------

Var row_softmax(Var m) {
    const Tensor& tm = m.value();
    require_rank("row_softmax", tm, 2);
    std::size_t n = tm.rows(), d = tm.cols();
    if (d == 0) throw std::invalid_argument("row_softmax: zero columns");
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        double mx = tm.at(i, 0);
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, tm.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double e = std::exp(tm.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) /= denom;
    }
    return m.tape->record(std::move(out), {m.id},
                          [pm = m.id, n, d](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              const Tensor& y = t.node_value(self);
                              Tensor& dm = t.adjoint(pm);
                              for (std::size_t i = 0; i < n; ++i) {
                                  double dot = 0.0;
                                  for (std::size_t j = 0; j < d; ++j)
                                      dot += g[i * d + j] * y[i * d + j];
                                  for (std::size_t j = 0; j < d; ++j)
                                      dm[i * d + j] += y[i * d + j] * (g[i * d + j] - dot);
                              }
                          });
}

Var row_softmax_nodiag(Var m) {
    const Tensor& tm = m.value();
    require_rank("row_softmax_nodiag", tm, 2);
    std::size_t n = tm.rows();
    if (tm.cols() != n || n < 2)
        throw std::invalid_argument(
            cat("row_softmax_nodiag: need square operand with n >= 2, got ", tm.shape_str()));
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -HUGE_VAL;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) mx = std::max(mx, tm.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) {
                out.at(i, j) = 0.0;
                continue;
            }
            double e = std::exp(tm.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        denom = std::max(denom, kGuardEps);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) out.at(i, j) /= denom;
    }
    return m.tape->record(std::move(out), {m.id},
                          [pm = m.id, n](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              const Tensor& y = t.node_value(self);
                              Tensor& dm = t.adjoint(pm);
                              for (std::size_t i = 0; i < n; ++i) {
                                  double dot = 0.0;
                                  for (std::size_t j = 0; j < n; ++j)
                                      dot += g[i * n + j] * y[i * n + j];
                                  for (std::size_t j = 0; j < n; ++j) {
                                      if (j == i) continue;
                                      dm[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
                                  }
                              }
                          });
}

// ---- structure -------------------------------------------------------------

Var concat_rows(Var a, Var b) {
    require_same_tape(a, b, "concat_rows");
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    require_rank("concat_rows", ta, 2);
    require_rank("concat_rows", tb, 2);
    if (ta.cols() != tb.cols()) shape_error("concat_rows", ta, tb);
    std::size_t na = ta.rows(), nb = tb.rows(), d = ta.cols();
    Tensor out({na + nb, d});
    std::copy(ta.data(), ta.data() + ta.size(), out.data());
    std::copy(tb.data(), tb.data() + tb.size(), out.data() + ta.size());
    return a.tape->record(std::move(out), {a.id, b.id},
                          [pa = a.id, pb = b.id, na, nb, d](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              Tensor& da = t.adjoint(pa);
                              Tensor& db = t.adjoint(pb);
                              for (std::size_t i = 0; i < na * d; ++i) da[i] += g[i];
                              for (std::size_t i = 0; i < nb * d; ++i) db[i] += g[na * d + i];
                          });
}

Var slice_rows(Var m, std::size_t first, std::size_t count) {
    const Tensor& tm = m.value();
    require_rank("slice_rows", tm, 2);
    std::size_t n = tm.rows(), d = tm.cols();
    if (first + count > n)
        throw std::invalid_argument(cat("slice_rows: rows [", first, ", ", first + count,
                                        ") out of range for ", tm.shape_str()));
    Tensor out({count, d});
    std::copy(tm.data() + first * d, tm.data() + (first + count) * d, out.data());
    return m.tape->record(std::move(out), {m.id},
                          [pm = m.id, first, count, d](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              Tensor& dm = t.adjoint(pm);
                              for (std::size_t i = 0; i < count * d; ++i)
                                  dm[first * d + i] += g[i];
                          });
}

Var reshape(Var a, std::vector<std::size_t> shape) {
    const Tensor& ta = a.value();
    Tensor out(std::move(shape), std::vector<double>(ta.data(), ta.data() + ta.size()));
    return a.tape->record(std::move(out), {a.id},
                          [pa = a.id](Tape& t, std::size_t self) {
                              const Tensor& g = t.adjoint(self);
                              Tensor& da = t.adjoint(pa);
                              for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                          });
}

// ---- gradient checking -----------------------------------------------------

double finite_diff_check(const GraphFn& f, const std::vector<Tensor>& inputs, double step) {
    if (step <= 0.0) throw std::invalid_argument("finite_diff_check: step must be > 0");

    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
    Var root = f(tape, leaves);
    const Tensor& rv = root.value();
    if (!rv.is_scalar())
        throw std::invalid_argument(cat("finite_diff_check: function must be scalar, got ",
                                        rv.shape_str()));
    if (!std::isfinite(rv.value()))
        throw std::runtime_error("finite_diff_check: non-finite value at evaluation point");
    tape.backward(root);

    std::vector<Tensor> grads;
    grads.reserve(leaves.size());
    for (const Var& v : leaves) grads.push_back(tape.grad(v));

    auto eval = [&f](const std::vector<Tensor>& xs) {
        Tape t;
        std::vector<Var> ls;
        ls.reserve(xs.size());
        for (const Tensor& x : xs) ls.push_back(t.leaf(x));
        double v = f(t, ls).value().value();
        if (!std::isfinite(v))
            throw std::runtime_error("finite_diff_check: non-finite value near evaluation point");
        return v;
    };

    std::vector<Tensor> xs = inputs;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = 0; j < xs[i].size(); ++j) {
            double orig = xs[i][j];
            xs[i][j] = orig + step;
            double fp = eval(xs);
            xs[i][j] = orig - step;
            double fm = eval(xs);
            xs[i][j] = orig;
            double g_fd = (fp - fm) / (2.0 * step);
            double rel = std::abs(grads[i][j] - g_fd) / std::max(1.0, std::abs(g_fd));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

double finite_diff_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double step) {
    return finite_diff_check(
        [&f](Tape& t, const std::vector<Var>& vs) { return f(t, vs[0]); },
        std::vector<Tensor>{x}, step);
}

}  // namespace orthodistill

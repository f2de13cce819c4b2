#include "orthodistill/distill.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "orthodistill/metrics.hpp"
#include "orthodistill/util.hpp"

namespace orthodistill {

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::tintem_frozen: return "tintem_frozen";
        case Variant::tintem_weighted: return "tintem_weighted";
        case Variant::proteus: return "proteus";
    }
    return "?";
}

const char* student_metric_name(StudentMetric m) {
    return m == StudentMetric::cosine ? "cosine" : "mse";
}

// ---- student network ---------------------------------------------------------

StudentNet make_student(std::size_t d_in, std::size_t hidden, std::size_t d_out,
                        std::uint64_t seed) {
    if (d_in == 0 || hidden == 0 || d_out == 0)
        throw std::invalid_argument("make_student: dimensions must be >= 1");
    Rng rng(mix_seed(seed, 13));
    StudentNet s;
    s.seed = seed;
    s.w1 = Tensor({d_in, hidden});
    double s1 = 1.0 / std::sqrt(static_cast<double>(d_in));
    for (std::size_t i = 0; i < s.w1.size(); ++i) s.w1[i] = rng.gaussian() * s1;
    s.b1 = Tensor::zeros({hidden});
    s.w2 = Tensor({hidden, d_out});
    double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (std::size_t i = 0; i < s.w2.size(); ++i) s.w2[i] = rng.gaussian() * s2;
    s.b2 = Tensor::zeros({d_out});
    return s;
}

Tensor student_forward_rows(const StudentNet& s, const Tensor& rows) {
    return mlp_forward_rows(s.w1, s.b1, s.w2, s.b2, rows);
}

TokenSet student_forward(const StudentNet& s, const TokenSet& x) {
    Tensor mapped = student_forward_rows(s, x.all_tokens());
    std::size_t d = s.d_out(), np = x.n_patch();
    Tensor cls({d});
    for (std::size_t j = 0; j < d; ++j) cls[j] = mapped.at(0, j);
    Tensor patches({np, d});
    for (std::size_t i = 0; i < np; ++i)
        for (std::size_t j = 0; j < d; ++j) patches.at(i, j) = mapped.at(1 + i, j);
    return TokenSet{std::move(cls), std::move(patches)};
}

StudentVars lift(Tape& tape, const StudentNet& s) {
    return StudentVars{tape.leaf(s.w1), tape.leaf(s.b1), tape.leaf(s.w2), tape.leaf(s.b2)};
}

Var student_forward_rows(const StudentVars& s, Var rows) {
    Var hidden = tanh(rows_add(matmul(rows, s.w1), s.b1));
    return rows_add(matmul(hidden, s.w2), s.b2);
}

std::vector<Tensor*> param_ptrs(StudentNet& s) { return {&s.w1, &s.b1, &s.w2, &s.b2}; }

std::vector<Var> param_vars(const StudentVars& s) { return {s.w1, s.b1, s.w2, s.b2}; }

// ---- optimizer ------------------------------------------------------------------

Optimizer::Optimizer(OptimizerConfig cfg, std::vector<Tensor*> params)
    : cfg_(cfg), params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Tensor* p : params_) {
        m_.push_back(Tensor::zeros(p->shape()));
        v_.push_back(Tensor::zeros(p->shape()));
    }
}

void Optimizer::step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size())
        throw std::invalid_argument(cat("optimizer: ", grads.size(), " gradients for ",
                                        params_.size(), " parameters"));
    if (cfg_.lr == 0.0) return;
    ++t_;
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Tensor& w = *params_[p];
        const Tensor& g = grads[p];
        if (!w.same_shape(g))
            throw std::invalid_argument(cat("optimizer: gradient shape ", g.shape_str(),
                                            " vs parameter ", w.shape_str()));
        if (cfg_.kind == OptimizerKind::adam) {
            double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
            double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
            for (std::size_t i = 0; i < w.size(); ++i) {
                m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g[i];
                v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                double mhat = m_[p][i] / c1;
                double vhat = v_[p][i] / c2;
                w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        } else {
            for (std::size_t i = 0; i < w.size(); ++i) {
                m_[p][i] = cfg_.momentum * m_[p][i] + g[i];
                w[i] -= cfg_.lr * m_[p][i];
            }
        }
    }
}

// ---- config -----------------------------------------------------------------------

void DistillConfig::validate() const {
    if (variant == Variant::tintem_weighted && !(gamma > 0.0))
        throw std::invalid_argument(cat("distill config: gamma must be > 0, got ", gamma));
    if (batch_size < 2)
        throw std::invalid_argument(cat("distill config: batch size must be >= 2, got ",
                                        batch_size));
    if (epochs > 0 && (d_student == 0 || student_hidden == 0))
        throw std::invalid_argument("distill config: student dimensions must be >= 1");
}

OptimizerConfig DistillConfig::head_optimizer() const {
    return OptimizerConfig{optimizer, head_lr, adam_beta1, adam_beta2, adam_eps, sgd_momentum};
}

OptimizerConfig DistillConfig::student_optimizer() const {
    return OptimizerConfig{optimizer, student_lr, adam_beta1, adam_beta2, adam_eps, sgd_momentum};
}

// ---- steps ------------------------------------------------------------------------

namespace {

struct BatchMats {
    Tensor input_class;    // N x d_in
    Tensor input_all;      // total tokens x d_in (sample-major, class token first)
    Tensor teacher_class;  // N x D_T
    Tensor teacher_all;    // total tokens x D_T
};

Tensor stack_class(const std::vector<const TokenSet*>& sets) {
    std::size_t n = sets.size(), d = sets[0]->dim();
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) = sets[i]->class_token[j];
    return out;
}

Tensor stack_all(const std::vector<const TokenSet*>& sets) {
    std::size_t d = sets[0]->dim(), total = 0;
    for (const TokenSet* t : sets) total += 1 + t->n_patch();
    Tensor out({total, d});
    std::size_t row = 0;
    for (const TokenSet* t : sets) {
        Tensor all = t->all_tokens();
        for (std::size_t i = 0; i < all.rows(); ++i, ++row)
            for (std::size_t j = 0; j < d; ++j) out.at(row, j) = all.at(i, j);
    }
    return out;
}

BatchMats assemble(const std::vector<const TokenSet*>& inputs,
                   const std::vector<const TokenSet*>& teacher_out, bool with_all) {
    if (inputs.size() != teacher_out.size() || inputs.size() < 2)
        throw std::invalid_argument(cat("step: batch must pair inputs with teacher outputs and "
                                        "hold >= 2 samples, got ",
                                        inputs.size(), " and ", teacher_out.size()));
    BatchMats bm;
    bm.input_class = stack_class(inputs);
    bm.teacher_class = stack_class(teacher_out);
    if (with_all) {
        bm.input_all = stack_all(inputs);
        bm.teacher_all = stack_all(teacher_out);
        if (bm.input_all.rows() != bm.teacher_all.rows())
            throw std::invalid_argument("step: token counts differ between inputs and teacher outputs");
    }
    return bm;
}

Var metric_loss(StudentMetric metric, Var z, Var y) {
    return metric == StudentMetric::cosine ? cosine_set_loss(z, y) : l2_set_loss(z, y);
}

void require_finite(const Var& total, const char* what) {
    if (!std::isfinite(total.value().value()))
        throw std::runtime_error(cat(what, ": non-finite loss ", total.value().value()));
}

std::vector<Tensor> collect_grads(Tape& tape, const std::vector<Var>& vars) {
    std::vector<Tensor> grads;
    grads.reserve(vars.size());
    for (const Var& v : vars) grads.push_back(tape.grad(v));
    return grads;
}

}  // namespace

StepLosses tintem_step(const std::vector<const TokenSet*>& inputs,
                       const std::vector<const TokenSet*>& teacher_out, HeadParams& head,
                       StudentNet& student, Optimizer& head_opt, Optimizer& student_opt,
                       const DistillConfig& cfg) {
    BatchMats bm = assemble(inputs, teacher_out, cfg.feature_term);

    Tape tape;
    HeadVars h = lift(tape, head);
    StudentVars s = lift(tape, student);

    Var dim_red = dim_red_loss(tape, teacher_out, h, cfg.temperatures, cfg.feature_term);

    // student targets detached: the head is a constant for the student term
    Var st_class = student_forward_rows(s, tape.constant(bm.input_class));
    Var stud = metric_loss(cfg.student_metric, st_class,
                           tape.constant(head_forward_rows(head, bm.teacher_class)));
    if (cfg.feature_term) {
        Var st_all = student_forward_rows(s, tape.constant(bm.input_all));
        stud = add(stud, metric_loss(cfg.student_metric, st_all,
                                     tape.constant(head_forward_rows(head, bm.teacher_all))));
    }

    Var total = add(dim_red, stud);
    require_finite(total, "tintem_step");
    tape.backward(total);

    head_opt.step(collect_grads(tape, param_vars(h)));
    student_opt.step(collect_grads(tape, param_vars(s)));
    return StepLosses{dim_red.value().value(), stud.value().value(), total.value().value()};
}

StepLosses tintem_weighted_step(const std::vector<const TokenSet*>& inputs,
                                const std::vector<const TokenSet*>& teacher_out, HeadParams& head,
                                StudentNet& student, double gamma, Optimizer& head_opt,
                                Optimizer& student_opt, const DistillConfig& cfg) {
    if (!(gamma > 0.0))
        throw std::invalid_argument(cat("tintem_weighted_step: gamma must be > 0, got ", gamma));
    BatchMats bm = assemble(inputs, teacher_out, cfg.feature_term);

    Tape tape;
    HeadVars h = lift(tape, head);
    StudentVars s = lift(tape, student);

    Var dim_red = dim_red_loss(tape, teacher_out, h, cfg.temperatures, cfg.feature_term);

    // no freezing: head gradients flow through the student term as well
    Var st_class = student_forward_rows(s, tape.constant(bm.input_class));
    Var stud = metric_loss(cfg.student_metric, st_class,
                           head_forward_rows(h, tape.constant(bm.teacher_class)));
    if (cfg.feature_term) {
        Var st_all = student_forward_rows(s, tape.constant(bm.input_all));
        stud = add(stud, metric_loss(cfg.student_metric, st_all,
                                     head_forward_rows(h, tape.constant(bm.teacher_all))));
    }

    Var total = add(scale(dim_red, gamma), stud);
    require_finite(total, "tintem_weighted_step");
    tape.backward(total);

    head_opt.step(collect_grads(tape, param_vars(h)));
    student_opt.step(collect_grads(tape, param_vars(s)));
    return StepLosses{dim_red.value().value(), stud.value().value(), total.value().value()};
}

StepLosses proteus_step(const std::vector<const TokenSet*>& inputs,
                        const std::vector<const TokenSet*>& teacher_out, HeadParams& g_feature,
                        HeadParams& g_class, StudentNet& student, Optimizer& heads_opt,
                        Optimizer& student_opt, const DistillConfig& cfg) {
    BatchMats bm = assemble(inputs, teacher_out, cfg.feature_term);

    Tape tape;
    HeadVars gf = lift(tape, g_feature);
    HeadVars gc = lift(tape, g_class);
    StudentVars s = lift(tape, student);

    Var st_class = student_forward_rows(s, tape.constant(bm.input_class));
    Var total = l2_set_loss(head_forward_rows(gc, st_class), tape.constant(bm.teacher_class));
    if (cfg.feature_term) {
        Var st_all = student_forward_rows(s, tape.constant(bm.input_all));
        total = add(l2_set_loss(head_forward_rows(gf, st_all), tape.constant(bm.teacher_all)),
                    total);
    }
    require_finite(total, "proteus_step");
    tape.backward(total);

    std::vector<Var> head_vars = param_vars(gf);
    for (Var v : param_vars(gc)) head_vars.push_back(v);
    heads_opt.step(collect_grads(tape, head_vars));
    student_opt.step(collect_grads(tape, param_vars(s)));
    double t = total.value().value();
    return StepLosses{0.0, t, t};
}

// ---- training loop -------------------------------------------------------------------

TrainResult train(const Dataset& data, const SyntheticTeacher& teacher,
                  const DistillConfig& cfg) {
    cfg.validate();
    if (data.samples.empty()) throw std::invalid_argument("train: dataset is empty");
    if (teacher.d_in() != data.d_in())
        throw std::invalid_argument(cat("train: teacher d_in ", teacher.d_in(),
                                        " does not match dataset d_in ", data.d_in()));
    if (cfg.epochs > 0 && data.size() < cfg.batch_size)
        throw std::invalid_argument(cat("train: dataset of ", data.size(),
                                        " samples is smaller than one batch of ", cfg.batch_size));

    std::vector<TokenSet> teacher_out = teacher_forward_all(teacher, data);
    std::size_t d_t = teacher.d_out();

    TrainResult res;
    res.models.variant = cfg.variant;
    res.models.student = make_student(data.d_in(), cfg.student_hidden, cfg.d_student,
                                      cfg.student_seed);

    std::vector<Tensor*> head_params;
    if (cfg.variant == Variant::proteus) {
        res.models.g_feature = init_head(cfg.d_student, d_t, NormMode::layernorm, cfg.head_seed);
        res.models.g_class =
            init_head(cfg.d_student, d_t, NormMode::layernorm, mix_seed(cfg.head_seed, 1));
        head_params = param_ptrs(res.models.g_feature);
        for (Tensor* p : param_ptrs(res.models.g_class)) head_params.push_back(p);
    } else {
        res.models.teacher_head = init_head(d_t, cfg.d_student, NormMode::layernorm, cfg.head_seed);
        head_params = param_ptrs(res.models.teacher_head);
    }

    Optimizer head_opt(cfg.head_optimizer(), head_params);
    Optimizer student_opt(cfg.student_optimizer(), param_ptrs(res.models.student));

    auto gram_scores = [&]() {
        std::vector<HeadGramScores> gram;
        auto score = [](const std::string& name, const Tensor& w) {
            return HeadGramScores{name, gram_orthogonality(w, GramSide::wtw).score,
                                  gram_orthogonality(w, GramSide::wwt).score};
        };
        if (cfg.variant == Variant::proteus) {
            gram.push_back(score("g_feature", res.models.g_feature.W));
            gram.push_back(score("g_class", res.models.g_class.W));
        } else {
            gram.push_back(score("teacher_head", res.models.teacher_head.W));
        }
        return gram;
    };

    std::size_t n = data.size();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(mix_seed(cfg.shuffle_seed, epoch));
        deterministic_shuffle(order, shuffle_rng);

        StepLosses epoch_acc;
        std::size_t steps = 0;
        for (std::size_t start = 0; start + cfg.batch_size <= n; start += cfg.batch_size) {
            std::vector<const TokenSet*> inputs, targets;
            inputs.reserve(cfg.batch_size);
            targets.reserve(cfg.batch_size);
            for (std::size_t i = 0; i < cfg.batch_size; ++i) {
                inputs.push_back(&data.samples[order[start + i]].tokens);
                targets.push_back(&teacher_out[order[start + i]]);
            }
            StepLosses l;
            try {
                switch (cfg.variant) {
                    case Variant::tintem_frozen:
                        l = tintem_step(inputs, targets, res.models.teacher_head,
                                        res.models.student, head_opt, student_opt, cfg);
                        break;
                    case Variant::tintem_weighted:
                        l = tintem_weighted_step(inputs, targets, res.models.teacher_head,
                                                 res.models.student, cfg.gamma, head_opt,
                                                 student_opt, cfg);
                        break;
                    case Variant::proteus:
                        l = proteus_step(inputs, targets, res.models.g_feature,
                                         res.models.g_class, res.models.student, head_opt,
                                         student_opt, cfg);
                        break;
                }
            } catch (const std::exception& ex) {
                throw std::runtime_error(cat("train: epoch ", epoch, " batch ", steps, ": ",
                                             ex.what()));
            }
            epoch_acc.dim_red += l.dim_red;
            epoch_acc.student += l.student;
            epoch_acc.total += l.total;
            ++steps;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        double inv = steps > 0 ? 1.0 / static_cast<double>(steps) : 0.0;
        rec.dim_red_loss = epoch_acc.dim_red * inv;
        rec.student_loss = epoch_acc.student * inv;
        rec.total_loss = epoch_acc.total * inv;
        rec.gram = gram_scores();
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.history.epochs.push_back(std::move(rec));
        log_debug(cat("epoch ", epoch, " total loss ", res.history.epochs.back().total_loss));
    }
    return res;
}

}  // namespace orthodistill

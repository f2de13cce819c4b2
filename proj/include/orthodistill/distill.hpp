#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "orthodistill/autodiff.hpp"
#include "orthodistill/heads.hpp"
#include "orthodistill/simgeom.hpp"
#include "orthodistill/synthdata.hpp"

namespace orthodistill {

// Trainable token-wise two-layer tanh network d_in -> d_out.
struct StudentNet {
    Tensor w1;  // d_in x hidden
    Tensor b1;  // hidden
    Tensor w2;  // hidden x d_out
    Tensor b2;  // d_out
    std::uint64_t seed = 0;

    std::size_t d_in() const { return w1.rows(); }
    std::size_t hidden() const { return w1.cols(); }
    std::size_t d_out() const { return w2.cols(); }
};

StudentNet make_student(std::size_t d_in, std::size_t hidden, std::size_t d_out,
                        std::uint64_t seed);
TokenSet student_forward(const StudentNet& s, const TokenSet& x);
Tensor student_forward_rows(const StudentNet& s, const Tensor& rows);

struct StudentVars {
    Var w1, b1, w2, b2;
};
StudentVars lift(Tape& tape, const StudentNet& s);
Var student_forward_rows(const StudentVars& s, Var rows);
std::vector<Tensor*> param_ptrs(StudentNet& s);
std::vector<Var> param_vars(const StudentVars& s);

// ---- optimizers ---------------------------------------------------------------

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;  // adam
    double momentum = 0.9;                          // sgd
};

class Optimizer {
public:
    Optimizer(OptimizerConfig cfg, std::vector<Tensor*> params);
    // grads must align with the registered parameters; lr == 0 leaves the
    // parameters bitwise untouched.
    void step(const std::vector<Tensor>& grads);
    double lr() const { return cfg_.lr; }
    void set_lr(double lr) { cfg_.lr = lr; }

private:
    OptimizerConfig cfg_;
    std::vector<Tensor*> params_;
    std::vector<Tensor> m_, v_;  // adam moments / sgd velocity (m_ only)
    long t_ = 0;
};

// ---- configuration and history --------------------------------------------------

enum class Variant { tintem_frozen, tintem_weighted, proteus };
enum class StudentMetric { cosine, mse };

const char* variant_name(Variant v);
const char* student_metric_name(StudentMetric m);

struct DistillConfig {
    Variant variant = Variant::tintem_frozen;
    double gamma = 10.0;  // weighted variant only
    StudentMetric student_metric = StudentMetric::cosine;
    TemperatureSet temperatures = TemperatureSet::paper_default();
    OptimizerKind optimizer = OptimizerKind::adam;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    double sgd_momentum = 0.9;
    double head_lr = 1e-2;
    double student_lr = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 30;
    std::size_t d_student = 16;
    std::size_t student_hidden = 48;
    bool feature_term = true;
    std::uint64_t head_seed = 1, student_seed = 2, shuffle_seed = 3;

    void validate() const;

    OptimizerConfig head_optimizer() const;
    OptimizerConfig student_optimizer() const;
};

struct HeadGramScores {
    std::string head;
    double wtw_score = 0.0;
    double wwt_score = 0.0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double dim_red_loss = 0.0;
    double student_loss = 0.0;
    double total_loss = 0.0;
    std::vector<HeadGramScores> gram;
    double wall_seconds = 0.0;  // in-memory only; not serialized (reruns must byte-match)
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

// ---- training steps --------------------------------------------------------------

struct StepLosses {
    double dim_red = 0.0;
    double student = 0.0;
    double total = 0.0;
};

// One optimization step on one mini-batch. `inputs` are the raw input token
// sets, `teacher_out` their images under the frozen teacher, paired by index.

// Frozen-gradient TinTeM: the head sees only the dimensionality-reduction
// gradient; the student regresses on detached head outputs.
StepLosses tintem_step(const std::vector<const TokenSet*>& inputs,
                       const std::vector<const TokenSet*>& teacher_out, HeadParams& head,
                       StudentNet& student, Optimizer& head_opt, Optimizer& student_opt,
                       const DistillConfig& cfg);

// Weighted TinTeM: single objective gamma * dim_red + student; head gradients
// flow through both terms.
StepLosses tintem_weighted_step(const std::vector<const TokenSet*>& inputs,
                                const std::vector<const TokenSet*>& teacher_out, HeadParams& head,
                                StudentNet& student, double gamma, Optimizer& head_opt,
                                Optimizer& student_opt, const DistillConfig& cfg);

// Proteus baseline (class-token and feature terms): raising heads g map the
// student into teacher space for an L2 loss; gradients flow jointly.
StepLosses proteus_step(const std::vector<const TokenSet*>& inputs,
                        const std::vector<const TokenSet*>& teacher_out, HeadParams& g_feature,
                        HeadParams& g_class, StudentNet& student, Optimizer& heads_opt,
                        Optimizer& student_opt, const DistillConfig& cfg);

// ---- training loop -----------------------------------------------------------------

struct TrainedModels {
    StudentNet student;
    HeadParams teacher_head;        // tintem variants
    HeadParams g_feature, g_class;  // proteus
    Variant variant = Variant::tintem_frozen;
};

struct TrainResult {
    TrainedModels models;
    TrainHistory history;
};

TrainResult train(const Dataset& data, const SyntheticTeacher& teacher, const DistillConfig& cfg);

}  // namespace orthodistill

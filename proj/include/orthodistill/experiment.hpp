#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "orthodistill/config.hpp"
#include "orthodistill/distill.hpp"
#include "orthodistill/metrics.hpp"
#include "orthodistill/synthdata.hpp"

namespace orthodistill {

// Train / evaluation splits with the OOD class already separated out.
struct DataSplits {
    Dataset train;     // in-distribution training samples
    Dataset eval_id;   // held-out in-distribution samples
    Dataset eval_ood;  // held-out-class samples (empty when OOD is disabled)
};

DataSplits prepare_data(const ExperimentConfig& cfg);

// Everything `orthodistill run` serializes per variant; field names frozen,
// documented in the README.
struct EvalReport {
    std::string name;
    std::string variant;
    std::uint64_t seed = 0;

    struct GramEntry {
        std::string head;
        std::string side;  // "wtw" | "wwt"
        double alpha = 0.0;
        double score = 0.0;
        std::size_t rows = 0, cols = 0;
        std::vector<double> diag, offdiag;  // entries of A/alpha
    };
    std::vector<GramEntry> orthogonality;

    std::size_t knn_k = 0;
    double knn_accuracy = 0.0;
    std::optional<double> knn_head_accuracy;          // proteus: g_class(student class token)
    std::optional<double> knn_teacher_head_accuracy;  // tintem: head(teacher class token)

    struct Ood {
        std::size_t k = 1;
        double fraction = 1.0;
        double auroc = 0.0;
        double fpr95 = 0.0;
        int holdout_class = -1;
    };
    std::optional<Ood> ood;

    struct JlPerM {
        std::size_t m = 0;
        double mean_sq_norm = 0.0;
        std::vector<double> success;  // aligned with eps_grid
        double angle_median = 0.0, angle_q25 = 0.0, angle_q75 = 0.0;
    };
    struct Jl {
        std::size_t d = 0, trials = 0;
        std::vector<double> eps_grid;
        std::vector<JlPerM> per_m;
    };
    std::optional<Jl> jl;
};

nlohmann::ordered_json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::ordered_json& j);
EvalReport load_report(const std::string& path);

std::string history_to_jsonl(const TrainHistory& h);
TrainHistory history_from_jsonl(const std::string& text);
TrainHistory load_history(const std::string& path);

// Class-token embeddings of a dataset under the student / raised head / teacher head.
Tensor student_class_embeddings(const StudentNet& s, const Dataset& data);

EvalReport evaluate_run(const ExperimentConfig& cfg, Variant variant, const TrainedModels& models,
                        const SyntheticTeacher& teacher, const DataSplits& splits);

struct RunOutputs {
    std::string variant;
    std::string report_path;
    std::string history_path;
};

// Trains and evaluates every configured variant; writes reports, histories
// and checkpoints under out_dir/<variant>/.
std::vector<RunOutputs> run_experiment_config(const ExperimentConfig& cfg,
                                              const std::string& out_dir);

// CLI entry: 0 success, 1 runtime failure, 2 config validation failure.
int run_experiment(const std::string& config_path, std::optional<std::uint64_t> seed_override,
                   std::optional<std::string> out_override);

}  // namespace orthodistill

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "orthodistill/distill.hpp"

namespace orthodistill {

// Thrown on any configuration problem; carries the offending line when the
// problem is anchored to one (0 = whole file).
struct ConfigError : std::runtime_error {
    int line = 0;
    ConfigError(int line_, const std::string& msg)
        : std::runtime_error(line_ > 0 ? "line " + std::to_string(line_) + ": " + msg : msg),
          line(line_) {}
};

enum class DataSource { synthetic, file };

// Everything an end-to-end run needs; parsed from a single key-value tree
// file (the grammar is documented in the README).
struct ExperimentConfig {
    // [experiment]
    std::string name = "experiment";
    std::uint64_t seed = 42;
    std::string out_dir = "runs/experiment";

    // [data]
    DataSource source = DataSource::synthetic;
    std::size_t n_samples = 2000;
    std::size_t n_eval_samples = 1000;
    std::size_t n_classes = 8;
    std::size_t d_in = 32;
    std::size_t n_patch = 4;
    double class_separation = 6.0;
    std::string train_path, eval_path;  // file source only

    // [teacher]
    std::size_t teacher_d_out = 64;
    std::size_t teacher_hidden = 64;
    double class_offset_scale = 1.0;

    // [distill] — variants share one DistillConfig template
    std::vector<Variant> variants{Variant::tintem_frozen};
    DistillConfig distill;

    // [eval]
    std::size_t knn_k = 20;
    int ood_holdout_class = -1;  // -1 disables the OOD block
    std::size_t ood_k = 1;
    double ood_fraction = 1.0;
    bool ood_normalize = true;
    bool jl = false;
    std::size_t jl_d = 64;
    std::vector<std::size_t> jl_m{16, 64, 256};
    std::size_t jl_trials = 2000;

    // derived stream seeds
    std::uint64_t data_seed() const;
    std::uint64_t teacher_seed() const;
    std::uint64_t head_seed() const;
    std::uint64_t student_seed() const;
    std::uint64_t shuffle_seed() const;
    std::uint64_t ood_seed() const;

    // DistillConfig for one variant with all seeds resolved
    DistillConfig distill_for(Variant v) const;

    // semantic checks beyond parsing (source consistency, file existence,
    // holdout class range); throws ConfigError
    void validate() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Canonical serialization; parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& c);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace orthodistill

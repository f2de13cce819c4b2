#include "orthodistill/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "orthodistill/embed_io.hpp"
#include "orthodistill/util.hpp"

namespace orthodistill {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---- data preparation --------------------------------------------------------

namespace {

Dataset subset(const Dataset& data, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.n_classes = data.n_classes;
    out.seed = data.seed;
    out.samples.reserve(idx.size());
    for (std::size_t i : idx) out.samples.push_back(data.samples[i]);
    return out;
}

}  // namespace

DataSplits prepare_data(const ExperimentConfig& cfg) {
    Dataset train_pool, eval_pool;
    if (cfg.source == DataSource::synthetic) {
        DatasetSpec spec{cfg.n_samples + cfg.n_eval_samples, cfg.n_classes, cfg.d_in, cfg.n_patch,
                         cfg.class_separation};
        Dataset all = gen_token_dataset(spec, cfg.data_seed());
        std::vector<std::size_t> train_idx, eval_idx;
        for (std::size_t i = 0; i < all.samples.size(); ++i)
            (i < cfg.n_samples ? train_idx : eval_idx).push_back(i);
        train_pool = subset(all, train_idx);
        eval_pool = subset(all, eval_idx);
    } else {
        train_pool = load_dataset(cfg.train_path);
        eval_pool = load_dataset(cfg.eval_path);
        if (cfg.ood_holdout_class >= train_pool.n_classes)
            throw std::invalid_argument(cat("ood_holdout_class ", cfg.ood_holdout_class,
                                            " out of range for ", train_pool.n_classes,
                                            " classes in ", cfg.train_path));
    }

    DataSplits splits;
    splits.train.n_classes = train_pool.n_classes;
    splits.train.seed = train_pool.seed;
    splits.eval_id.n_classes = train_pool.n_classes;
    splits.eval_ood.n_classes = train_pool.n_classes;
    for (const Sample& s : train_pool.samples)
        if (s.label != cfg.ood_holdout_class) splits.train.samples.push_back(s);
    for (const Sample& s : eval_pool.samples)
        (s.label == cfg.ood_holdout_class ? splits.eval_ood : splits.eval_id).samples.push_back(s);
    return splits;
}

// ---- embeddings ---------------------------------------------------------------

namespace {

Tensor stack_class_tokens(const Dataset& data) {
    std::size_t n = data.samples.size(), d = data.d_in();
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) = data.samples[i].tokens.class_token[j];
    return out;
}

std::vector<int> labels_of(const Dataset& data) {
    std::vector<int> labels;
    labels.reserve(data.samples.size());
    for (const Sample& s : data.samples) labels.push_back(s.label);
    return labels;
}

Tensor teacher_class_embeddings(const SyntheticTeacher& t, const Dataset& data) {
    std::size_t n = data.samples.size(), d = t.d_out();
    Tensor out({n, d});
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        TokenSet mapped = teacher_forward(t, data.samples[static_cast<std::size_t>(i)].tokens);
        for (std::size_t j = 0; j < d; ++j)
            out.at(static_cast<std::size_t>(i), j) = mapped.class_token[j];
    }
    return out;
}

EvalReport::GramEntry gram_entry(const std::string& head, GramSide side, const Tensor& w) {
    GramReport rep = gram_orthogonality(w, side);
    GramDensity density = gram_density_data(w, side);
    EvalReport::GramEntry entry;
    entry.head = head;
    entry.side = gram_side_name(side);
    entry.alpha = rep.alpha;
    entry.score = rep.score;
    entry.rows = rep.rows;
    entry.cols = rep.cols;
    entry.diag = std::move(density.diagonal);
    entry.offdiag = std::move(density.off_diagonal);
    return entry;
}

}  // namespace

Tensor student_class_embeddings(const StudentNet& s, const Dataset& data) {
    return student_forward_rows(s, stack_class_tokens(data));
}

EvalReport evaluate_run(const ExperimentConfig& cfg, Variant variant, const TrainedModels& models,
                        const SyntheticTeacher& teacher, const DataSplits& splits) {
    EvalReport report;
    report.name = cfg.name;
    report.variant = variant_name(variant);
    report.seed = cfg.seed;

    if (variant == Variant::proteus) {
        report.orthogonality.push_back(gram_entry("g_feature", GramSide::wtw, models.g_feature.W));
        report.orthogonality.push_back(gram_entry("g_feature", GramSide::wwt, models.g_feature.W));
        report.orthogonality.push_back(gram_entry("g_class", GramSide::wtw, models.g_class.W));
        report.orthogonality.push_back(gram_entry("g_class", GramSide::wwt, models.g_class.W));
    } else {
        report.orthogonality.push_back(
            gram_entry("teacher_head", GramSide::wtw, models.teacher_head.W));
        report.orthogonality.push_back(
            gram_entry("teacher_head", GramSide::wwt, models.teacher_head.W));
    }

    // kNN on student-backbone class tokens
    Tensor ref = student_class_embeddings(models.student, splits.train);
    std::vector<int> ref_labels = labels_of(splits.train);
    std::size_t k = std::min(cfg.knn_k, splits.train.samples.size());
    report.knn_k = k;
    if (!splits.eval_id.samples.empty()) {
        Tensor queries = student_class_embeddings(models.student, splits.eval_id);
        std::vector<int> truth = labels_of(splits.eval_id);
        report.knn_accuracy = knn_accuracy(ref, ref_labels, queries, truth, k);

        if (variant == Variant::proteus) {
            Tensor head_ref = head_forward_rows(models.g_class, ref);
            Tensor head_queries = head_forward_rows(models.g_class, queries);
            report.knn_head_accuracy =
                knn_accuracy(head_ref, ref_labels, head_queries, truth, k);
        } else {
            Tensor t_ref = head_forward_rows(models.teacher_head,
                                             teacher_class_embeddings(teacher, splits.train));
            Tensor t_queries = head_forward_rows(models.teacher_head,
                                                 teacher_class_embeddings(teacher, splits.eval_id));
            report.knn_teacher_head_accuracy =
                knn_accuracy(t_ref, ref_labels, t_queries, truth, k);
        }
    }

    if (cfg.ood_holdout_class >= 0 && !splits.eval_ood.samples.empty() &&
        !splits.eval_id.samples.empty()) {
        Tensor id_eval = student_class_embeddings(models.student, splits.eval_id);
        Tensor ood_eval = student_class_embeddings(models.student, splits.eval_ood);
        OODResult res = ood_evaluate(ref, id_eval, ood_eval, cfg.ood_k, cfg.ood_fraction,
                                     cfg.ood_seed(), cfg.ood_normalize);
        report.ood = EvalReport::Ood{res.k, res.fraction, res.auroc, res.fpr95,
                                     cfg.ood_holdout_class};
    }

    if (cfg.jl) {
        EvalReport::Jl jl;
        jl.d = cfg.jl_d;
        jl.trials = cfg.jl_trials;
        jl.eps_grid = jl_eps_grid();
        std::uint64_t jl_seed = mix_seed(cfg.seed, 107);
        for (std::size_t m : cfg.jl_m) {
            JLNormReport norm = jl_norm_preservation_check(cfg.jl_d, m, cfg.jl_trials, jl_seed);
            JLAngleReport angle = jl_angle_check(cfg.jl_d, m, cfg.jl_trials, jl_seed);
            jl.per_m.push_back(EvalReport::JlPerM{m, norm.mean_sq_norm, norm.success_fraction,
                                                  angle.median, angle.q25, angle.q75});
        }
        report.jl = std::move(jl);
    }
    return report;
}

// ---- serialization -------------------------------------------------------------

ordered_json report_to_json(const EvalReport& r) {
    ordered_json j;
    j["meta"] = {{"name", r.name}, {"variant", r.variant}, {"seed", r.seed}};
    ordered_json grams = ordered_json::array();
    for (const EvalReport::GramEntry& g : r.orthogonality) {
        ordered_json e;
        e["head"] = g.head;
        e["side"] = g.side;
        e["alpha"] = g.alpha;
        e["score"] = g.score;
        e["rows"] = g.rows;
        e["cols"] = g.cols;
        e["diag"] = g.diag;
        e["offdiag"] = g.offdiag;
        grams.push_back(std::move(e));
    }
    j["orthogonality"] = std::move(grams);
    ordered_json knn;
    knn["k"] = r.knn_k;
    knn["accuracy"] = r.knn_accuracy;
    if (r.knn_head_accuracy) knn["head_accuracy"] = *r.knn_head_accuracy;
    if (r.knn_teacher_head_accuracy) knn["teacher_head_accuracy"] = *r.knn_teacher_head_accuracy;
    j["knn"] = std::move(knn);
    if (r.ood) {
        j["ood"] = {{"k", r.ood->k},
                    {"fraction", r.ood->fraction},
                    {"auroc", r.ood->auroc},
                    {"fpr95", r.ood->fpr95},
                    {"holdout_class", r.ood->holdout_class}};
    } else {
        j["ood"] = nullptr;
    }
    if (r.jl) {
        ordered_json jl;
        jl["d"] = r.jl->d;
        jl["trials"] = r.jl->trials;
        jl["eps_grid"] = r.jl->eps_grid;
        ordered_json per_m = ordered_json::array();
        for (const EvalReport::JlPerM& p : r.jl->per_m) {
            per_m.push_back(ordered_json{{"m", p.m},
                                         {"mean_sq_norm", p.mean_sq_norm},
                                         {"success", p.success},
                                         {"angle_median", p.angle_median},
                                         {"angle_q25", p.angle_q25},
                                         {"angle_q75", p.angle_q75}});
        }
        jl["per_m"] = std::move(per_m);
        j["jl"] = std::move(jl);
    } else {
        j["jl"] = nullptr;
    }
    return j;
}

EvalReport report_from_json(const ordered_json& j) {
    EvalReport r;
    r.name = j.at("meta").at("name").get<std::string>();
    r.variant = j.at("meta").at("variant").get<std::string>();
    r.seed = j.at("meta").at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("orthogonality")) {
        EvalReport::GramEntry g;
        g.head = e.at("head").get<std::string>();
        g.side = e.at("side").get<std::string>();
        g.alpha = e.at("alpha").get<double>();
        g.score = e.at("score").get<double>();
        g.rows = e.at("rows").get<std::size_t>();
        g.cols = e.at("cols").get<std::size_t>();
        g.diag = e.at("diag").get<std::vector<double>>();
        g.offdiag = e.at("offdiag").get<std::vector<double>>();
        r.orthogonality.push_back(std::move(g));
    }
    r.knn_k = j.at("knn").at("k").get<std::size_t>();
    r.knn_accuracy = j.at("knn").at("accuracy").get<double>();
    if (j.at("knn").contains("head_accuracy"))
        r.knn_head_accuracy = j.at("knn").at("head_accuracy").get<double>();
    if (j.at("knn").contains("teacher_head_accuracy"))
        r.knn_teacher_head_accuracy = j.at("knn").at("teacher_head_accuracy").get<double>();
    if (!j.at("ood").is_null()) {
        const auto& o = j.at("ood");
        r.ood = EvalReport::Ood{o.at("k").get<std::size_t>(), o.at("fraction").get<double>(),
                                o.at("auroc").get<double>(), o.at("fpr95").get<double>(),
                                o.at("holdout_class").get<int>()};
    }
    if (!j.at("jl").is_null()) {
        const auto& o = j.at("jl");
        EvalReport::Jl jl;
        jl.d = o.at("d").get<std::size_t>();
        jl.trials = o.at("trials").get<std::size_t>();
        jl.eps_grid = o.at("eps_grid").get<std::vector<double>>();
        for (const auto& p : o.at("per_m")) {
            jl.per_m.push_back(EvalReport::JlPerM{
                p.at("m").get<std::size_t>(), p.at("mean_sq_norm").get<double>(),
                p.at("success").get<std::vector<double>>(), p.at("angle_median").get<double>(),
                p.at("angle_q25").get<double>(), p.at("angle_q75").get<double>()});
        }
        r.jl = std::move(jl);
    }
    return r;
}

EvalReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(cat("cannot open report ", path));
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(cat("ill-formed report ", path, ": ", e.what()));
    }
    try {
        return report_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(cat("ill-formed report ", path, ": ", e.what()));
    }
}

std::string history_to_jsonl(const TrainHistory& h) {
    std::string out;
    for (const EpochRecord& rec : h.epochs) {
        ordered_json j;
        j["epoch"] = rec.epoch;
        j["dim_red_loss"] = rec.dim_red_loss;
        j["student_loss"] = rec.student_loss;
        j["total_loss"] = rec.total_loss;
        ordered_json gram = ordered_json::array();
        for (const HeadGramScores& g : rec.gram)
            gram.push_back(ordered_json{
                {"head", g.head}, {"wtw_score", g.wtw_score}, {"wwt_score", g.wwt_score}});
        j["gram"] = std::move(gram);
        out += j.dump();
        out += '\n';
    }
    return out;
}

TrainHistory history_from_jsonl(const std::string& text) {
    TrainHistory h;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ordered_json j = ordered_json::parse(line);
        EpochRecord rec;
        rec.epoch = j.at("epoch").get<std::size_t>();
        rec.dim_red_loss = j.at("dim_red_loss").get<double>();
        rec.student_loss = j.at("student_loss").get<double>();
        rec.total_loss = j.at("total_loss").get<double>();
        for (const auto& g : j.at("gram"))
            rec.gram.push_back(HeadGramScores{g.at("head").get<std::string>(),
                                              g.at("wtw_score").get<double>(),
                                              g.at("wwt_score").get<double>()});
        h.epochs.push_back(std::move(rec));
    }
    return h;
}

TrainHistory load_history(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(cat("cannot open history ", path));
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return history_from_jsonl(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(cat("ill-formed history ", path, ": ", e.what()));
    }
}

// ---- run ------------------------------------------------------------------------

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(cat("cannot open ", path, " for writing"));
    out << content;
    if (!out) throw std::runtime_error(cat("write failed for ", path));
}

}  // namespace

std::vector<RunOutputs> run_experiment_config(const ExperimentConfig& cfg,
                                              const std::string& out_dir) {
    DataSplits splits = prepare_data(cfg);
    if (splits.train.samples.empty())
        throw std::runtime_error("no training samples left after the OOD holdout split");

    SyntheticTeacher teacher =
        make_teacher(splits.train.d_in(), cfg.teacher_hidden, cfg.teacher_d_out,
                     cfg.class_offset_scale, cfg.teacher_seed());

    fs::create_directories(out_dir);
    write_file((fs::path(out_dir) / "config.resolved.toml").string(), serialize_config(cfg));

    std::vector<RunOutputs> outputs;
    for (Variant variant : cfg.variants) {
        log_info(cat("training variant ", variant_name(variant)));
        DistillConfig dcfg = cfg.distill_for(variant);
        TrainResult result = train(splits.train, teacher, dcfg);
        EvalReport report = evaluate_run(cfg, variant, result.models, teacher, splits);

        fs::path dir = fs::path(out_dir) / variant_name(variant);
        fs::create_directories(dir);
        RunOutputs out;
        out.variant = variant_name(variant);
        out.report_path = (dir / "eval_report.json").string();
        out.history_path = (dir / "train_history.jsonl").string();
        write_file(out.report_path, report_to_json(report).dump(2) + "\n");
        write_file(out.history_path, history_to_jsonl(result.history));
        save_student((dir / "student.bin").string(), result.models.student);
        save_teacher((dir / "teacher.bin").string(), teacher);
        if (variant == Variant::proteus) {
            save_head((dir / "g_feature.bin").string(), result.models.g_feature);
            save_head((dir / "g_class.bin").string(), result.models.g_class);
        } else {
            save_head((dir / "teacher_head.bin").string(), result.models.teacher_head);
        }
        outputs.push_back(std::move(out));
    }
    return outputs;
}

int run_experiment(const std::string& config_path, std::optional<std::uint64_t> seed_override,
                   std::optional<std::string> out_override) {
    ExperimentConfig cfg;
    try {
        cfg = parse_config_file(config_path);
        if (seed_override) cfg.seed = *seed_override;
        if (out_override) cfg.out_dir = *out_override;
        cfg.validate();
    } catch (const ConfigError& e) {
        std::cerr << config_path << ": " << e.what() << "\n";
        return 2;
    }
    try {
        std::vector<RunOutputs> outputs = run_experiment_config(cfg, cfg.out_dir);
        for (const RunOutputs& out : outputs)
            std::cout << out.variant << ": " << out.report_path << "\n";
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace orthodistill

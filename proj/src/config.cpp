#include "orthodistill/config.hpp"

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "orthodistill/util.hpp"

namespace orthodistill {

std::uint64_t ExperimentConfig::data_seed() const { return mix_seed(seed, 101); }
std::uint64_t ExperimentConfig::teacher_seed() const { return mix_seed(seed, 102); }
std::uint64_t ExperimentConfig::head_seed() const { return mix_seed(seed, 103); }
std::uint64_t ExperimentConfig::student_seed() const { return mix_seed(seed, 104); }
std::uint64_t ExperimentConfig::shuffle_seed() const { return mix_seed(seed, 105); }
std::uint64_t ExperimentConfig::ood_seed() const { return mix_seed(seed, 106); }

DistillConfig ExperimentConfig::distill_for(Variant v) const {
    DistillConfig cfg = distill;
    cfg.variant = v;
    cfg.head_seed = head_seed();
    cfg.student_seed = student_seed();
    cfg.shuffle_seed = shuffle_seed();
    return cfg;
}

// ---- raw key-value tree ----------------------------------------------------

namespace {

struct RawValue {
    enum class Kind { boolean, integer, real, text, array } kind = Kind::integer;
    bool b = false;
    long long i = 0;
    double d = 0.0;
    std::string s;
    std::vector<RawValue> items;
    int line = 0;
};

struct RawConfig {
    std::map<std::string, RawValue> values;  // "section.key" -> value
    std::map<std::string, int> consumed;     // guards unknown keys
};

bool is_number_start(char c) { return std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.'; }

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// strips a trailing comment that is not inside a quoted string
std::string strip_comment(const std::string& s) {
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
        if (s[i] == '#' && !in_string) return s.substr(0, i);
    }
    return s;
}

RawValue parse_scalar(const std::string& text, int line) {
    RawValue v;
    v.line = line;
    if (text == "true" || text == "false") {
        v.kind = RawValue::Kind::boolean;
        v.b = text == "true";
        return v;
    }
    if (!text.empty() && text.front() == '"') {
        if (text.size() < 2 || text.back() != '"')
            throw ConfigError(line, "unterminated string " + text);
        v.kind = RawValue::Kind::text;
        for (std::size_t i = 1; i + 1 < text.size(); ++i) {
            if (text[i] == '\\' && i + 2 < text.size()) {
                ++i;
                v.s.push_back(text[i]);
            } else {
                v.s.push_back(text[i]);
            }
        }
        return v;
    }
    if (!text.empty() && is_number_start(text.front())) {
        bool real = text.find_first_of(".eE") != std::string::npos &&
                    text.find("0x") == std::string::npos;
        std::size_t used = 0;
        try {
            if (real) {
                v.kind = RawValue::Kind::real;
                v.d = std::stod(text, &used);
            } else {
                v.kind = RawValue::Kind::integer;
                v.i = std::stoll(text, &used);
            }
        } catch (const std::exception&) {
            throw ConfigError(line, "cannot parse number '" + text + "'");
        }
        if (used != text.size())
            throw ConfigError(line, "trailing characters after number '" + text + "'");
        return v;
    }
    throw ConfigError(line, "cannot parse value '" + text + "'");
}

RawValue parse_value(const std::string& text, int line) {
    if (!text.empty() && text.front() == '[') {
        if (text.back() != ']') throw ConfigError(line, "unterminated array " + text);
        RawValue arr;
        arr.kind = RawValue::Kind::array;
        arr.line = line;
        std::string body = text.substr(1, text.size() - 2);
        std::string item;
        bool in_string = false;
        for (char c : body) {
            if (c == '"') in_string = !in_string;
            if (c == ',' && !in_string) {
                std::string t = trim(item);
                if (t.empty()) throw ConfigError(line, "empty array element");
                arr.items.push_back(parse_scalar(t, line));
                item.clear();
            } else {
                item.push_back(c);
            }
        }
        std::string t = trim(item);
        if (!t.empty()) arr.items.push_back(parse_scalar(t, line));
        return arr;
    }
    return parse_scalar(text, line);
}

RawConfig parse_raw(const std::string& text) {
    RawConfig raw;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(strip_comment(line));
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(line_no, "unterminated section header " + t);
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty()) throw ConfigError(line_no, "empty section name");
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(line_no, "expected 'key = value', got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError(line_no, "empty key");
        if (value.empty()) throw ConfigError(line_no, "missing value for key '" + key + "'");
        if (section.empty()) throw ConfigError(line_no, "key '" + key + "' outside any section");
        std::string full = section + "." + key;
        if (raw.values.count(full)) throw ConfigError(line_no, "duplicate key '" + full + "'");
        raw.values[full] = parse_value(value, line_no);
    }
    return raw;
}

// typed access that marks keys as consumed
struct Reader {
    RawConfig& raw;

    const RawValue* find(const std::string& key) {
        auto it = raw.values.find(key);
        if (it == raw.values.end()) return nullptr;
        raw.consumed[key] = it->second.line;
        return &it->second;
    }

    bool boolean(const std::string& key, bool fallback) {
        const RawValue* v = find(key);
        if (!v) return fallback;
        if (v->kind != RawValue::Kind::boolean)
            throw ConfigError(v->line, "'" + key + "' must be true or false");
        return v->b;
    }

    long long integer(const std::string& key, long long fallback, long long lo, long long hi) {
        const RawValue* v = find(key);
        if (!v) return fallback;
        if (v->kind != RawValue::Kind::integer)
            throw ConfigError(v->line, "'" + key + "' must be an integer");
        if (v->i < lo || v->i > hi)
            throw ConfigError(v->line, "'" + key + "' out of range [" + std::to_string(lo) + ", " +
                                           std::to_string(hi) + "]");
        return v->i;
    }

    double real(const std::string& key, double fallback) {
        const RawValue* v = find(key);
        if (!v) return fallback;
        if (v->kind == RawValue::Kind::integer) return static_cast<double>(v->i);
        if (v->kind != RawValue::Kind::real)
            throw ConfigError(v->line, "'" + key + "' must be a number");
        return v->d;
    }

    std::string text(const std::string& key, const std::string& fallback) {
        const RawValue* v = find(key);
        if (!v) return fallback;
        if (v->kind != RawValue::Kind::text)
            throw ConfigError(v->line, "'" + key + "' must be a quoted string");
        return v->s;
    }

    std::vector<double> real_array(const std::string& key, std::vector<double> fallback) {
        const RawValue* v = find(key);
        if (!v) return fallback;
        if (v->kind != RawValue::Kind::array)
            throw ConfigError(v->line, "'" + key + "' must be an array");
        std::vector<double> out;
        for (const RawValue& item : v->items) {
            if (item.kind == RawValue::Kind::integer)
                out.push_back(static_cast<double>(item.i));
            else if (item.kind == RawValue::Kind::real)
                out.push_back(item.d);
            else
                throw ConfigError(v->line, "'" + key + "' must hold numbers");
        }
        return out;
    }

    std::vector<std::size_t> size_array(const std::string& key, std::vector<std::size_t> fallback) {
        const RawValue* v = find(key);
        if (!v) return fallback;
        if (v->kind != RawValue::Kind::array)
            throw ConfigError(v->line, "'" + key + "' must be an array");
        std::vector<std::size_t> out;
        for (const RawValue& item : v->items) {
            if (item.kind != RawValue::Kind::integer || item.i < 1)
                throw ConfigError(v->line, "'" + key + "' must hold positive integers");
            out.push_back(static_cast<std::size_t>(item.i));
        }
        return out;
    }

    // string or array of strings
    std::vector<std::string> text_list(const std::string& key, std::vector<std::string> fallback) {
        const RawValue* v = find(key);
        if (!v) return fallback;
        if (v->kind == RawValue::Kind::text) return {v->s};
        if (v->kind != RawValue::Kind::array)
            throw ConfigError(v->line, "'" + key + "' must be a string or array of strings");
        std::vector<std::string> out;
        for (const RawValue& item : v->items) {
            if (item.kind != RawValue::Kind::text)
                throw ConfigError(v->line, "'" + key + "' must hold strings");
            out.push_back(item.s);
        }
        return out;
    }

    void finish() const {
        for (const auto& [key, value] : raw.values)
            if (!raw.consumed.count(key))
                throw ConfigError(value.line, "unknown key '" + key + "'");
    }
};

Variant parse_variant(const std::string& name, int line) {
    if (name == "tintem_frozen") return Variant::tintem_frozen;
    if (name == "tintem_weighted") return Variant::tintem_weighted;
    if (name == "proteus") return Variant::proteus;
    throw ConfigError(line, "unknown variant '" + name +
                                "' (expected tintem_frozen, tintem_weighted or proteus)");
}

int line_of(const RawConfig& raw, const std::string& key) {
    auto it = raw.values.find(key);
    return it == raw.values.end() ? 0 : it->second.line;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    RawConfig raw = parse_raw(text);
    Reader r{raw};
    ExperimentConfig c;

    c.name = r.text("experiment.name", c.name);
    c.seed = static_cast<std::uint64_t>(
        r.integer("experiment.seed", static_cast<long long>(c.seed), 0, (1LL << 62)));
    c.out_dir = r.text("experiment.out_dir", c.out_dir);

    std::string source = r.text("data.source", "synthetic");
    if (source == "synthetic")
        c.source = DataSource::synthetic;
    else if (source == "file")
        c.source = DataSource::file;
    else
        throw ConfigError(line_of(raw, "data.source"),
                          "data.source must be \"synthetic\" or \"file\"");
    c.n_samples = static_cast<std::size_t>(r.integer("data.n_samples", 2000, 2, 1'000'000));
    c.n_eval_samples =
        static_cast<std::size_t>(r.integer("data.n_eval_samples", 1000, 0, 1'000'000));
    c.n_classes = static_cast<std::size_t>(r.integer("data.n_classes", 8, 2, 4096));
    c.d_in = static_cast<std::size_t>(r.integer("data.d_in", 32, 2, 65536));
    c.n_patch = static_cast<std::size_t>(r.integer("data.n_patch", 4, 0, 4096));
    c.class_separation = r.real("data.class_separation", 6.0);
    c.train_path = r.text("data.train_path", "");
    c.eval_path = r.text("data.eval_path", "");

    if (c.source == DataSource::file) {
        if (c.train_path.empty())
            throw ConfigError(line_of(raw, "data.source"),
                              "data.source = \"file\" requires data.train_path");
        for (const char* key : {"data.n_samples", "data.n_eval_samples", "data.n_classes",
                                "data.d_in", "data.n_patch", "data.class_separation"})
            if (raw.values.count(key))
                throw ConfigError(line_of(raw, key),
                                  std::string("'") + key + "' conflicts with the file data source");
    } else if (!c.train_path.empty() || !c.eval_path.empty()) {
        throw ConfigError(line_of(raw, !c.train_path.empty() ? "data.train_path" : "data.eval_path"),
                          "embedding paths conflict with the synthetic data source");
    }

    c.teacher_d_out = static_cast<std::size_t>(r.integer("teacher.d_out", 64, 1, 65536));
    c.teacher_hidden = static_cast<std::size_t>(r.integer("teacher.hidden", 64, 1, 65536));
    c.class_offset_scale = r.real("teacher.class_offset_scale", 1.0);

    std::vector<std::string> variant_names = r.text_list("distill.variant", {"tintem_frozen"});
    int variant_line = line_of(raw, "distill.variant");
    if (variant_names.empty()) throw ConfigError(variant_line, "distill.variant must be non-empty");
    c.variants.clear();
    for (const std::string& name : variant_names) {
        Variant v = parse_variant(name, variant_line);
        for (Variant seen : c.variants)
            if (seen == v) throw ConfigError(variant_line, "duplicate variant '" + name + "'");
        c.variants.push_back(v);
    }

    c.distill.gamma = r.real("distill.gamma", 10.0);
    std::string metric = r.text("distill.student_metric", "cosine");
    if (metric == "cosine")
        c.distill.student_metric = StudentMetric::cosine;
    else if (metric == "mse")
        c.distill.student_metric = StudentMetric::mse;
    else
        throw ConfigError(line_of(raw, "distill.student_metric"),
                          "distill.student_metric must be \"cosine\" or \"mse\"");
    std::vector<double> taus =
        r.real_array("distill.temperatures", TemperatureSet::paper_default().values());
    try {
        c.distill.temperatures = TemperatureSet(taus);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(line_of(raw, "distill.temperatures"), e.what());
    }
    std::string opt = r.text("distill.optimizer", "adam");
    if (opt == "adam")
        c.distill.optimizer = OptimizerKind::adam;
    else if (opt == "sgd")
        c.distill.optimizer = OptimizerKind::sgd;
    else
        throw ConfigError(line_of(raw, "distill.optimizer"),
                          "distill.optimizer must be \"adam\" or \"sgd\"");
    c.distill.adam_beta1 = r.real("distill.adam_beta1", 0.9);
    c.distill.adam_beta2 = r.real("distill.adam_beta2", 0.999);
    c.distill.adam_eps = r.real("distill.adam_eps", 1e-8);
    c.distill.sgd_momentum = r.real("distill.sgd_momentum", 0.9);
    c.distill.head_lr = r.real("distill.head_lr", 1e-2);
    c.distill.student_lr = r.real("distill.student_lr", 1e-3);
    c.distill.batch_size = static_cast<std::size_t>(r.integer("distill.batch_size", 64, 2, 65536));
    c.distill.epochs = static_cast<std::size_t>(r.integer("distill.epochs", 30, 0, 100000));
    c.distill.d_student = static_cast<std::size_t>(r.integer("distill.d_student", 16, 1, 65536));
    c.distill.student_hidden =
        static_cast<std::size_t>(r.integer("distill.student_hidden", 48, 1, 65536));
    c.distill.feature_term = r.boolean("distill.feature_term", true);

    c.knn_k = static_cast<std::size_t>(r.integer("eval.knn_k", 20, 1, 100000));
    c.ood_holdout_class = static_cast<int>(r.integer("eval.ood_holdout_class", -1, -1, 4095));
    c.ood_k = static_cast<std::size_t>(r.integer("eval.ood_k", 1, 1, 100000));
    c.ood_fraction = r.real("eval.ood_fraction", 1.0);
    c.ood_normalize = r.boolean("eval.ood_normalize", true);
    c.jl = r.boolean("eval.jl", false);
    c.jl_d = static_cast<std::size_t>(r.integer("eval.jl_d", 64, 1, 65536));
    c.jl_m = r.size_array("eval.jl_m", {16, 64, 256});
    c.jl_trials = static_cast<std::size_t>(r.integer("eval.jl_trials", 2000, 1, 10'000'000));

    r.finish();
    return c;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, "cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

void ExperimentConfig::validate() const {
    if (source == DataSource::file) {
        if (!std::filesystem::exists(train_path))
            throw ConfigError(0, "data.train_path does not exist: " + train_path);
        if (!eval_path.empty() && !std::filesystem::exists(eval_path))
            throw ConfigError(0, "data.eval_path does not exist: " + eval_path);
    } else {
        if (ood_holdout_class >= static_cast<int>(n_classes))
            throw ConfigError(0, cat("eval.ood_holdout_class ", ood_holdout_class,
                                     " out of range for ", n_classes, " classes"));
        if (distill.feature_term && n_patch == 0)
            throw ConfigError(0, "distill.feature_term requires data.n_patch >= 1");
    }
    if (!(ood_fraction > 0.0) || ood_fraction > 1.0)
        throw ConfigError(0, "eval.ood_fraction must be in (0, 1]");
    if (variants.empty()) throw ConfigError(0, "distill.variant must name at least one variant");
    for (Variant v : variants) {
        try {
            distill_for(v).validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(0, e.what());
        }
    }
}

std::string serialize_config(const ExperimentConfig& c) {
    std::ostringstream out;
    out << "[experiment]\n";
    out << "name = \"" << c.name << "\"\n";
    out << "seed = " << c.seed << "\n";
    out << "out_dir = \"" << c.out_dir << "\"\n\n";

    out << "[data]\n";
    if (c.source == DataSource::file) {
        out << "source = \"file\"\n";
        out << "train_path = \"" << c.train_path << "\"\n";
        if (!c.eval_path.empty()) out << "eval_path = \"" << c.eval_path << "\"\n";
    } else {
        out << "source = \"synthetic\"\n";
        out << "n_samples = " << c.n_samples << "\n";
        out << "n_eval_samples = " << c.n_eval_samples << "\n";
        out << "n_classes = " << c.n_classes << "\n";
        out << "d_in = " << c.d_in << "\n";
        out << "n_patch = " << c.n_patch << "\n";
        out << "class_separation = " << fmt_double(c.class_separation) << "\n";
    }
    out << "\n[teacher]\n";
    out << "d_out = " << c.teacher_d_out << "\n";
    out << "hidden = " << c.teacher_hidden << "\n";
    out << "class_offset_scale = " << fmt_double(c.class_offset_scale) << "\n";

    out << "\n[distill]\n";
    if (c.variants.size() == 1) {
        out << "variant = \"" << variant_name(c.variants[0]) << "\"\n";
    } else {
        out << "variant = [";
        for (std::size_t i = 0; i < c.variants.size(); ++i)
            out << (i ? ", " : "") << "\"" << variant_name(c.variants[i]) << "\"";
        out << "]\n";
    }
    out << "gamma = " << fmt_double(c.distill.gamma) << "\n";
    out << "student_metric = \"" << student_metric_name(c.distill.student_metric) << "\"\n";
    out << "temperatures = [";
    const auto& taus = c.distill.temperatures.values();
    for (std::size_t i = 0; i < taus.size(); ++i) out << (i ? ", " : "") << fmt_double(taus[i]);
    out << "]\n";
    out << "optimizer = \"" << (c.distill.optimizer == OptimizerKind::adam ? "adam" : "sgd")
        << "\"\n";
    out << "adam_beta1 = " << fmt_double(c.distill.adam_beta1) << "\n";
    out << "adam_beta2 = " << fmt_double(c.distill.adam_beta2) << "\n";
    out << "adam_eps = " << fmt_double(c.distill.adam_eps) << "\n";
    out << "sgd_momentum = " << fmt_double(c.distill.sgd_momentum) << "\n";
    out << "head_lr = " << fmt_double(c.distill.head_lr) << "\n";
    out << "student_lr = " << fmt_double(c.distill.student_lr) << "\n";
    out << "batch_size = " << c.distill.batch_size << "\n";
    out << "epochs = " << c.distill.epochs << "\n";
    out << "d_student = " << c.distill.d_student << "\n";
    out << "student_hidden = " << c.distill.student_hidden << "\n";
    out << "feature_term = " << (c.distill.feature_term ? "true" : "false") << "\n";

    out << "\n[eval]\n";
    out << "knn_k = " << c.knn_k << "\n";
    out << "ood_holdout_class = " << c.ood_holdout_class << "\n";
    out << "ood_k = " << c.ood_k << "\n";
    out << "ood_fraction = " << fmt_double(c.ood_fraction) << "\n";
    out << "ood_normalize = " << (c.ood_normalize ? "true" : "false") << "\n";
    out << "jl = " << (c.jl ? "true" : "false") << "\n";
    out << "jl_d = " << c.jl_d << "\n";
    out << "jl_m = [";
    for (std::size_t i = 0; i < c.jl_m.size(); ++i) out << (i ? ", " : "") << c.jl_m[i];
    out << "]\n";
    out << "jl_trials = " << c.jl_trials << "\n";
    return out.str();
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return serialize_config(a) == serialize_config(b);
}

}  // namespace orthodistill

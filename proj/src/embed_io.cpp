#include "orthodistill/embed_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "orthodistill/util.hpp"

namespace orthodistill {

namespace {

using ordered_json = nlohmann::ordered_json;

void append_f32le(std::string& out, double v) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    out.push_back(static_cast<char>(bits & 0xff));
    out.push_back(static_cast<char>((bits >> 8) & 0xff));
    out.push_back(static_cast<char>((bits >> 16) & 0xff));
    out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

double read_f32le(const std::string& payload, std::size_t index) {
    std::uint32_t bits = 0;
    for (int b = 3; b >= 0; --b)
        bits = (bits << 8) | static_cast<std::uint8_t>(payload[index * 4 + static_cast<std::size_t>(b)]);
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
}

void write_envelope(const std::string& path, const ordered_json& header,
                    const std::string& payload) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw EmbedIoError(cat("cannot open ", path, " for writing"));
    out << header.dump() << '\n';
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw EmbedIoError(cat("write failed for ", path));
}

std::pair<ordered_json, std::string> read_envelope(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EmbedIoError(cat("cannot open ", path));
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t nl = all.find('\n');
    if (nl == std::string::npos)
        throw MalformedHeaderError(cat(path, ": missing header line"));
    ordered_json header;
    try {
        header = ordered_json::parse(all.substr(0, nl));
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedHeaderError(cat(path, ": header is not valid JSON: ", e.what()));
    }
    if (!header.is_object() || !header.contains("magic") || header["magic"] != kEnvelopeMagic)
        throw MalformedHeaderError(cat(path, ": missing or wrong magic"));
    if (!header.contains("dtype") || header["dtype"] != "f32le")
        throw MalformedHeaderError(cat(path, ": unsupported dtype"));
    return {header, all.substr(nl + 1)};
}

std::size_t size_field(const ordered_json& header, const char* key, const std::string& path) {
    if (!header.contains(key) || !header[key].is_number_unsigned())
        throw MalformedHeaderError(cat(path, ": missing or invalid field '", key, "'"));
    return header[key].get<std::size_t>();
}

void require_payload_count(const std::string& path, const std::string& payload,
                           std::size_t expected_values) {
    if (payload.size() < expected_values * 4)
        throw TruncatedPayloadError(cat(path, ": payload holds ", payload.size() / 4,
                                        " values, header promises ", expected_values));
    if (payload.size() > expected_values * 4)
        throw TruncatedPayloadError(cat(path, ": payload holds ", payload.size() / 4,
                                        " values, header promises only ", expected_values));
}

void append_tensor(std::string& payload, const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) append_f32le(payload, t[i]);
}

Tensor read_tensor(const std::string& payload, std::size_t& cursor,
                   std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = read_f32le(payload, cursor++);
    return t;
}

}  // namespace

void save_embeddings(const std::string& path, const std::vector<std::pair<TokenSet, int>>& sets,
                     int n_classes) {
    std::size_t d = sets.empty() ? 0 : sets[0].first.dim();
    std::size_t n_patch = sets.empty() ? 0 : sets[0].first.n_patch();
    ordered_json labels = ordered_json::array();
    for (const auto& [tokens, label] : sets) {
        if (tokens.dim() != d || tokens.n_patch() != n_patch)
            throw DimensionMismatchError(
                cat(path, ": all token sets must share D and n_patch (got ", tokens.dim(), "/",
                    tokens.n_patch(), " vs ", d, "/", n_patch, ")"));
        labels.push_back(label);
    }

    ordered_json header;
    header["magic"] = kEnvelopeMagic;
    header["D"] = d;
    header["n_patch"] = n_patch;
    header["n_samples"] = sets.size();
    header["n_classes"] = n_classes;
    header["dtype"] = "f32le";
    header["labels"] = std::move(labels);

    std::string payload;
    payload.reserve(sets.size() * (1 + n_patch) * d * 4);
    for (const auto& [tokens, label] : sets) {
        (void)label;
        append_tensor(payload, tokens.class_token);
        append_tensor(payload, tokens.patch_tokens);
    }
    write_envelope(path, header, payload);
}

EmbeddingFile load_embeddings(const std::string& path) {
    auto [header, payload] = read_envelope(path);
    std::size_t d = size_field(header, "D", path);
    std::size_t n_patch = size_field(header, "n_patch", path);
    std::size_t n_samples = size_field(header, "n_samples", path);
    std::size_t n_classes = size_field(header, "n_classes", path);
    if (n_samples > 0 && d == 0)
        throw DimensionMismatchError(cat(path, ": D = 0 with n_samples > 0"));

    std::vector<int> labels(n_samples, 0);
    if (header.contains("labels")) {
        if (!header["labels"].is_array() || header["labels"].size() != n_samples)
            throw DimensionMismatchError(cat(path, ": labels array does not match n_samples"));
        for (std::size_t i = 0; i < n_samples; ++i) {
            if (!header["labels"][i].is_number_integer())
                throw DimensionMismatchError(cat(path, ": non-integer label at index ", i));
            labels[i] = header["labels"][i].get<int>();
            if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= std::max<std::size_t>(n_classes, 1))
                throw DimensionMismatchError(cat(path, ": label ", labels[i],
                                                 " outside [0, ", n_classes, ") at index ", i));
        }
    }

    require_payload_count(path, payload, n_samples * (1 + n_patch) * d);

    EmbeddingFile file;
    file.n_classes = static_cast<int>(n_classes);
    file.sets.reserve(n_samples);
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        Tensor cls = read_tensor(payload, cursor, {d});
        Tensor patches = read_tensor(payload, cursor, {n_patch, d});
        file.sets.emplace_back(TokenSet{std::move(cls), std::move(patches)}, labels[i]);
    }
    return file;
}

void save_dataset(const std::string& path, const Dataset& data) {
    std::vector<std::pair<TokenSet, int>> sets;
    sets.reserve(data.samples.size());
    for (const Sample& s : data.samples) sets.emplace_back(s.tokens, s.label);
    save_embeddings(path, sets, data.n_classes);
}

Dataset load_dataset(const std::string& path) {
    EmbeddingFile file = load_embeddings(path);
    Dataset data;
    data.n_classes = file.n_classes;
    data.samples.reserve(file.sets.size());
    for (auto& [tokens, label] : file.sets) data.samples.push_back(Sample{std::move(tokens), label});
    return data;
}

// ---- checkpoints ---------------------------------------------------------------

namespace {
std::string kind_field(const ordered_json& header, const std::string& path) {
    if (!header.contains("kind") || !header["kind"].is_string())
        throw MalformedHeaderError(cat(path, ": missing checkpoint kind"));
    return header["kind"].get<std::string>();
}
}  // namespace

void save_head(const std::string& path, const HeadParams& h) {
    ordered_json header;
    header["magic"] = kEnvelopeMagic;
    header["kind"] = "head";
    header["d_in"] = h.d_in();
    header["d_out"] = h.d_out();
    header["norm_mode"] = h.norm_mode == NormMode::layernorm ? "layernorm" : "none";
    header["dtype"] = "f32le";
    std::string payload;
    append_tensor(payload, h.gamma);
    append_tensor(payload, h.beta1);
    append_tensor(payload, h.W);
    append_tensor(payload, h.beta2);
    write_envelope(path, header, payload);
}

HeadParams load_head(const std::string& path) {
    auto [header, payload] = read_envelope(path);
    if (kind_field(header, path) != "head")
        throw MalformedHeaderError(cat(path, ": not a head checkpoint"));
    std::size_t d_in = size_field(header, "d_in", path);
    std::size_t d_out = size_field(header, "d_out", path);
    std::string mode = header.value("norm_mode", std::string("layernorm"));
    if (mode != "layernorm" && mode != "none")
        throw MalformedHeaderError(cat(path, ": unknown norm_mode '", mode, "'"));
    require_payload_count(path, payload, d_in + d_in + d_in * d_out + d_out);
    HeadParams h;
    h.norm_mode = mode == "layernorm" ? NormMode::layernorm : NormMode::none;
    std::size_t cursor = 0;
    h.gamma = read_tensor(payload, cursor, {d_in});
    h.beta1 = read_tensor(payload, cursor, {d_in});
    h.W = read_tensor(payload, cursor, {d_in, d_out});
    h.beta2 = read_tensor(payload, cursor, {d_out});
    return h;
}

namespace {

void save_mlp(const std::string& path, const char* kind, const Tensor& w1, const Tensor& b1,
              const Tensor& w2, const Tensor& b2, const Tensor* offset, std::uint64_t seed) {
    ordered_json header;
    header["magic"] = kEnvelopeMagic;
    header["kind"] = kind;
    header["d_in"] = w1.rows();
    header["hidden"] = w1.cols();
    header["d_out"] = w2.cols();
    header["seed"] = seed;
    header["dtype"] = "f32le";
    std::string payload;
    append_tensor(payload, w1);
    append_tensor(payload, b1);
    append_tensor(payload, w2);
    append_tensor(payload, b2);
    if (offset) append_tensor(payload, *offset);
    write_envelope(path, header, payload);
}

struct MlpParts {
    Tensor w1, b1, w2, b2, offset;
    std::uint64_t seed;
};

MlpParts load_mlp(const std::string& path, const char* kind, bool with_offset) {
    auto [header, payload] = read_envelope(path);
    if (kind_field(header, path) != kind)
        throw MalformedHeaderError(cat(path, ": not a ", kind, " checkpoint"));
    std::size_t d_in = size_field(header, "d_in", path);
    std::size_t hidden = size_field(header, "hidden", path);
    std::size_t d_out = size_field(header, "d_out", path);
    std::size_t expected = d_in * hidden + hidden + hidden * d_out + d_out +
                           (with_offset ? d_out : 0);
    require_payload_count(path, payload, expected);
    MlpParts parts;
    parts.seed = header.value("seed", std::uint64_t{0});
    std::size_t cursor = 0;
    parts.w1 = read_tensor(payload, cursor, {d_in, hidden});
    parts.b1 = read_tensor(payload, cursor, {hidden});
    parts.w2 = read_tensor(payload, cursor, {hidden, d_out});
    parts.b2 = read_tensor(payload, cursor, {d_out});
    if (with_offset) parts.offset = read_tensor(payload, cursor, {d_out});
    return parts;
}

}  // namespace

void save_student(const std::string& path, const StudentNet& s) {
    save_mlp(path, "student", s.w1, s.b1, s.w2, s.b2, nullptr, s.seed);
}

StudentNet load_student(const std::string& path) {
    MlpParts p = load_mlp(path, "student", false);
    StudentNet s;
    s.w1 = std::move(p.w1);
    s.b1 = std::move(p.b1);
    s.w2 = std::move(p.w2);
    s.b2 = std::move(p.b2);
    s.seed = p.seed;
    return s;
}

void save_teacher(const std::string& path, const SyntheticTeacher& t) {
    save_mlp(path, "teacher", t.w1, t.b1, t.w2, t.b2, &t.class_offset, t.seed);
}

SyntheticTeacher load_teacher(const std::string& path) {
    MlpParts p = load_mlp(path, "teacher", true);
    SyntheticTeacher t;
    t.w1 = std::move(p.w1);
    t.b1 = std::move(p.b1);
    t.w2 = std::move(p.w2);
    t.b2 = std::move(p.b2);
    t.class_offset = std::move(p.offset);
    t.seed = p.seed;
    return t;
}

}  // namespace orthodistill

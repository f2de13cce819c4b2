#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "orthodistill/distill.hpp"
#include "orthodistill/heads.hpp"
#include "orthodistill/synthdata.hpp"

namespace orthodistill {

// All on-disk artifacts share one envelope: a single JSON header line
// followed by a raw little-endian float32 payload. The embedding format is
// documented bit-exactly in the README so external model exports can be
// dropped in.

struct EmbedIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MalformedHeaderError : EmbedIoError {
    using EmbedIoError::EmbedIoError;
};
struct TruncatedPayloadError : EmbedIoError {
    using EmbedIoError::EmbedIoError;
};
struct DimensionMismatchError : EmbedIoError {
    using EmbedIoError::EmbedIoError;
};

inline constexpr const char* kEnvelopeMagic = "ORTHODISTILL1";

struct EmbeddingFile {
    std::vector<std::pair<TokenSet, int>> sets;
    int n_classes = 0;
};

// Values are quantized to float32 on save; a save/load round trip of an
// already-f32 file reproduces the payload bit-exactly.
void save_embeddings(const std::string& path, const std::vector<std::pair<TokenSet, int>>& sets,
                     int n_classes);
EmbeddingFile load_embeddings(const std::string& path);

void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

// Checkpoints reuse the envelope with a "kind" discriminator.
void save_head(const std::string& path, const HeadParams& h);
HeadParams load_head(const std::string& path);

void save_student(const std::string& path, const StudentNet& s);
StudentNet load_student(const std::string& path);

void save_teacher(const std::string& path, const SyntheticTeacher& t);
SyntheticTeacher load_teacher(const std::string& path);

}  // namespace orthodistill

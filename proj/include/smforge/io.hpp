#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "smforge/core.hpp"
#include "smforge/model.hpp"
#include "smforge/train.hpp"

namespace smforge::io {

namespace fs = std::filesystem;

constexpr std::uint32_t kFormatVersion = 1;

[[nodiscard]] std::uint32_t crc32(std::string_view bytes);

[[nodiscard]] std::string read_file(const fs::path& path);
/// Writes to a temporary sibling, then renames over `path`.
void atomic_write(const fs::path& path, std::string_view bytes);

/// Container: 8-byte magic, u32 LE version, u32 LE header length, JSON header,
/// then a little-endian float32 payload.
[[nodiscard]] std::string encode_sm(const SystemMatrix& sm);
[[nodiscard]] SystemMatrix decode_sm(std::string_view bytes);
void save_sm(const fs::path& path, const SystemMatrix& sm);
[[nodiscard]] SystemMatrix load_sm(const fs::path& path);
/// CRC of the payload recorded in an SM file header, identifying its contents.
[[nodiscard]] std::uint32_t sm_payload_crc(const fs::path& path);

struct Checkpoint {
    model::ModelConfig model;
    nlohmann::json train = nlohmann::json::object();
    int iteration = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint32_t> training_inputs;  // payload CRCs of every train/val matrix
    model::ModelParams params;
};

[[nodiscard]] std::string encode_checkpoint(const Checkpoint& ck);
[[nodiscard]] Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const fs::path& path, const Checkpoint& ck);
[[nodiscard]] Checkpoint load_checkpoint(const fs::path& path);

/// 8-bit binary PGM, max-normalized (an all-zero image maps to black).
[[nodiscard]] std::string encode_pgm(const RMatrix& img);
[[nodiscard]] std::string encode_csv(const RMatrix& img);

[[nodiscard]] std::string loss_curve_csv(const train::TrainReport& report);

/// Merges `value` into `root` at the dotted `key`, parsing the value as JSON
/// when possible and as a string otherwise. Unknown keys are rejected.
void apply_override(nlohmann::json& root, std::string_view assignment);

}  // namespace smforge::io

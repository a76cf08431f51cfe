#pragma once

// Checkpoint directories: manifest.json plus one little-endian float32 file
// per tensor (row-major). Offsets in the manifest index the concatenation of
// all tensor files in manifest order.

#include "tfcodit/autograd.hpp"
#include "tfcodit/optim.hpp"

#include "json.hpp"

#include <filesystem>

namespace tfcodit::checkpoint {

void save(const std::filesystem::path& dir, const ag::ParamStore& params,
          const optim::AdamW* optimizer, const nlohmann::json& config,
          const nlohmann::json& extra = nlohmann::json::object());

/// Fills `params` (and optimizer moments/step when given) from `dir`.
/// Names and shapes must match exactly; returns the manifest.
nlohmann::json load(const std::filesystem::path& dir, ag::ParamStore& params,
                    optim::AdamW* optimizer = nullptr);

nlohmann::json read_manifest(const std::filesystem::path& dir);

void write_f32(const std::filesystem::path& file, const Mat& m);
Mat read_f32(const std::filesystem::path& file, Eigen::Index rows, Eigen::Index cols);

void write_json(const std::filesystem::path& file, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& file);

}  // namespace tfcodit::checkpoint

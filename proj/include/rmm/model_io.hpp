#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "rmm/core.hpp"

namespace rmm {

inline constexpr const char* kModelFormat = "rmmdp/1";

nlohmann::json model_to_json(const Rmmdp& model);

/// Parses a "rmmdp/1" document. Rows within kSimplexTolerance of one are
/// renormalized; anything else that violates an invariant throws
/// std::invalid_argument listing every violation.
Rmmdp model_from_json(const nlohmann::json& doc);

Rmmdp load_model(const std::filesystem::path& path);
void save_model(const Rmmdp& model, const std::filesystem::path& path);

/// Sorted keys, two-space indent, trailing newline.
std::string dump_json(const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);

/// Shortest text that parses back to the same double.
std::string format_real(double value);

/// Writes `text` verbatim, creating parent directories.
void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace rmm

#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace mstage::jsonl {

using Json = nlohmann::json;
using Visitor = std::function<void(std::size_t line_no, const Json& record)>;

/// Calls `visit` for every non-blank line. Parse failures throw FormatError
/// tagged with `stage` and the 1-based line number.
void read(std::istream& in, const std::string& stage, const Visitor& visit);
void read_file(const std::filesystem::path& path, const std::string& stage,
               const Visitor& visit);

/// One compact JSON document per line, terminated by '\n'.
std::string dump_line(const Json& record);

void write_file(const std::filesystem::path& path, const std::vector<Json>& records);

/// Whole-file helpers used for artifacts and manifests.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace mstage::jsonl

#include "mstage/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "mstage/error.hpp"

namespace mstage::jsonl {

void read(std::istream& in, const std::string& stage, const Visitor& visit) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json record;
    try {
      record = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw FormatError(stage, line_no, std::string("invalid JSON: ") + e.what());
    }
    visit(line_no, record);
  }
}

void read_file(const std::filesystem::path& path, const std::string& stage,
               const Visitor& visit) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(stage, "cannot open " + path.string());
  read(in, stage, visit);
}

std::string dump_line(const Json& record) {
  // Strict UTF-8 handling: invalid sequences are an upstream bug, not data.
  return record.dump(-1, ' ', false, Json::error_handler_t::strict) + "\n";
}

void write_file(const std::filesystem::path& path, const std::vector<Json>& records) {
  std::string text;
  for (const auto& r : records) text += dump_line(r);
  write_text(path, text);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", "cannot write " + path.string());
  out << text;
  if (!out) throw Error("io", "write failed for " + path.string());
}

}  // namespace mstage::jsonl

#include "mstage/score_bridge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "mstage/error.hpp"
#include "mstage/jsonl.hpp"

namespace mstage {

namespace {

constexpr const char* kStage = "score_bridge";
using Json = nlohmann::json;

std::vector<double> read_numbers(const Json& value, std::size_t line, const char* field) {
  if (!value.is_array()) {
    throw FormatError(kStage, line, std::string("field '") + field + "' is not an array");
  }
  std::vector<double> out;
  out.reserve(value.size());
  for (const auto& v : value) {
    if (!v.is_number()) {
      throw FormatError(kStage, line, std::string("non-numeric entry in '") + field + "'");
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
      throw FormatError(kStage, line, std::string("non-finite entry in '") + field + "'");
    }
    out.push_back(x);
  }
  return out;
}

}  // namespace

ConfidenceVector ConfidenceVector::make(const std::array<double, 4>& scores) {
  double sum = 0.0;
  for (double s : scores) {
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
      throw ValidationError(kStage, "confidence score outside [0, 1]");
    }
    sum += s;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "confidence vector not normalized: sum = " << sum;
    throw ValidationError(kStage, msg.str());
  }
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) out[i] = std::min(1.0, scores[i] / sum);
  return ConfidenceVector(out);
}

ConfidenceVector ConfidenceVector::uniform() {
  return ConfidenceVector({0.25, 0.25, 0.25, 0.25});
}

double confidence_margin(const ConfidenceVector& p) {
  auto s = p.scores();
  std::sort(s.begin(), s.end(), std::greater<>());
  return s[0] - s[1];
}

ScoreBundle::ScoreBundle(ScoreProvenance provenance, std::map<std::string, ScoreEntry> entries)
    : provenance_(std::move(provenance)), entries_(std::move(entries)) {
  for (const auto& [id, entry] : entries_) {
    if (entry.embedding.size() != provenance_.dimension) {
      throw ValidationError(kStage, "embedding for '" + id + "' has dimension " +
                                        std::to_string(entry.embedding.size()) + ", expected " +
                                        std::to_string(provenance_.dimension));
    }
  }
}

const ScoreEntry* ScoreBundle::find(const std::string& id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

const ScoreEntry& ScoreBundle::at(const std::string& id) const {
  const auto* e = find(id);
  if (!e) throw ValidationError(kStage, "no scores for item '" + id + "'");
  return *e;
}

ScoreBundle parse_scores(std::istream& in, const Corpus& corpus) {
  std::optional<ScoreProvenance> header;
  std::map<std::string, ScoreEntry> entries;
  jsonl::read(in, kStage, [&](std::size_t line, const Json& rec) {
    if (!rec.is_object()) throw FormatError(kStage, line, "record is not an object");
    if (!header) {
      auto dim = rec.find("dimension");
      if (dim == rec.end() || !dim->is_number_unsigned()) {
        throw FormatError(kStage, line, "first record must be a header with 'dimension'");
      }
      header = ScoreProvenance{dim->get<std::size_t>(), rec.value("scorer_id", std::string()),
                               rec.value("checkpoint", std::string())};
      return;
    }
    auto id_it = rec.find("id");
    if (id_it == rec.end() || !id_it->is_string()) {
      throw FormatError(kStage, line, "missing 'id'");
    }
    const auto id = id_it->get<std::string>();
    if (!corpus.contains(id)) throw FormatError(kStage, line, "unknown id '" + id + "'");
    if (entries.count(id)) throw FormatError(kStage, line, "duplicate id '" + id + "'");

    auto conf_it = rec.find("confidence");
    if (conf_it == rec.end()) throw FormatError(kStage, line, "missing 'confidence'");
    const auto conf = read_numbers(*conf_it, line, "confidence");
    if (conf.size() != 4) throw FormatError(kStage, line, "confidence must have 4 entries");
    ScoreEntry entry;
    try {
      entry.confidence = ConfidenceVector::make({conf[0], conf[1], conf[2], conf[3]});
    } catch (const ValidationError& e) {
      throw FormatError(kStage, line, std::string(e.what()) + " (id '" + id + "')");
    }
    auto emb_it = rec.find("embedding");
    if (emb_it == rec.end()) throw FormatError(kStage, line, "missing 'embedding'");
    entry.embedding = read_numbers(*emb_it, line, "embedding");
    if (entry.embedding.size() != header->dimension) {
      throw FormatError(kStage, line,
                        "dimension mismatch: got " + std::to_string(entry.embedding.size()) +
                            ", header says " + std::to_string(header->dimension));
    }
    entries.emplace(id, std::move(entry));
  });
  if (!header) throw FormatError(kStage, 0, "score file has no header record");
  return ScoreBundle(*header, std::move(entries));
}

ScoreBundle load_scores(const std::filesystem::path& path, const Corpus& corpus) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(kStage, "cannot open score file " + path.string());
  return parse_scores(in, corpus);
}

ScoreBundle fetch_scores(const std::string& url, const Corpus& corpus) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) throw Error(kStage, "malformed score URL " + url);
  httplib::Client client(m[1].str());
  client.set_follow_location(true);
  const std::string path = m[2].matched ? m[2].str() : "/";
  auto res = client.Get(path);
  if (!res) {
    throw Error(kStage, "score fetch failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(kStage, "score fetch returned HTTP " + std::to_string(res->status));
  }
  std::istringstream in(res->body);
  return parse_scores(in, corpus);
}

std::string dump_scores(const ScoreBundle& bundle, const Corpus* corpus) {
  std::string out;
  Json header;
  header["dimension"] = bundle.dimension();
  header["scorer_id"] = bundle.provenance().scorer_id;
  header["checkpoint"] = bundle.provenance().checkpoint;
  out += jsonl::dump_line(header);
  auto emit = [&](const std::string& id, const ScoreEntry& e) {
    Json rec;
    rec["id"] = id;
    rec["confidence"] = e.confidence.scores();
    rec["embedding"] = e.embedding;
    out += jsonl::dump_line(rec);
  };
  if (corpus) {
    for (const auto& item : *corpus) {
      if (const auto* e = bundle.find(item.id)) emit(item.id, *e);
    }
  } else {
    for (const auto& [id, e] : bundle.entries()) emit(id, e);
  }
  return out;
}

void write_scores(const std::filesystem::path& path, const ScoreBundle& bundle,
                  const Corpus* corpus) {
  jsonl::write_text(path, dump_scores(bundle, corpus));
}

ScoreBundle uniform_fallback(const Corpus& corpus, std::size_t dimension) {
  std::map<std::string, ScoreEntry> entries;
  for (const auto& item : corpus) {
    entries.emplace(item.id,
                    ScoreEntry{ConfidenceVector::uniform(), std::vector<double>(dimension, 0.0)});
  }
  return ScoreBundle(ScoreProvenance{dimension, "uniform-fallback", "none"}, std::move(entries));
}

void require_coverage(const ScoreBundle& bundle, const Corpus& corpus) {
  for (const auto& item : corpus) {
    if (!bundle.find(item.id)) {
      throw ValidationError(kStage, "score bundle does not cover item '" + item.id + "'");
    }
  }
}

}  // namespace mstage

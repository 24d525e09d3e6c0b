// Builds a replay transcript for a fixture directory.
//
//   fixture_author <dir>
//
// <dir> holds corpus.jsonl, scores.jsonl and responses.json, a map
// mode -> item id -> scripted reply. The plain_zero_shot replies double as the
// reasoning chains (the chain prompt and the plain prompt are the same text).
// Every prompt the default k=3 pipeline would send is rendered, paired with
// its scripted reply and written to <dir>/transcript.jsonl.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "mstage/config.hpp"
#include "mstage/error.hpp"
#include "mstage/jsonl.hpp"
#include "mstage/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mstage;
using Json = nlohmann::json;

namespace {

struct Entry {
  std::string hash;
  std::string text;
};

class Transcript {
 public:
  void add(const std::string& prompt, const std::string& reply) {
    const auto hash = prompt_hash(prompt);
    if (auto it = seen_.find(hash); it != seen_.end()) {
      if (it->second != reply) throw std::runtime_error("conflicting replies for prompt " + hash);
      return;
    }
    seen_[hash] = reply;
    order_.push_back({hash, reply});
  }
  void write(const fs::path& path) const {
    std::vector<Json> rows;
    for (const auto& e : order_) {
      rows.push_back(Json{{"backend", "fixture"},
                          {"prompt_hash", e.hash},
                          {"response_text", e.text},
                          {"finish_reason", "stop"}});
    }
    jsonl::write_file(path, rows);
  }

 private:
  std::map<std::string, std::string> seen_;
  std::vector<Entry> order_;
};

const std::string& reply_for(const Json& responses, const std::string& mode,
                             const std::string& id) {
  const auto& table = responses.at(mode);
  if (!table.contains(id)) throw std::runtime_error("no " + mode + " reply for item " + id);
  return table.at(id).get_ref<const std::string&>();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: fixture_author <fixture-dir>\n";
    return 2;
  }
  try {
    const fs::path dir = fs::absolute(argv[1]);
    const Json responses = Json::parse(jsonl::read_text(dir / "responses.json"));
    const fs::path work = fs::temp_directory_path() / "mstage-fixture-author";
    fs::remove_all(work);

    RunConfig config;
    config.corpus = dir / "corpus.jsonl";
    config.scores = dir / "scores.jsonl";
    config.output_dir = work / "out";
    config.cache_dir = work / "cache";
    config.transcript = work / "transcript.jsonl";
    config.concurrency = 1;

    Transcript transcript;
    Pipeline chains_only(config);
    const auto style = prompt_style(config);
    for (const auto& item : chains_only.corpus()) {
      transcript.add(zero_shot_prompt(item, style), reply_for(responses, "plain_zero_shot", item.id));
    }
    transcript.write(config.transcript);

    // Chains now replay, so demonstrations and every mode's prompts resolve.
    Pipeline p(config);
    for (auto mode : kAblationModes) {
      const std::string name(to_string(mode));
      if (!responses.contains(name)) continue;
      for (const auto& prompt : p.prompts(mode, work / name)) {
        transcript.add(prompt.text, reply_for(responses, name, prompt.item_id));
      }
    }
    transcript.write(dir / "transcript.jsonl");
    fs::remove_all(work);
    std::cout << "wrote " << (dir / "transcript.jsonl").string() << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return 1;
}

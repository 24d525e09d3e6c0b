#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "mstage/config.hpp"
#include "mstage/jsonl.hpp"

namespace testing_support {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& rel) { return fs::path(MSTAGE_FIXTURE_DIR) / rel; }

inline std::string slurp(const fs::path& p) { return mstage::jsonl::read_text(p); }

// Fresh scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("mstage-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

// Config for a bundled replay fixture (replay or tiny) writing under `work`.
inline mstage::RunConfig fixture_config(const std::string& name, const fs::path& work) {
  mstage::RunConfig c;
  c.corpus = fixture(name + "/corpus.jsonl");
  c.scores = fixture(name + "/scores.jsonl");
  c.transcript = fixture(name + "/transcript.jsonl");
  c.output_dir = work / "out";
  c.cache_dir = work / "cache";
  return c;
}

}  // namespace testing_support

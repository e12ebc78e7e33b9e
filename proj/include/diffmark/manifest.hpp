#pragma once

#include <string>
#include <vector>

namespace diffmark {

// Artifact inventory written at the close of every CLI run. Artifact hashes
// make silent output corruption detectable and runs byte-auditable.
class RunManifest {
  public:
    RunManifest(std::string output_dir, std::string config_hash, std::string schedule_fingerprint,
                std::string code_version);

    void add_artifact(const std::string& path);
    // Hashes every artifact and writes <output_dir>/manifest.json.
    std::string close();

  private:
    std::string output_dir_;
    std::string config_hash_;
    std::string schedule_fingerprint_;
    std::string code_version_;
    std::string started_at_;
    std::vector<std::string> artifacts_;
};

std::string iso8601_utc_now();

}  // namespace diffmark

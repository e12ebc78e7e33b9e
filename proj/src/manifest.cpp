#include "diffmark/manifest.hpp"

#include <ctime>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "diffmark/hash.hpp"

namespace diffmark {

std::string iso8601_utc_now() {
    std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

RunManifest::RunManifest(std::string output_dir, std::string config_hash,
                         std::string schedule_fingerprint, std::string code_version)
    : output_dir_(std::move(output_dir)),
      config_hash_(std::move(config_hash)),
      schedule_fingerprint_(std::move(schedule_fingerprint)),
      code_version_(std::move(code_version)),
      started_at_(iso8601_utc_now()) {}

void RunManifest::add_artifact(const std::string& path) {
    // store paths relative to the output dir so manifests from identical runs
    // in different directories stay byte-identical
    std::string rel = path;
    if (rel.rfind(output_dir_ + "/", 0) == 0) rel = rel.substr(output_dir_.size() + 1);
    artifacts_.push_back(rel);
}

std::string RunManifest::close() {
    nlohmann::json j;
    j["config_hash"] = config_hash_;
    j["schedule_fingerprint"] = schedule_fingerprint_;
    j["code_version"] = code_version_;
    j["started_at"] = started_at_;
    j["finished_at"] = iso8601_utc_now();
    nlohmann::json arts = nlohmann::json::array();
    for (const std::string& p : artifacts_) {
        std::string full = p.size() && p[0] == '/' ? p : output_dir_ + "/" + p;
        arts.push_back({{"path", p}, {"sha256", sha256_file_hex(full)}});
    }
    j["artifacts"] = arts;

    std::string path = output_dir_ + "/manifest.json";
    std::ofstream f(path);
    if (!f) throw std::runtime_error("RunManifest: cannot write " + path);
    f << j.dump(2) << "\n";
    return path;
}

}  // namespace diffmark

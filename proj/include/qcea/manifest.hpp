#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcea/common.hpp"

namespace qcea {

inline constexpr const char* kToolVersion = "qcea 0.1.0";

inline std::string file_digest(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::in | std::ios::binary);
    require(f.good(), errkind::io, "cannot digest " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (f) {
        f.read(buf, sizeof buf);
        const std::streamsize n = f.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

// Written into the output directory before any computation: the command, the
// fully resolved configuration, the seed, input digests and planned outputs.
struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> input_digests;
    std::vector<std::string> outputs;

    void add_input(const std::filesystem::path& p) {
        input_digests.emplace_back(p.string(), file_digest(p));
    }

    void add_input_dir(const std::filesystem::path& dir) {
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(dir))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) add_input(f);
    }

    void write(const std::filesystem::path& out_dir) const {
        std::filesystem::create_directories(out_dir);
        nlohmann::json j;
        j["tool"] = kToolVersion;
        j["command"] = command;
        j["seed"] = seed;
        j["config"] = config;
        nlohmann::json inputs = nlohmann::json::array();
        for (const auto& [p, d] : input_digests) inputs.push_back({{"path", p}, {"digest", d}});
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        std::ofstream f(out_dir / "manifest.json");
        require(f.good(), errkind::io, "cannot write manifest in " + out_dir.string());
        f << j.dump(2) << "\n";
    }
};

}  // namespace qcea

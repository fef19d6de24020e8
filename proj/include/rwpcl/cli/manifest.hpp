#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rwpcl/cli/config.hpp"
#include "rwpcl/core/rng.hpp"

#ifndef RWPCL_VERSION
#define RWPCL_VERSION "0.0.0"
#endif

namespace rwpcl::cli {

/// FNV-1a of a file's bytes, as 16 hex digits.
inline std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for checksum: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

/// Unique per invocation: wall-clock time plus hardware entropy.
inline std::string make_run_id() {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(now).count();
  std::random_device rd;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%lld-%08x", static_cast<long long>(us), rd());
  return buf;
}

/// Record written next to every command's artifacts.
struct ExperimentManifest {
  std::string run_id = make_run_id();
  std::string command;
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::size_t jobs = 1;
  nlohmann::json config;  // full resolved key=value snapshot
  std::string dataset;
  std::string dataset_checksum;
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, double>> timings;  // seconds

  nlohmann::json to_json() const {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [k, v] : timings) t[k] = v;
    return {{"run_id", run_id},   {"command", command},
            {"version", RWPCL_VERSION}, {"seed", seed},
            {"deterministic", deterministic}, {"jobs", jobs},
            {"config", config},   {"dataset", dataset},
            {"dataset_checksum", dataset_checksum}, {"outputs", outputs},
            {"timings_seconds", t}};
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << to_json().dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace rwpcl::cli

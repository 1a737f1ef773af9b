// Run configuration shared by every CLI command: one JSON file, a handful
// of environment overrides, and the exit-code contract.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "layoutplan/llm_client.hpp"
#include "layoutplan/sampler.hpp"

namespace layoutplan {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitUpstream = 3,
  kExitValidation = 4,
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by commands for bad inputs that are not configuration problems
/// (unparseable records, failed invariants).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataPaths {
  std::optional<std::filesystem::path> pool;        // candidate examples, layout records
  std::optional<std::filesystem::path> train;       // training prompts with gold layouts
  std::optional<std::filesystem::path> captions;    // captions to plan / tag
  std::optional<std::filesystem::path> coco_captions;
  std::optional<std::filesystem::path> coco_instances;
  std::optional<std::filesystem::path> triplet_sidecar;
  std::optional<std::filesystem::path> pos_sidecar;
  std::optional<std::filesystem::path> score_fixture;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  LlmConfig llm;
  TrainConfig sampler;
  /// Drop training prompts whose id also appears in the candidate pool.
  bool disjoint_pool = true;
  std::optional<std::filesystem::path> checkpoint;  // trained policy for `plan --strategy policy`
  std::optional<std::string> scorer_url;
  std::optional<std::filesystem::path> vocabulary;
  std::optional<std::filesystem::path> embedding_table;
  std::size_t hashing_dim = 64;
  std::size_t subset_cap = 200;
  DataPaths data;

  /// Parses a config document; relative paths resolve against `base_dir`.
  /// Every referenced input path must exist. Throws ConfigError.
  static RunConfig from_json(const std::string& text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  /// LLM_BASE_URL, LLM_API_KEY, SCORER_BASE_URL.
  void apply_environment();

  /// Canonical JSON, secrets left out.
  std::string canonical_json() const;
  std::string hash() const;
};

}  // namespace layoutplan

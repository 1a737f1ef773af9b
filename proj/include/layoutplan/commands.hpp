// Command implementations behind the `layoutplan` executable. Each returns
// a process exit code; run_guarded maps exceptions onto the same codes.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "layoutplan/config.hpp"
#include "layoutplan/embedding.hpp"
#include "layoutplan/layout.hpp"
#include "layoutplan/sampler.hpp"

namespace layoutplan {

enum class Strategy { kRandom, kNearestNeighbor, kPolicy };

/// "random", "nn" / "nearest-neighbor", "policy". Throws ConfigError.
Strategy parse_strategy(std::string_view name);
std::string_view strategy_name(Strategy s);

/// Overrides taken from the command line; unset fields keep the config value.
struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> shots;
  std::optional<std::filesystem::path> out;
};

/// Loads the config (or defaults), applies environment then flags.
RunConfig resolve_config(const CommonOptions& opts);

/// Caption-embedding backend chosen by the config: a lookup table with a
/// hashing fallback, the scorer service, or the hashing embedder.
std::shared_ptr<TextEmbedder> make_embedder(const RunConfig& cfg);

CandidatePool load_candidate_pool(const std::filesystem::path& path, TextEmbedder& embedder);

/// Chooses `k` candidates for each query embedding, in the order they go
/// into the prompt. One generator is threaded through all queries.
std::vector<std::vector<std::size_t>> select_examples(Strategy strategy, const CandidatePool& pool,
                                                      const std::vector<std::vector<double>>& queries,
                                                      std::size_t k, std::uint64_t seed,
                                                      const PolicyParams* policy = nullptr,
                                                      bool with_replacement = false);

/// Labeled rectangles on a 512 x 512 canvas.
std::string render_svg(const Layout& layout, const std::string& title = {});

struct PlanOptions {
  CommonOptions common;
  Strategy strategy = Strategy::kPolicy;
  std::optional<std::string> caption;
  std::optional<std::filesystem::path> captions_file;
  bool svg = false;
};

struct TrainOptions {
  CommonOptions common;
  bool resume = false;
};

struct EvalOptions {
  CommonOptions common;
  std::filesystem::path generated;
  /// One file per subset; the subset name is the file stem.
  std::vector<std::filesystem::path> gold;
  std::optional<std::filesystem::path> generated_features;
  std::optional<std::filesystem::path> gold_features;
};

struct BuildTestsetOptions {
  CommonOptions common;
};

int cmd_plan(const PlanOptions& opts, std::ostream& log);
int cmd_train_sampler(const TrainOptions& opts, std::ostream& log);
int cmd_eval(const EvalOptions& opts, std::ostream& log);
int cmd_build_testset(const BuildTestsetOptions& opts, std::ostream& log);
int cmd_kernel_check(std::uint64_t seed, std::ostream& out);
/// cmd_plan restricted to the random / nearest-neighbor strategies; output
/// goes to baselines-<strategy>.jsonl.
int cmd_baselines(const PlanOptions& opts, std::ostream& log);

/// Runs `body`, translating exceptions: ConfigError -> 2, transport, rate
/// limit, retry and scorer failures -> 3, validation-type errors -> 4.
int run_guarded(const std::function<int()>& body, std::ostream& err);

}  // namespace layoutplan

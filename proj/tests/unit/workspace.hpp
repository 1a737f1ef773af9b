// A small on-disk project (pool, training prompts, captions, config) for
// exercising the commands end to end against a mock LLM.
#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "layoutplan/layout.hpp"
#include "test_support.hpp"

namespace testsupport {

inline void write_workspace(const std::filesystem::path& dir, const std::string& llm_url,
                            const nlohmann::json& sampler_overrides = nlohmann::json::object()) {
  using layoutplan::LayoutRecord;
  const char* animals[] = {"dog", "cat", "horse", "bird", "sheep", "cow"};
  const char* places[] = {"on a couch", "in a field", "next to a fence", "under a tree", "by the sea"};
  std::vector<LayoutRecord> pool, train;
  for (int i = 0; i < 12; ++i) {
    LayoutRecord r;
    r.id = "pool" + std::to_string(i);
    r.caption = std::string("a ") + animals[i % 6] + " " + places[i % 5];
    r.layout.items.push_back({animals[i % 6], {0.1 + 0.02 * i, 0.2, 0.3, 0.4}});
    r.layout.source_id = r.id;
    pool.push_back(r);
  }
  for (int i = 0; i < 10; ++i) {
    LayoutRecord r;
    r.id = i == 0 ? "pool0" : "train" + std::to_string(i);  // one overlap, removed by default
    r.caption = std::string("two ") + animals[(i + 1) % 6] + "s " + places[(i + 2) % 5];
    r.layout.items.push_back({animals[(i + 1) % 6], {0.1, 0.1 + 0.03 * i, 0.4, 0.3}});
    r.layout.source_id = r.id;
    train.push_back(r);
  }
  std::filesystem::create_directories(dir);
  layoutplan::write_layout_records(dir / "pool.jsonl", pool);
  layoutplan::write_layout_records(dir / "train.jsonl", train);
  write_file(dir / "captions.jsonl",
             "{\"id\": \"c1\", \"caption\": \"a dog on a couch\"}\n"
             "{\"id\": \"c2\", \"caption\": \"three sheep in a field\"}\n"
             "{\"id\": \"c3\", \"caption\": \"a bird sitting under a tree\"}\n");
  nlohmann::json sampler = {{"shots", 2}, {"batch_size", 4}, {"epochs", 2}, {"learning_rate", 0.01},
                            {"latent_dim", 8}, {"init_gain", 2.0}, {"baseline", true}};
  sampler.update(sampler_overrides);
  const nlohmann::json cfg = {
      {"seed", 7},
      {"output_dir", "out"},
      {"llm", {{"base_url", llm_url}, {"model", "mock"}, {"max_retries", 1}, {"backoff_ms", 1},
               {"timeout_ms", 5000}, {"cache_dir", "cache"}, {"max_concurrency", 3}}},
      {"sampler", sampler},
      {"embedding", {{"hashing_dim", 32}}},
      {"data", {{"pool", "pool.jsonl"}, {"train", "train.jsonl"}, {"captions", "captions.jsonl"}}}};
  write_file(dir / "config.json", cfg.dump(2));
}

}  // namespace testsupport

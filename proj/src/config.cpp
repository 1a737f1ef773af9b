#include "layoutplan/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace layoutplan {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const json* child(const json& doc, const char* key) {
  auto it = doc.find(key);
  return it == doc.end() || it->is_null() ? nullptr : &*it;
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (const json* v = child(obj, key)) {
    try {
      out = v->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where + "." + key + ": " + e.what());
    }
  }
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError("unknown key " + where + "." + k);
  }
}

std::optional<std::filesystem::path> input_path(const json& obj, const char* key, const std::filesystem::path& base,
                                                const std::string& where) {
  const json* v = child(obj, key);
  if (!v) return std::nullopt;
  if (!v->is_string()) throw ConfigError(where + "." + key + " must be a path string");
  std::filesystem::path p = v->get<std::string>();
  if (p.is_relative() && !base.empty()) p = base / p;
  if (!std::filesystem::exists(p)) throw ConfigError(where + "." + key + ": no such file " + p.string());
  return p;
}

std::filesystem::path output_path(const std::string& s, const std::filesystem::path& base) {
  std::filesystem::path p = s;
  return p.is_relative() && !base.empty() ? base / p : p;
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(doc,
             {"seed", "output_dir", "llm", "sampler", "checkpoint", "scorer", "vocabulary", "embedding", "testset",
              "data"},
             "config");
  RunConfig cfg;
  read(doc, "seed", cfg.seed, "config");
  if (const json* o = child(doc, "output_dir")) cfg.output_dir = output_path(o->get<std::string>(), base_dir);

  if (const json* llm = child(doc, "llm")) {
    check_keys(*llm,
               {"base_url", "model", "api_key", "temperature", "max_retries", "timeout_ms", "backoff_ms", "cache_dir",
                "max_concurrency"},
               "llm");
    read(*llm, "base_url", cfg.llm.base_url, "llm");
    read(*llm, "model", cfg.llm.model, "llm");
    read(*llm, "api_key", cfg.llm.api_key, "llm");
    read(*llm, "temperature", cfg.llm.temperature, "llm");
    read(*llm, "max_retries", cfg.llm.max_retries, "llm");
    read(*llm, "max_concurrency", cfg.llm.max_concurrency, "llm");
    std::int64_t ms = cfg.llm.timeout.count();
    read(*llm, "timeout_ms", ms, "llm");
    cfg.llm.timeout = std::chrono::milliseconds(ms);
    ms = cfg.llm.backoff_base.count();
    read(*llm, "backoff_ms", ms, "llm");
    cfg.llm.backoff_base = std::chrono::milliseconds(ms);
    if (const json* c = child(*llm, "cache_dir")) cfg.llm.cache_dir = output_path(c->get<std::string>(), base_dir);
    if (cfg.llm.max_retries < 1) throw ConfigError("llm.max_retries must be at least 1");
    if (cfg.llm.max_concurrency < 1) throw ConfigError("llm.max_concurrency must be at least 1");
  }

  if (const json* s = child(doc, "sampler")) {
    check_keys(*s,
               {"shots", "batch_size", "epochs", "learning_rate", "baseline", "baseline_momentum", "with_replacement",
                "init_gain", "latent_dim", "disjoint_pool"},
               "sampler");
    read(*s, "shots", cfg.sampler.shots, "sampler");
    read(*s, "batch_size", cfg.sampler.batch_size, "sampler");
    read(*s, "epochs", cfg.sampler.epochs, "sampler");
    read(*s, "learning_rate", cfg.sampler.learning_rate, "sampler");
    read(*s, "baseline", cfg.sampler.baseline.enabled, "sampler");
    read(*s, "baseline_momentum", cfg.sampler.baseline.momentum, "sampler");
    read(*s, "with_replacement", cfg.sampler.with_replacement, "sampler");
    read(*s, "init_gain", cfg.sampler.init_gain, "sampler");
    read(*s, "latent_dim", cfg.sampler.latent_dim, "sampler");
    read(*s, "disjoint_pool", cfg.disjoint_pool, "sampler");
    if (cfg.sampler.shots == 0) throw ConfigError("sampler.shots must be positive");
    if (cfg.sampler.batch_size == 0) throw ConfigError("sampler.batch_size must be positive");
    if (cfg.sampler.latent_dim == 0) throw ConfigError("sampler.latent_dim must be positive");
  }

  cfg.checkpoint = input_path(doc, "checkpoint", base_dir, "config");
  if (const json* sc = child(doc, "scorer")) {
    check_keys(*sc, {"base_url"}, "scorer");
    if (const json* u = child(*sc, "base_url")) cfg.scorer_url = u->get<std::string>();
  }
  cfg.vocabulary = input_path(doc, "vocabulary", base_dir, "config");
  if (const json* e = child(doc, "embedding")) {
    check_keys(*e, {"table", "hashing_dim"}, "embedding");
    cfg.embedding_table = input_path(*e, "table", base_dir, "embedding");
    read(*e, "hashing_dim", cfg.hashing_dim, "embedding");
    if (cfg.hashing_dim == 0) throw ConfigError("embedding.hashing_dim must be positive");
  }
  if (const json* t = child(doc, "testset")) {
    check_keys(*t, {"cap"}, "testset");
    read(*t, "cap", cfg.subset_cap, "testset");
  }
  if (const json* d = child(doc, "data")) {
    check_keys(*d,
               {"pool", "train", "captions", "coco_captions", "coco_instances", "triplet_sidecar", "pos_sidecar",
                "score_fixture"},
               "data");
    cfg.data.pool = input_path(*d, "pool", base_dir, "data");
    cfg.data.train = input_path(*d, "train", base_dir, "data");
    cfg.data.captions = input_path(*d, "captions", base_dir, "data");
    cfg.data.coco_captions = input_path(*d, "coco_captions", base_dir, "data");
    cfg.data.coco_instances = input_path(*d, "coco_instances", base_dir, "data");
    cfg.data.pos_sidecar = input_path(*d, "pos_sidecar", base_dir, "data");
    cfg.data.score_fixture = input_path(*d, "score_fixture", base_dir, "data");
    // The triplet sidecar may legitimately be absent; extraction reports it.
    if (const json* t = child(*d, "triplet_sidecar")) cfg.data.triplet_sidecar = output_path(t->get<std::string>(), base_dir);
  }
  cfg.sampler.seed = cfg.seed;
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str(), path.parent_path());
}

void RunConfig::apply_environment() {
  llm.apply_environment();
  if (const char* url = std::getenv("SCORER_BASE_URL"); url && *url) scorer_url = url;
}

// Output and cache locations do not influence results and stay out of the
// hash, so two runs that differ only in where they write agree.
std::string RunConfig::canonical_json() const {
  auto opt = [](const auto& p) -> json { return p ? json(p->string()) : json(nullptr); };
  ordered_json j;
  j["seed"] = seed;
  j["llm"] = {{"base_url", llm.base_url},
              {"model", llm.model},
              {"temperature", llm.temperature},
              {"max_retries", llm.max_retries},
              {"timeout_ms", llm.timeout.count()},
              {"backoff_ms", llm.backoff_base.count()},
              {"max_concurrency", llm.max_concurrency}};
  j["sampler"] = {{"shots", sampler.shots},
                  {"batch_size", sampler.batch_size},
                  {"epochs", sampler.epochs},
                  {"learning_rate", sampler.learning_rate},
                  {"baseline", sampler.baseline.enabled},
                  {"baseline_momentum", sampler.baseline.momentum},
                  {"with_replacement", sampler.with_replacement},
                  {"init_gain", sampler.init_gain},
                  {"latent_dim", sampler.latent_dim},
                  {"disjoint_pool", disjoint_pool}};
  j["checkpoint"] = opt(checkpoint);
  j["scorer"] = {{"base_url", scorer_url ? json(*scorer_url) : json(nullptr)}};
  j["vocabulary"] = opt(vocabulary);
  j["embedding"] = {{"table", opt(embedding_table)}, {"hashing_dim", hashing_dim}};
  j["testset"] = {{"cap", subset_cap}};
  j["data"] = {{"pool", opt(data.pool)},
               {"train", opt(data.train)},
               {"captions", opt(data.captions)},
               {"coco_captions", opt(data.coco_captions)},
               {"coco_instances", opt(data.coco_instances)},
               {"triplet_sidecar", opt(data.triplet_sidecar)},
               {"pos_sidecar", opt(data.pos_sidecar)},
               {"score_fixture", opt(data.score_fixture)}};
  return j.dump();
}

std::string RunConfig::hash() const { return sha256_hex(canonical_json()); }

}  // namespace layoutplan

#include "layoutplan/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "layoutplan/dataset.hpp"
#include "layoutplan/llm_client.hpp"
#include "layoutplan/metrics.hpp"
#include "layoutplan/prompt.hpp"
#include "layoutplan/relation_kernel.hpp"

namespace layoutplan {

using nlohmann::json;
using nlohmann::ordered_json;

Strategy parse_strategy(std::string_view name) {
  if (name == "random") return Strategy::kRandom;
  if (name == "nn" || name == "nearest-neighbor") return Strategy::kNearestNeighbor;
  if (name == "policy") return Strategy::kPolicy;
  throw ConfigError("unknown strategy '" + std::string(name) + "' (random | nn | policy)");
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kRandom:
      return "random";
    case Strategy::kNearestNeighbor:
      return "nn";
    case Strategy::kPolicy:
      return "policy";
  }
  return "?";
}

RunConfig resolve_config(const CommonOptions& opts) {
  RunConfig cfg = opts.config ? RunConfig::load(*opts.config) : RunConfig{};
  cfg.apply_environment();
  if (opts.seed) {
    cfg.seed = *opts.seed;
    cfg.sampler.seed = *opts.seed;
  }
  if (opts.shots) {
    if (*opts.shots == 0) throw ConfigError("--shots must be positive");
    cfg.sampler.shots = *opts.shots;
  }
  if (opts.out) cfg.output_dir = *opts.out;
  return cfg;
}

namespace {

void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n == 0.0) throw ValidationError("zero-length caption embedding");
  for (double& x : v) x /= n;
}

std::vector<std::vector<double>> embed_captions(TextEmbedder& embedder, const std::vector<std::string>& captions) {
  auto vecs = embedder.embed(captions);
  for (auto& v : vecs) normalize(v);
  return vecs;
}

struct Query {
  std::string id;
  std::string caption;
};

std::vector<Query> read_queries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open captions file " + path.string());
  std::vector<Query> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line.front() == '{') {
      json doc;
      try {
        doc = json::parse(line);
        out.push_back({doc.at("id").get<std::string>(), doc.at("caption").get<std::string>()});
      } catch (const json::exception& e) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    } else {
      out.push_back({"q" + std::to_string(out.size() + 1), line});
    }
  }
  return out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

// No timestamps: the manifest itself must be reproducible.
void write_manifest(const RunConfig& cfg, const std::string& command, ordered_json extra,
                    const std::vector<std::string>& outputs) {
  ordered_json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["seed"] = cfg.seed;
  m["config_hash"] = cfg.hash();
  m["llm_model"] = cfg.llm.model;
  for (auto& [k, v] : extra.items()) m[k] = v;
  m["outputs"] = outputs;
  write_text(cfg.output_dir / "run-manifest.json", m.dump(2) + "\n");
}

std::string safe_file_stem(const std::string& id) {
  std::string s;
  for (char c : id) s.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
  return s.empty() ? "record" : s;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out.push_back(c);
    }
  }
  return out;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::shared_ptr<TextEmbedder> make_embedder(const RunConfig& cfg) {
  auto hashing = std::make_shared<HashingEmbedder>(cfg.hashing_dim);
  if (cfg.embedding_table) return std::make_shared<TableEmbedder>(*cfg.embedding_table, hashing);
  if (cfg.scorer_url) return std::make_shared<ScorerClient>(*cfg.scorer_url);
  return hashing;
}

CandidatePool load_candidate_pool(const std::filesystem::path& path, TextEmbedder& embedder) {
  const auto records = read_layout_records(path);
  std::vector<std::string> captions;
  for (const auto& r : records) captions.push_back(r.caption);
  auto vecs = embed_captions(embedder, captions);
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < records.size(); ++i) {
    cands.push_back({records[i].id, {records[i].caption, records[i].layout}, std::move(vecs[i])});
  }
  return CandidatePool(std::move(cands));
}

std::vector<std::vector<std::size_t>> select_examples(Strategy strategy, const CandidatePool& pool,
                                                      const std::vector<std::vector<double>>& queries,
                                                      std::size_t k, std::uint64_t seed, const PolicyParams* policy,
                                                      bool with_replacement) {
  if (!with_replacement && k > pool.size()) {
    throw PoolTooSmall("need " + std::to_string(k) + " examples, pool has " + std::to_string(pool.size()));
  }
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    switch (strategy) {
      case Strategy::kRandom: {
        std::vector<std::size_t> idx(pool.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
        idx.resize(k);
        out.push_back(std::move(idx));
        break;
      }
      case Strategy::kNearestNeighbor: {
        if (q.size() != pool.dim()) throw DimensionMismatch("query embedding dimension differs from the pool");
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t i = 0; i < pool.size(); ++i) scored.emplace_back(cosine(q, pool[i].embedding), i);
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < k; ++i) idx.push_back(scored[i].second);
        out.push_back(std::move(idx));
        break;
      }
      case Strategy::kPolicy:
        if (!policy) throw ConfigError("the policy strategy needs a trained checkpoint");
        out.push_back(sample_examples(*policy, q, pool, k, rng, with_replacement));
        break;
    }
  }
  return out;
}

std::string render_svg(const Layout& layout, const std::string& title) {
  static constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                             "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  constexpr double kSize = 512.0;
  std::string s =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"512\" height=\"512\" viewBox=\"0 0 512 512\">\n";
  if (!title.empty()) s += "  <title>" + xml_escape(title) + "</title>\n";
  s += "  <rect x=\"0\" y=\"0\" width=\"512\" height=\"512\" fill=\"white\" stroke=\"black\"/>\n";
  for (const auto& item : layout.items) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : item.label) h = (h ^ c) * 16777619u;
    const char* color = kPalette[h % std::size(kPalette)];
    const double x = item.box.x * kSize, y = item.box.y * kSize;
    s += "  <rect x=\"" + fixed2(x) + "\" y=\"" + fixed2(y) + "\" width=\"" + fixed2(item.box.w * kSize) +
         "\" height=\"" + fixed2(item.box.h * kSize) + "\" fill=\"none\" stroke=\"" + color +
         "\" stroke-width=\"2\"/>\n";
    s += "  <text x=\"" + fixed2(x + 3.0) + "\" y=\"" + fixed2(y + 14.0) +
         "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" + color + "\">" + xml_escape(item.label) +
         "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

// ---- plan / baselines -----------------------------------------------------

namespace {

int run_plan(const PlanOptions& opts, std::ostream& log, const std::string& command, const std::string& out_name) {
  RunConfig cfg = resolve_config(opts.common);
  if (!cfg.data.pool) throw ConfigError("data.pool is required to plan with in-context examples");

  std::vector<Query> queries;
  if (opts.caption) queries.push_back({"q1", *opts.caption});
  else if (opts.captions_file) queries = read_queries(*opts.captions_file);
  else if (cfg.data.captions) queries = read_queries(*cfg.data.captions);
  else throw ConfigError("nothing to plan: pass --caption, --captions-file or set data.captions");

  auto embedder = make_embedder(cfg);
  const CandidatePool pool = load_candidate_pool(*cfg.data.pool, *embedder);
  std::vector<std::string> captions;
  for (const auto& q : queries) captions.push_back(q.caption);
  const auto query_vecs = embed_captions(*embedder, captions);

  std::optional<PolicyParams> policy;
  if (opts.strategy == Strategy::kPolicy) {
    if (!cfg.checkpoint) throw ConfigError("strategy 'policy' needs `checkpoint` in the config");
    policy = Checkpoint::load(*cfg.checkpoint).params;
    if (policy->input_dim != pool.dim()) {
      throw ValidationError("checkpoint input dimension " + std::to_string(policy->input_dim) +
                            " does not match the caption embeddings (" + std::to_string(pool.dim()) + ")");
    }
  }
  const auto chosen = select_examples(opts.strategy, pool, query_vecs, cfg.sampler.shots, cfg.seed,
                                      policy ? &*policy : nullptr, cfg.sampler.with_replacement);

  std::vector<PromptBundle> bundles;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    std::vector<IclExample> examples;
    for (std::size_t c : chosen[i]) examples.push_back(pool[c].example);
    bundles.push_back(build_prompt(std::move(examples), queries[i].caption));
  }

  LlmClient client(cfg.llm);
  const auto outcomes = client.complete_many(bundles);

  std::optional<LabelVocabulary> vocab;
  if (cfg.vocabulary) vocab = LabelVocabulary::load_jsonl(*cfg.vocabulary);

  ensure_dir(cfg.output_dir);
  if (opts.svg) ensure_dir(cfg.output_dir / "svg");
  std::vector<LayoutRecord> records;
  std::vector<std::string> outputs{out_name};
  int upstream_failures = 0, parse_failures = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    try {
      if (const auto* err = std::get_if<std::exception_ptr>(&outcomes[i])) std::rethrow_exception(*err);
      Layout layout = parse_layout_response(std::get<std::string>(outcomes[i]));
      if (vocab) {
        layout = map_labels(layout, *vocab, [&](const std::string& t) { return embedder->embed_one(t); });
      }
      layout.source_id = queries[i].id;
      records.push_back({queries[i].id, queries[i].caption, layout});
      if (opts.svg) {
        const std::string name = "svg/" + safe_file_stem(queries[i].id) + ".svg";
        write_text(cfg.output_dir / name, render_svg(layout, queries[i].caption));
        outputs.push_back(name);
      }
    } catch (const TransportError& e) {
      ++upstream_failures;
      log << queries[i].id << ": " << e.what() << "\n";
    } catch (const RateLimited& e) {
      ++upstream_failures;
      log << queries[i].id << ": " << e.what() << "\n";
    } catch (const ExhaustedRetries& e) {
      ++upstream_failures;
      log << queries[i].id << ": " << e.what() << "\n";
    } catch (const std::runtime_error& e) {
      ++parse_failures;
      log << queries[i].id << ": unparseable completion: " << e.what() << "\n";
    }
  }
  write_layout_records(cfg.output_dir / out_name, records);

  ordered_json extra;
  extra["strategy"] = strategy_name(opts.strategy);
  extra["shots"] = cfg.sampler.shots;
  extra["planned"] = records.size();
  extra["failed"] = upstream_failures + parse_failures;
  write_manifest(cfg, command, extra, outputs);
  log << "planned " << records.size() << "/" << queries.size() << " layouts -> "
      << (cfg.output_dir / out_name).string() << "\n";
  if (upstream_failures) return kExitUpstream;
  if (parse_failures) return kExitValidation;
  return kExitOk;
}

}  // namespace

int cmd_plan(const PlanOptions& opts, std::ostream& log) { return run_plan(opts, log, "plan", "plans.jsonl"); }

int cmd_baselines(const PlanOptions& opts, std::ostream& log) {
  if (opts.strategy == Strategy::kPolicy) throw ConfigError("baselines take --strategy random or nn");
  return run_plan(opts, log, "baselines", "baselines-" + std::string(strategy_name(opts.strategy)) + ".jsonl");
}

// ---- train-sampler --------------------------------------------------------

int cmd_train_sampler(const TrainOptions& opts, std::ostream& log) {
  RunConfig cfg = resolve_config(opts.common);
  if (!cfg.data.pool) throw ConfigError("data.pool is required for training");
  if (!cfg.data.train) throw ConfigError("data.train is required for training");

  auto embedder = make_embedder(cfg);
  const CandidatePool pool = load_candidate_pool(*cfg.data.pool, *embedder);
  std::set<std::string> pool_ids;
  for (const auto& c : pool.candidates()) pool_ids.insert(c.id);

  std::vector<LayoutRecord> train_records;
  std::size_t overlapping = 0;
  for (auto& r : read_layout_records(*cfg.data.train)) {
    if (cfg.disjoint_pool && pool_ids.contains(r.id)) {
      ++overlapping;
      continue;
    }
    train_records.push_back(std::move(r));
  }
  if (overlapping) log << "dropped " << overlapping << " training prompt(s) that are also pool candidates\n";
  if (train_records.empty()) throw ValidationError("no training prompts left after removing pool members");
  std::vector<std::string> captions;
  for (const auto& r : train_records) captions.push_back(r.caption);
  auto vecs = embed_captions(*embedder, captions);
  std::vector<TrainQuery> queries;
  for (std::size_t i = 0; i < train_records.size(); ++i) {
    queries.push_back({train_records[i].id, train_records[i].caption, std::move(vecs[i]), train_records[i].layout});
  }

  std::map<std::string, ImageScores> scores;
  if (cfg.data.score_fixture) scores = load_score_fixture(*cfg.data.score_fixture);
  ImageScoreFn scorer;
  if (!scores.empty()) {
    scorer = [&scores](const TrainQuery& q, const Layout&) -> std::optional<ImageScores> {
      auto it = scores.find(q.id);
      if (it == scores.end()) return std::nullopt;
      return it->second;
    };
  }

  LlmClient client(cfg.llm);
  auto planner = [&client](const std::vector<IclExample>& examples, const std::string& caption) {
    return plan_layout(client, examples, caption);
  };
  const RolloutFn rollout = make_layout_rollout(pool, queries, planner, scorer, cfg.llm.max_concurrency);

  ensure_dir(cfg.output_dir);
  const auto ckpt_path = cfg.output_dir / "checkpoint.json";
  const auto log_path = cfg.output_dir / "train-log.jsonl";
  std::optional<Checkpoint> resume;
  if (opts.resume && std::filesystem::exists(ckpt_path)) resume = Checkpoint::load(ckpt_path);
  std::ofstream train_log(log_path, std::ios::binary | (resume ? std::ios::app : std::ios::trunc));
  if (!train_log) throw ConfigError("cannot write " + log_path.string());

  TrainHooks hooks;
  hooks.on_batch = [&](const BatchLog& b) {
    train_log << to_json_line(b) << '\n';
    train_log.flush();
  };
  hooks.on_episode_failed = [&](std::size_t step, const EpisodeRequest& req, const std::string& error) {
    ordered_json e;
    e["event"] = "episode_failed";
    e["step"] = step;
    e["query_id"] = queries[req.query_index].id;
    e["error"] = error;
    train_log << e.dump() << '\n';
  };
  hooks.on_epoch = [&](const Checkpoint& c) { c.save(ckpt_path); };

  const TrainResult result = run_training(cfg.sampler, pool, queries, rollout, hooks, resume);
  result.final_state.save(ckpt_path);

  ordered_json extra;
  extra["train_config_hash"] = cfg.sampler.hash();
  extra["pool_size"] = pool.size();
  extra["train_prompts"] = queries.size();
  extra["steps"] = result.final_state.step;
  extra["reward_mode"] = scores.empty() ? "layout_only" : "layout_and_image_fixture";
  write_manifest(cfg, "train-sampler", extra, {"checkpoint.json", "train-log.jsonl"});
  log << "trained " << result.final_state.step << " steps; checkpoint -> " << ckpt_path.string() << "\n";
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------

int cmd_eval(const EvalOptions& opts, std::ostream& log) {
  RunConfig cfg = resolve_config(opts.common);
  if (opts.gold.empty()) throw ConfigError("eval needs at least one --gold file");
  if (opts.generated_features.has_value() != opts.gold_features.has_value()) {
    throw ConfigError("Frechet distance needs both --generated-features and --gold-features");
  }
  std::map<std::string, LayoutRecord> generated;
  for (auto& r : read_layout_records(opts.generated)) generated[r.id] = std::move(r);

  std::optional<LabelVocabulary> vocab;
  std::shared_ptr<TextEmbedder> embedder;
  if (cfg.vocabulary) {
    vocab = LabelVocabulary::load_jsonl(*cfg.vocabulary);
    embedder = make_embedder(cfg);
  }

  ensure_dir(cfg.output_dir);
  std::ofstream pairs(cfg.output_dir / "eval-pairs.jsonl", std::ios::binary | std::ios::trunc);
  ordered_json report;
  report["subsets"] = ordered_json::array();
  double all_miou = 0.0, all_sim = 0.0;
  std::size_t all_n = 0;
  log << std::left << std::setw(18) << "subset" << std::right << std::setw(8) << "n" << std::setw(10) << "mIoU"
      << std::setw(10) << "LaySim" << std::setw(10) << "missing" << "\n";
  for (const auto& gold_path : opts.gold) {
    const std::string subset = gold_path.stem().string();
    double miou_sum = 0.0, sim_sum = 0.0;
    std::size_t n = 0, missing = 0;
    for (const auto& g : read_layout_records(gold_path)) {
      ordered_json row;
      row["subset"] = subset;
      row["id"] = g.id;
      double miou = 0.0, sim = 0.0;
      auto it = generated.find(g.id);
      if (it == generated.end()) {
        ++missing;
      } else {
        Layout layout = it->second.layout;
        if (vocab) layout = map_labels(layout, *vocab, [&](const std::string& t) { return embedder->embed_one(t); });
        miou = max_iou(layout, g.layout);
        sim = lay_sim(layout, g.layout);
      }
      row["miou"] = miou;
      row["lay_sim"] = sim;
      row["missing"] = it == generated.end();
      pairs << row.dump() << '\n';
      miou_sum += miou;
      sim_sum += sim;
      ++n;
    }
    const double miou = n ? miou_sum / static_cast<double>(n) : 0.0;
    const double sim = n ? sim_sum / static_cast<double>(n) : 0.0;
    report["subsets"].push_back({{"name", subset}, {"count", n}, {"missing", missing}, {"miou", miou}, {"lay_sim", sim}});
    log << std::left << std::setw(18) << subset << std::right << std::setw(8) << n << std::setw(10)
        << fixed2(100.0 * miou) << std::setw(10) << fixed2(100.0 * sim) << std::setw(10) << missing << "\n";
    all_miou += miou_sum;
    all_sim += sim_sum;
    all_n += n;
  }
  report["overall"] = {{"count", all_n},
                       {"miou", all_n ? all_miou / static_cast<double>(all_n) : 0.0},
                       {"lay_sim", all_n ? all_sim / static_cast<double>(all_n) : 0.0}};
  if (opts.generated_features) {
    const double fd = frechet_distance(FeatureCloud::load_jsonl(*opts.generated_features),
                                       FeatureCloud::load_jsonl(*opts.gold_features));
    report["frechet_distance"] = fd;
    log << "Frechet distance: " << fd << "\n";
  }
  write_text(cfg.output_dir / "eval-report.json", report.dump(2) + "\n");
  write_manifest(cfg, "eval", {}, {"eval-pairs.jsonl", "eval-report.json"});
  return kExitOk;
}

// ---- build-testset --------------------------------------------------------

int cmd_build_testset(const BuildTestsetOptions& opts, std::ostream& log) {
  RunConfig cfg = resolve_config(opts.common);
  std::vector<CaptionRecord> records;
  if (cfg.data.coco_captions && cfg.data.coco_instances) {
    records = ingest_coco(*cfg.data.coco_captions, *cfg.data.coco_instances);
  } else if (cfg.data.captions) {
    for (auto& r : read_layout_records(*cfg.data.captions)) {
      records.push_back({std::move(r.id), std::move(r.caption), std::move(r.layout), {}, {}});
    }
  } else {
    throw ConfigError("build-testset needs data.coco_captions + data.coco_instances or data.captions");
  }

  std::map<std::string, std::vector<PosToken>> pos;
  if (cfg.data.pos_sidecar) pos = load_pos_sidecar(*cfg.data.pos_sidecar);
  const TripletExtractor triplets =
      cfg.data.triplet_sidecar ? TripletExtractor(*cfg.data.triplet_sidecar) : TripletExtractor();
  for (auto& r : records) {
    auto it = pos.find(r.id);
    r.tags = tag_caption(r.caption, it == pos.end() ? nullptr : &it->second);
    r.triplets = triplets.extract(r.id, r.caption);
  }

  const TestSubsets subsets = build_test_subsets(records, cfg.seed, cfg.subset_cap);
  const auto dir = cfg.output_dir / "testset";
  ensure_dir(dir);
  std::vector<std::string> outputs;
  ordered_json counts;
  for (const auto& [name, members] : named_subsets(subsets)) {
    write_caption_records(dir / (name + ".jsonl"), *members);
    outputs.push_back("testset/" + name + ".jsonl");
    counts[name] = members->size();
    log << std::left << std::setw(16) << name << members->size() << "\n";
  }
  ordered_json extra;
  extra["records"] = records.size();
  extra["subset_cap"] = cfg.subset_cap;
  extra["counts"] = counts;
  write_manifest(cfg, "build-testset", extra, outputs);
  return kExitOk;
}

// ---- kernel-check ---------------------------------------------------------

int cmd_kernel_check(std::uint64_t seed, std::ostream& out) {
  const auto checks = run_kernel_checks(seed);
  std::size_t width = 5;
  for (const auto& c : checks) width = std::max(width, c.name.size());
  bool all = true;
  out << std::left << std::setw(static_cast<int>(width) + 2) << "check" << "result  detail\n";
  for (const auto& c : checks) {
    all = all && c.passed;
    out << std::left << std::setw(static_cast<int>(width) + 2) << c.name << (c.passed ? "PASS    " : "FAIL    ")
        << c.detail << "\n";
  }
  return all ? kExitOk : kExitValidation;
}

// ---- error mapping --------------------------------------------------------

int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingSidecar& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TransportError& e) {
    err << "upstream failure: " << e.what() << "\n";
    return kExitUpstream;
  } catch (const RateLimited& e) {
    err << "upstream failure: " << e.what() << "\n";
    return kExitUpstream;
  } catch (const ExhaustedRetries& e) {
    err << "upstream failure: " << e.what() << "\n";
    return kExitUpstream;
  } catch (const ScorerError& e) {
    err << "upstream failure: " << e.what() << "\n";
    return kExitUpstream;
  } catch (const ValidationError& e) {
    err << "validation failure: " << e.what() << "\n";
    return kExitValidation;
  } catch (const MalformedRecord& e) {
    err << "validation failure: line " << e.line() << ": " << e.reason() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    // InvalidBox, ShapeMismatch, DimensionMismatch, PoolTooSmall, ...
    err << "validation failure: " << e.what() << "\n";
    return kExitValidation;
  } catch (const json::exception& e) {
    err << "validation failure: malformed JSON input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace layoutplan

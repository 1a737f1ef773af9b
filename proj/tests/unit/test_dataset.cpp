#include "doctest.h"

#include <fstream>
#include <map>
#include <set>

#include "json.hpp"
#include "layoutplan/dataset.hpp"
#include "test_support.hpp"

using namespace layoutplan;
using nlohmann::json;

namespace {

struct Labeled {
  CaptionRecord record;
  std::string expected;
};

std::vector<Labeled> load_fixture() {
  std::ifstream in(testsupport::fixture("testset_captions.jsonl"));
  std::vector<Labeled> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    Labeled l;
    l.record.id = j["id"];
    l.record.caption = j["caption"];
    l.record.tags = tag_caption(l.record.caption);
    l.expected = j["expected_subset"];
    out.push_back(l);
  }
  return out;
}

CaptionRecord tagged(const std::string& id, unsigned bits) {
  CaptionRecord r;
  r.id = id;
  r.tags.bits = bits;
  return r;
}

std::vector<std::string> ids(const std::vector<CaptionRecord>& v) {
  std::vector<std::string> out;
  for (const auto& r : v) out.push_back(r.id);
  return out;
}

}  // namespace

TEST_CASE("tokenizer") {
  CHECK(tokenize_caption("A man's Hat, on-top (2 dogs).") ==
        std::vector<std::string>{"a", "man's", "hat", "on", "top", "2", "dogs"});
  CHECK(tokenize_caption("").empty());
}

TEST_CASE("caption tags") {
  auto names = [](std::string_view c) { return tag_caption(c).names(); };
  CHECK(names("two old cell phones and a wooden table.") == std::vector<std::string>{"numerical"});
  CHECK(names("a large clock tower next to a small white church.") == std::vector<std::string>{"spatial"});
  CHECK(names("a photo of nothing in particular").empty());
  CHECK(names("A man holding a tennis racquet") == std::vector<std::string>{"semantic"});
  // Keywords match whole words only.
  CHECK(names("an upright topless bookshelf").empty());
  CHECK(names("Two dogs sitting next to a cat") == std::vector<std::string>{"numerical", "spatial", "semantic"});
  CHECK_FALSE(has_notional_verb("a dog is on a couch"));
  CHECK(has_notional_verb("a dog is sleeping on a couch"));
}

TEST_CASE("a POS analysis overrides the verb heuristic") {
  const std::vector<PosToken> pos = {{"a", "DET", "det", "a"},
                                     {"dog", "NOUN", "ROOT", "dog"},
                                     {"is", "AUX", "aux", "be"},
                                     {"bathing", "VERB", "acl", "bathe"}};
  CHECK(has_notional_verb("a dog is bathing", &pos));
  const std::vector<PosToken> linking = {{"dog", "NOUN", "nsubj", "dog"}, {"seems", "VERB", "ROOT", "seem"}};
  CHECK_FALSE(has_notional_verb("dog seems", &linking));
  const std::vector<PosToken> aux = {{"has", "VERB", "aux", "have"}};
  CHECK_FALSE(has_notional_verb("has", &aux));
  // No verb in the analysis, even though the heuristic would find one.
  const std::vector<PosToken> none = {{"walking", "NOUN", "ROOT", "walking"}};
  CHECK(tag_caption("walking", &none).count() == 0);
}

TEST_CASE("the 50 hand-labeled captions land in their subsets") {
  const auto fixture = load_fixture();
  REQUIRE(fixture.size() == 50);
  std::vector<CaptionRecord> records;
  for (const auto& l : fixture) records.push_back(l.record);
  const TestSubsets s = build_test_subsets(records, 0);
  std::map<std::string, std::string> got;
  for (const auto& [name, members] : named_subsets(s))
    for (const auto& r : *members) CHECK(got.emplace(r.id, name).second);
  CHECK(got.size() == 50);
  for (const auto& l : fixture) {
    CAPTURE(l.record.caption);
    CHECK(got[l.record.id] == l.expected);
  }
}

TEST_CASE("subset rules and set algebra") {
  using T = CaptionTag;
  const unsigned N = static_cast<unsigned>(T::kNumerical), S = static_cast<unsigned>(T::kSpatial),
                 M = static_cast<unsigned>(T::kSemantic);
  std::vector<CaptionRecord> recs;
  const unsigned masks[] = {0, N, S, M, N | S, N | M, S | M, N | S | M};
  for (int rep = 0; rep < 3; ++rep)
    for (unsigned m : masks) recs.push_back(tagged("r" + std::to_string(rep) + "_" + std::to_string(m), m));
  const TestSubsets s = build_test_subsets(recs, 0);

  CHECK(ids(s.mixed) == std::vector<std::string>{"r0_7", "r1_7", "r2_7"});
  CHECK(ids(s.null) == std::vector<std::string>{"r0_0", "r1_0", "r2_0"});
  CHECK(ids(s.only_numerical) == std::vector<std::string>{"r0_1", "r1_1", "r2_1"});
  CHECK(s.residual.size() == 9);

  // Set identities over id sets: A = all with tag t.
  std::set<std::string> all, with_n, with_s, with_m;
  for (const auto& r : recs) {
    all.insert(r.id);
    if (r.tags.has(T::kNumerical)) with_n.insert(r.id);
    if (r.tags.has(T::kSpatial)) with_s.insert(r.id);
    if (r.tags.has(T::kSemantic)) with_m.insert(r.id);
  }
  auto as_set = [](const std::vector<CaptionRecord>& v) {
    std::set<std::string> out;
    for (const auto& r : v) out.insert(r.id);
    return out;
  };
  auto minus = [](std::set<std::string> a, const std::set<std::string>& b) {
    for (const auto& x : b) a.erase(x);
    return a;
  };
  auto inter = [](const std::set<std::string>& a, const std::set<std::string>& b) {
    std::set<std::string> out;
    for (const auto& x : a)
      if (b.count(x)) out.insert(x);
    return out;
  };
  auto uni = [](std::set<std::string> a, const std::set<std::string>& b) {
    a.insert(b.begin(), b.end());
    return a;
  };
  CHECK(as_set(s.only_numerical) == minus(minus(with_n, with_s), with_m));
  CHECK(as_set(s.only_spatial) == minus(minus(with_s, with_n), with_m));
  CHECK(as_set(s.only_semantic) == minus(minus(with_m, with_n), with_s));
  CHECK(as_set(s.mixed) == inter(inter(with_n, with_s), with_m));
  CHECK(as_set(s.null) == minus(all, uni(uni(with_n, with_s), with_m)));

  std::set<std::string> rebuilt;
  std::size_t total = 0;
  for (const auto& [name, members] : named_subsets(s)) {
    total += members->size();
    for (const auto& r : *members) rebuilt.insert(r.id);
  }
  CHECK(total == recs.size());  // pairwise disjoint
  CHECK(rebuilt == all);        // nothing lost
}

TEST_CASE("oversized subsets are sampled down in input order") {
  std::vector<CaptionRecord> recs;
  for (int i = 0; i < 30; ++i) recs.push_back(tagged("n" + std::to_string(100 + i), 1));
  const TestSubsets a = build_test_subsets(recs, 5, 10);
  const TestSubsets b = build_test_subsets(recs, 5, 10);
  const TestSubsets c = build_test_subsets(recs, 6, 10);
  REQUIRE(a.only_numerical.size() == 10);
  CHECK(ids(a.only_numerical) == ids(b.only_numerical));
  CHECK(ids(a.only_numerical) != ids(c.only_numerical));
  const auto kept = ids(a.only_numerical);
  CHECK(std::is_sorted(kept.begin(), kept.end()));
  CHECK(build_test_subsets(recs, 5, 200).only_numerical.size() == 30);
}

TEST_CASE("triplets") {
  testsupport::TempDir dir;
  json many = json::array();
  for (int i = 0; i < 14; ++i) many.push_back({"s" + std::to_string(i), "p", "o"});
  testsupport::write_file(dir / "t.jsonl",
                          json{{"id", "a"}, {"triplets", {{"man", "holding", "racquet"}}}}.dump() + "\n" +
                              json{{"id", "b"}, {"triplets", many}}.dump() + "\n" +
                              json{{"id", "c"},
                                   {"triplets", {{{"subject", "cat"}, {"predicate", "on"}, {"object", "mat"}}}}}
                                  .dump() +
                              "\n");
  const TripletExtractor ex(dir / "t.jsonl");
  CHECK(ex.extract("a", "A man holding a tennis racquet") ==
        std::vector<RelationTriplet>{{"man", "holding", "racquet"}});
  const auto b = ex.extract("b", "whatever");
  REQUIRE(b.size() == 10);
  CHECK(b.front().subject == "s0");
  CHECK(b.back().subject == "s9");
  CHECK(ex.extract("c", "").front() == RelationTriplet{"cat", "on", "mat"});
  // Ids missing from the sidecar use the heuristic.
  CHECK(ex.extract("zz", "a dog chasing a ball") == heuristic_triplets("a dog chasing a ball"));

  CHECK_THROWS_AS(TripletExtractor(dir / "absent.jsonl"), MissingSidecar);
  CHECK(heuristic_triplets("a photo of nothing in particular").empty());
  CHECK(TripletExtractor().extract("x", "a red bus").empty());
  CHECK(heuristic_triplets("A man holding a tennis racquet") ==
        std::vector<RelationTriplet>{{"man", "holding", "racquet"}});
  CHECK(heuristic_triplets("a cat sitting on a wooden table") ==
        std::vector<RelationTriplet>{{"cat", "sitting on", "table"}});
}

TEST_CASE("caption record output") {
  CaptionRecord r;
  r.id = "x";
  r.caption = "a dog";
  r.layout.items.push_back({"dog", {0.1, 0.2, 0.3, 0.4}});
  r.tags.add(CaptionTag::kSemantic);
  r.triplets.push_back({"dog", "on", "couch"});
  const json j = json::parse(serialize_caption_record(r));
  CHECK(j["tags"] == json::array({"semantic"}));
  CHECK(j["triplets"] == json::array({json::array({"dog", "on", "couch"})}));
  CHECK(j["items"].size() == 1);
}

TEST_CASE("COCO ingestion") {
  testsupport::TempDir dir;
  const json instances = json::parse(R"({
    "images": [{"id": 7, "width": 200, "height": 100}, {"id": 8, "width": 100, "height": 100}],
    "categories": [{"id": 1, "name": "dog"}, {"id": 2, "name": "frisbee"}],
    "annotations": [
      {"image_id": 7, "category_id": 1, "bbox": [20, 10, 100, 50], "iscrowd": 0},
      {"image_id": 7, "category_id": 2, "bbox": [150, 80, 100, 50], "iscrowd": 1},
      {"image_id": 7, "category_id": 2, "bbox": [30, 30, 0, 10], "iscrowd": 0}]})");
  const json captions = json::parse(R"({"annotations": [
      {"image_id": 7, "id": 70, "caption": " A dog catching a frisbee. "},
      {"image_id": 7, "id": 71, "caption": "dog and frisbee"},
      {"image_id": 8, "id": 80, "caption": "empty field"}]})");
  testsupport::write_file(dir / "inst.json", instances.dump());
  testsupport::write_file(dir / "caps.json", captions.dump());

  const auto recs = ingest_coco(dir / "caps.json", dir / "inst.json");
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].id == "7_70");
  CHECK(recs[0].caption == "A dog catching a frisbee.");
  REQUIRE(recs[0].layout.size() == 2);  // the zero-width box is dropped
  CHECK(recs[0].layout.items[0] == LayoutItem{"dog", {0.1, 0.1, 0.5, 0.5}});
  // Runs off the right and bottom edges: clipped to the unit square.
  CHECK(recs[0].layout.items[1].box == BoundingBox{0.75, 0.8, 1.0 - 0.75, 1.0 - 0.8});
  CHECK(recs[2].layout.empty());

  CocoIngestOptions opt;
  opt.first_caption_only = true;
  opt.skip_crowd = true;
  const auto firsts = ingest_coco(dir / "caps.json", dir / "inst.json", opt);
  REQUIRE(firsts.size() == 2);
  CHECK(firsts[0].layout.size() == 1);
}

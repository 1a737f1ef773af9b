// Caption corpora: keyword/verb tagging, the five evaluation subsets,
// relation triplets, and COCO ingestion.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "layoutplan/layout.hpp"

namespace layoutplan {

enum class CaptionTag : unsigned { kNumerical = 1, kSpatial = 2, kSemantic = 4 };

struct TagSet {
  unsigned bits = 0;

  bool has(CaptionTag t) const { return (bits & static_cast<unsigned>(t)) != 0; }
  void add(CaptionTag t) { bits |= static_cast<unsigned>(t); }
  int count() const;
  /// Tag names in fixed order: numerical, spatial, semantic.
  std::vector<std::string> names() const;

  friend bool operator==(TagSet, TagSet) = default;
};

inline constexpr std::array<std::string_view, 15> kNumeralKeywords = {
    "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "many", "bunch", "some", "several", "various", "group"};

inline constexpr std::array<std::string_view, 20> kSpatialKeywords = {
    "left", "right", "top", "down", "near", "next", "side", "above", "inside", "outside",
    "below", "front", "back", "under", "around", "bottom", "up", "beside", "beneath", "underneath"};

/// Lowercase word-boundary tokens: maximal runs of ASCII letters, digits and
/// apostrophes.
std::vector<std::string> tokenize_caption(std::string_view caption);

/// One token of an external POS analysis (coarse universal tag plus
/// dependency label, as produced by common NLP pipelines).
struct PosToken {
  std::string text;
  std::string pos;
  std::string dep;
  std::string lemma;
};

/// Notional-verb test. With `pos` available a token counts when its tag is
/// VERB, its dependency is not an auxiliary one, and its lemma is not a
/// linking verb. Without it, a closed-class lexicon plus -ing/-ed suffix
/// rules stand in for the tagger.
bool has_notional_verb(std::string_view caption, const std::vector<PosToken>* pos = nullptr);

/// Indices (into tokenize_caption) of the tokens the built-in heuristic
/// treats as notional verbs.
std::vector<std::size_t> heuristic_verb_positions(const std::vector<std::string>& tokens);

TagSet tag_caption(std::string_view caption, const std::vector<PosToken>* pos = nullptr);

struct RelationTriplet {
  std::string subject;
  std::string predicate;
  std::string object;

  friend bool operator==(const RelationTriplet&, const RelationTriplet&) = default;
};

inline constexpr std::size_t kMaxTriplets = 10;

struct CaptionRecord {
  std::string id;
  std::string caption;
  Layout layout;
  TagSet tags;
  std::vector<RelationTriplet> triplets;
};

class MissingSidecar : public std::runtime_error {
 public:
  explicit MissingSidecar(const std::filesystem::path& path)
      : std::runtime_error("sidecar file not found: " + path.string()) {}
};

/// JSON Lines keyed by record id. Triplets: `{"id", "triplets": [[s, p, o], ...]}`
/// (objects with subject/predicate/object keys are accepted too).
/// POS: `{"id", "tokens": [{"text", "pos", "dep", "lemma"}, ...]}`.
std::map<std::string, std::vector<RelationTriplet>> load_triplet_sidecar(const std::filesystem::path& path);
std::map<std::string, std::vector<PosToken>> load_pos_sidecar(const std::filesystem::path& path);

/// Sidecar first, SVO heuristic as fallback; never more than kMaxTriplets.
class TripletExtractor {
 public:
  TripletExtractor() = default;
  /// Throws MissingSidecar when the file does not exist.
  explicit TripletExtractor(const std::filesystem::path& sidecar);

  std::vector<RelationTriplet> extract(std::string_view id, std::string_view caption) const;

 private:
  std::optional<std::map<std::string, std::vector<RelationTriplet>>> sidecar_;
};

/// Naive subject-verb-object reading over the heuristic verb positions:
/// subject is the closest content word before the verb, the predicate is the
/// verb plus an immediately following preposition, the object is the head of
/// the next noun phrase.
std::vector<RelationTriplet> heuristic_triplets(std::string_view caption);

struct TestSubsets {
  std::vector<CaptionRecord> only_numerical;
  std::vector<CaptionRecord> only_spatial;
  std::vector<CaptionRecord> only_semantic;
  std::vector<CaptionRecord> mixed;
  std::vector<CaptionRecord> null;
  /// Exactly two tags: outside every subset.
  std::vector<CaptionRecord> residual;
};

inline constexpr std::size_t kSubsetCap = 200;

/// Partitions by tags already set on the records. Subsets above `cap` are
/// down-sampled uniformly (seeded), keeping input order. The residual set is
/// never capped.
TestSubsets build_test_subsets(const std::vector<CaptionRecord>& records, std::uint64_t seed,
                               std::size_t cap = kSubsetCap);

/// Names in output order, paired with the member they select.
std::vector<std::pair<std::string, const std::vector<CaptionRecord>*>> named_subsets(const TestSubsets& s);

/// Layout record line plus `"tags"` and `"triplets"` keys.
std::string serialize_caption_record(const CaptionRecord& record);
void write_caption_records(const std::filesystem::path& path, const std::vector<CaptionRecord>& records);

struct CocoIngestOptions {
  /// Keep only the first caption per image.
  bool first_caption_only = false;
  bool skip_crowd = false;
};

/// Joins a captions file and an instances file by image id. One record per
/// caption, id `<image_id>_<caption_id>`. Pixel boxes are normalized by the
/// image size and clamped; zero-area boxes are dropped and at most
/// kMaxLayoutItems are kept, in annotation order. Tags and triplets are empty.
std::vector<CaptionRecord> ingest_coco(const std::filesystem::path& captions_file,
                                       const std::filesystem::path& instances_file,
                                       const CocoIngestOptions& options = {});

}  // namespace layoutplan

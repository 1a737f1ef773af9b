#include "layoutplan/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "layoutplan/numeric.hpp"

namespace layoutplan {

using nlohmann::json;

int TagSet::count() const {
  return static_cast<int>(has(CaptionTag::kNumerical)) + static_cast<int>(has(CaptionTag::kSpatial)) +
         static_cast<int>(has(CaptionTag::kSemantic));
}

std::vector<std::string> TagSet::names() const {
  std::vector<std::string> out;
  if (has(CaptionTag::kNumerical)) out.emplace_back("numerical");
  if (has(CaptionTag::kSpatial)) out.emplace_back("spatial");
  if (has(CaptionTag::kSemantic)) out.emplace_back("semantic");
  return out;
}

std::vector<std::string> tokenize_caption(std::string_view caption) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : caption) {
    if (std::isalnum(c) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// ---- verb heuristic -------------------------------------------------------

namespace {

// Auxiliaries, modals and linking verbs: never notional.
const std::unordered_set<std::string_view> kNonNotional = {
    "be", "is", "are", "was", "were", "been", "being", "am", "'s", "'re",
    "do", "does", "did", "have", "has", "had", "having",
    "can", "could", "will", "would", "shall", "should", "may", "might", "must",
    "seem", "seems", "seemed", "become", "becomes", "became", "appear", "appears", "appeared",
    "remain", "remains", "remained",
};

// Finite forms that are unambiguous enough to count without a tagger.
// Base forms that double as common nouns ("park", "ski", "walk") are left out.
const std::unordered_set<std::string_view> kVerbLexicon = {
    "sit", "sits", "sat", "stand", "stands", "stood", "hold", "holds", "held", "ride", "rides", "rode",
    "eat", "eats", "ate", "carry", "carries", "carried", "wear", "wears", "wore", "lie", "lies", "lay", "lays",
    "throw", "throws", "threw", "catch", "catches", "caught", "hits", "swings", "swung", "jumps", "runs", "ran",
    "walks", "flies", "flew", "plays", "looks", "watches", "drives", "drove", "drinks", "drank", "reads",
    "pulls", "pushes", "holds", "sleeps", "slept", "waits", "hangs", "hung", "leans", "rests", "grazes",
    "cuts", "cooks", "takes", "took", "makes", "made", "poses", "stares", "talks", "uses", "surfs", "skates",
    "skis", "kicks", "feeds", "fed", "chases", "brushes", "prepares", "sleep", "contains", "shows",
};

// -ing / -ed words that are nouns or adjectives in caption language.
const std::unordered_set<std::string_view> kSuffixExceptions = {
    "thing", "something", "nothing", "anything", "everything", "building", "buildings", "ceiling", "clothing",
    "morning", "evening", "king", "ring", "wing", "string", "spring", "swing", "sling", "during", "icing",
    "topping", "toppings", "frosting", "railing", "railings", "living", "dining", "wedding", "painting",
    "paintings", "drawing", "pudding", "stuffing", "awning", "siding", "bedding", "lightning", "parking",
    "ping", "sibling", "ding", "bring", "sing",
    "bed", "red", "shed", "sled", "seed", "need", "feed", "speed", "weed", "breed", "hundred", "striped",
    "colored", "coloured", "crowded", "assorted", "bearded", "tiled", "haired", "aged", "naked", "wicked",
    "sacred", "wooded", "shaped", "sized", "themed", "skinned", "legged", "eyed", "tailed", "sided",
    "checkered", "flowered", "bred", "fried", "dried", "baked", "toasted", "frosted", "used",
};

bool suffix_verb(const std::string& t) {
  if (kSuffixExceptions.contains(t)) return false;
  auto ends_with = [&](std::string_view suf) {
    return t.size() >= suf.size() && std::string_view(t).substr(t.size() - suf.size()) == suf;
  };
  if (t.size() >= 5 && ends_with("ing")) return true;
  if (t.size() >= 5 && ends_with("ed")) return true;
  return false;
}

const std::unordered_set<std::string_view> kLinkingLemmas = {"be", "seem", "become", "appear", "remain"};

}  // namespace

std::vector<std::size_t> heuristic_verb_positions(const std::vector<std::string>& tokens) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (kNonNotional.contains(t)) continue;
    if (kVerbLexicon.contains(t) || suffix_verb(t)) out.push_back(i);
  }
  return out;
}

bool has_notional_verb(std::string_view caption, const std::vector<PosToken>* pos) {
  if (pos) {
    for (const auto& tok : *pos) {
      if (tok.pos != "VERB") continue;
      if (tok.dep == "aux" || tok.dep == "auxpass") continue;
      std::string lemma = tok.lemma.empty() ? tok.text : tok.lemma;
      std::transform(lemma.begin(), lemma.end(), lemma.begin(), [](unsigned char c) { return std::tolower(c); });
      if (kLinkingLemmas.contains(lemma)) continue;
      return true;
    }
    return false;
  }
  return !heuristic_verb_positions(tokenize_caption(caption)).empty();
}

TagSet tag_caption(std::string_view caption, const std::vector<PosToken>* pos) {
  TagSet tags;
  for (const auto& tok : tokenize_caption(caption)) {
    if (std::find(kNumeralKeywords.begin(), kNumeralKeywords.end(), tok) != kNumeralKeywords.end())
      tags.add(CaptionTag::kNumerical);
    if (std::find(kSpatialKeywords.begin(), kSpatialKeywords.end(), tok) != kSpatialKeywords.end())
      tags.add(CaptionTag::kSpatial);
  }
  if (has_notional_verb(caption, pos)) tags.add(CaptionTag::kSemantic);
  return tags;
}

// ---- triplets -------------------------------------------------------------

namespace {

const std::unordered_set<std::string_view> kFunctionWords = {
    "a", "an", "the", "this", "that", "these", "those", "his", "her", "its", "their", "my", "our", "your",
    "some", "and", "or", "of", "with", "is", "are", "was", "were", "be", "been", "to", "it", "there", "while",
    "very", "each", "other", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
};

const std::unordered_set<std::string_view> kPrepositions = {
    "on", "in", "at", "by", "with", "from", "into", "onto", "over", "under", "through", "across", "along",
    "against", "toward", "towards", "near", "beside", "behind", "above", "below", "up", "down", "around",
    "inside", "outside", "off", "for", "of", "to", "past", "beneath", "underneath",
};

std::vector<RelationTriplet> truncate(std::vector<RelationTriplet> v) {
  if (v.size() > kMaxTriplets) v.resize(kMaxTriplets);
  return v;
}

}  // namespace

std::vector<RelationTriplet> heuristic_triplets(std::string_view caption) {
  const auto tokens = tokenize_caption(caption);
  const auto verbs = heuristic_verb_positions(tokens);
  const std::set<std::size_t> verb_set(verbs.begin(), verbs.end());
  auto content = [&](std::size_t i) {
    return !kFunctionWords.contains(tokens[i]) && !kPrepositions.contains(tokens[i]) && !verb_set.contains(i);
  };
  std::vector<RelationTriplet> out;
  for (std::size_t v : verbs) {
    std::optional<std::size_t> subj;
    for (std::size_t i = v; i-- > 0;) {
      if (content(i)) {
        subj = i;
        break;
      }
    }
    std::string predicate = tokens[v];
    std::size_t j = v + 1;
    if (j < tokens.size() && kPrepositions.contains(tokens[j])) predicate += " " + tokens[j++];
    // Head of the next noun phrase: last content word of the first run.
    std::optional<std::size_t> obj;
    while (j < tokens.size() && !content(j)) {
      if (verb_set.contains(j) || kPrepositions.contains(tokens[j])) break;
      ++j;
    }
    while (j < tokens.size() && content(j)) obj = j++;
    if (subj && obj) out.push_back({tokens[*subj], predicate, tokens[*obj]});
  }
  return truncate(std::move(out));
}

std::map<std::string, std::vector<RelationTriplet>> load_triplet_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingSidecar(path);
  std::map<std::string, std::vector<RelationTriplet>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json doc = json::parse(line);
    std::vector<RelationTriplet> trips;
    for (const auto& t : doc.at("triplets")) {
      RelationTriplet r = t.is_array()
                              ? RelationTriplet{t.at(0).get<std::string>(), t.at(1).get<std::string>(),
                                                t.at(2).get<std::string>()}
                              : RelationTriplet{t.at("subject").get<std::string>(),
                                                t.at("predicate").get<std::string>(),
                                                t.at("object").get<std::string>()};
      if (r.subject.empty() || r.predicate.empty() || r.object.empty()) {
        throw std::runtime_error("empty triplet field in " + path.string());
      }
      trips.push_back(std::move(r));
    }
    out[doc.at("id").get<std::string>()] = truncate(std::move(trips));
  }
  return out;
}

std::map<std::string, std::vector<PosToken>> load_pos_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingSidecar(path);
  std::map<std::string, std::vector<PosToken>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json doc = json::parse(line);
    std::vector<PosToken> toks;
    for (const auto& t : doc.at("tokens")) {
      toks.push_back({t.at("text").get<std::string>(), t.at("pos").get<std::string>(), t.value("dep", ""),
                      t.value("lemma", "")});
    }
    out[doc.at("id").get<std::string>()] = std::move(toks);
  }
  return out;
}

TripletExtractor::TripletExtractor(const std::filesystem::path& sidecar)
    : sidecar_(load_triplet_sidecar(sidecar)) {}

std::vector<RelationTriplet> TripletExtractor::extract(std::string_view id, std::string_view caption) const {
  if (sidecar_) {
    auto it = sidecar_->find(std::string(id));
    if (it != sidecar_->end()) return it->second;
  }
  return heuristic_triplets(caption);
}

// ---- subsets --------------------------------------------------------------

namespace {

std::vector<CaptionRecord> cap_subset(std::vector<CaptionRecord> v, std::size_t cap, Rng& rng) {
  if (v.size() <= cap) return v;
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < cap; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  std::vector<CaptionRecord> out;
  out.reserve(cap);
  for (std::size_t i : idx) out.push_back(std::move(v[i]));
  return out;
}

}  // namespace

TestSubsets build_test_subsets(const std::vector<CaptionRecord>& records, std::uint64_t seed, std::size_t cap) {
  TestSubsets s;
  for (const auto& r : records) {
    const TagSet t = r.tags;
    switch (t.count()) {
      case 0:
        s.null.push_back(r);
        break;
      case 3:
        s.mixed.push_back(r);
        break;
      case 2:
        s.residual.push_back(r);
        break;
      default:
        if (t.has(CaptionTag::kNumerical)) s.only_numerical.push_back(r);
        else if (t.has(CaptionTag::kSpatial)) s.only_spatial.push_back(r);
        else s.only_semantic.push_back(r);
    }
  }
  // One generator, fixed subset order: sampling is reproducible per seed.
  Rng rng(seed);
  s.only_numerical = cap_subset(std::move(s.only_numerical), cap, rng);
  s.only_spatial = cap_subset(std::move(s.only_spatial), cap, rng);
  s.only_semantic = cap_subset(std::move(s.only_semantic), cap, rng);
  s.mixed = cap_subset(std::move(s.mixed), cap, rng);
  s.null = cap_subset(std::move(s.null), cap, rng);
  return s;
}

std::vector<std::pair<std::string, const std::vector<CaptionRecord>*>> named_subsets(const TestSubsets& s) {
  return {{"only_numerical", &s.only_numerical}, {"only_spatial", &s.only_spatial},
          {"only_semantic", &s.only_semantic},   {"mixed", &s.mixed},
          {"null", &s.null},                     {"residual", &s.residual}};
}

std::string serialize_caption_record(const CaptionRecord& record) {
  std::string line = serialize_layout({record.id, record.caption, record.layout});
  line.pop_back();  // closing brace
  line += ", \"tags\": ";
  line += json(record.tags.names()).dump();
  line += ", \"triplets\": [";
  for (std::size_t i = 0; i < record.triplets.size(); ++i) {
    const auto& t = record.triplets[i];
    if (i) line += ", ";
    line += json::array({t.subject, t.predicate, t.object}).dump(-1, ' ', false);
  }
  line += "]}";
  return line;
}

void write_caption_records(const std::filesystem::path& path, const std::vector<CaptionRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << serialize_caption_record(r) << '\n';
}

// ---- COCO -----------------------------------------------------------------

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

std::string label_text(std::string name) {
  // Category names are already clean; guard the record grammar anyway.
  for (char& c : name)
    if (c == '\n' || c == '\r' || c == ':') c = ' ';
  const auto b = name.find_first_not_of(' ');
  const auto e = name.find_last_not_of(' ');
  return b == std::string::npos ? std::string("object") : name.substr(b, e - b + 1);
}

}  // namespace

std::vector<CaptionRecord> ingest_coco(const std::filesystem::path& captions_file,
                                       const std::filesystem::path& instances_file,
                                       const CocoIngestOptions& options) {
  const json caps = read_json(captions_file);
  const json inst = read_json(instances_file);

  std::unordered_map<std::int64_t, std::string> categories;
  for (const auto& c : inst.at("categories")) categories[c.at("id").get<std::int64_t>()] = label_text(c.at("name"));

  struct Size {
    double w, h;
  };
  std::unordered_map<std::int64_t, Size> sizes;
  for (const json* src : {&inst, &caps}) {
    if (!src->contains("images")) continue;
    for (const auto& im : src->at("images")) {
      sizes.emplace(im.at("id").get<std::int64_t>(), Size{im.at("width").get<double>(), im.at("height").get<double>()});
    }
  }

  std::unordered_map<std::int64_t, Layout> layouts;
  for (const auto& a : inst.at("annotations")) {
    if (options.skip_crowd && a.value("iscrowd", 0) != 0) continue;
    const auto image_id = a.at("image_id").get<std::int64_t>();
    auto size = sizes.find(image_id);
    if (size == sizes.end() || size->second.w <= 0 || size->second.h <= 0) continue;
    auto& layout = layouts[image_id];
    if (layout.items.size() >= kMaxLayoutItems) continue;
    const auto& bb = a.at("bbox");
    double x = bb.at(0).get<double>() / size->second.w, y = bb.at(1).get<double>() / size->second.h;
    double w = bb.at(2).get<double>() / size->second.w, h = bb.at(3).get<double>() / size->second.h;
    x = std::clamp(x, 0.0, 1.0);
    y = std::clamp(y, 0.0, 1.0);
    w = std::min(w, 1.0 - x);
    h = std::min(h, 1.0 - y);
    if (!(w > 0.0) || !(h > 0.0)) continue;
    auto cat = categories.find(a.at("category_id").get<std::int64_t>());
    if (cat == categories.end()) throw std::runtime_error("unknown category id in " + instances_file.string());
    layout.items.push_back({cat->second, {x, y, w, h}});
  }

  std::vector<CaptionRecord> out;
  std::unordered_set<std::int64_t> seen;
  for (const auto& c : caps.at("annotations")) {
    const auto image_id = c.at("image_id").get<std::int64_t>();
    if (options.first_caption_only && !seen.insert(image_id).second) continue;
    CaptionRecord r;
    r.id = std::to_string(image_id) + "_" + std::to_string(c.at("id").get<std::int64_t>());
    r.caption = c.at("caption").get<std::string>();
    const auto b = r.caption.find_first_not_of(" \t\r\n");
    const auto e = r.caption.find_last_not_of(" \t\r\n");
    r.caption = b == std::string::npos ? std::string() : r.caption.substr(b, e - b + 1);
    if (auto it = layouts.find(image_id); it != layouts.end()) r.layout = it->second;
    r.layout.source_id = r.id;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace layoutplan

#include "layoutplan/layout.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "json.hpp"

namespace layoutplan {

std::string_view to_string(BoxConstraint c) {
  switch (c) {
    case BoxConstraint::kFinite: return "finite coordinates";
    case BoxConstraint::kXPositive: return "x>0";
    case BoxConstraint::kYPositive: return "y>0";
    case BoxConstraint::kWPositive: return "w>0";
    case BoxConstraint::kHPositive: return "h>0";
    case BoxConstraint::kRightEdge: return "x+w<1";
    case BoxConstraint::kBottomEdge: return "y+h<1";
  }
  return "unknown";
}

InvalidBox::InvalidBox(BoxConstraint which)
    : std::invalid_argument("invalid box: " + std::string(to_string(which)) + " violated"),
      which_(which) {}

BoundingBox validate_box(const BoundingBox& box, ValidationMode mode) {
  if (!std::isfinite(box.x) || !std::isfinite(box.y) || !std::isfinite(box.w) ||
      !std::isfinite(box.h)) {
    throw InvalidBox(BoxConstraint::kFinite);
  }
  if (mode == ValidationMode::kStrict) {
    if (!(box.x > 0.0)) throw InvalidBox(BoxConstraint::kXPositive);
    if (!(box.y > 0.0)) throw InvalidBox(BoxConstraint::kYPositive);
    if (!(box.w > 0.0)) throw InvalidBox(BoxConstraint::kWPositive);
    if (!(box.h > 0.0)) throw InvalidBox(BoxConstraint::kHPositive);
    if (!(box.x + box.w < 1.0)) throw InvalidBox(BoxConstraint::kRightEdge);
    if (!(box.y + box.h < 1.0)) throw InvalidBox(BoxConstraint::kBottomEdge);
    return box;
  }

  constexpr double eps = kClampEpsilon;
  // The origin stops at 1 - 2*eps so at least eps of extent survives.
  BoundingBox out;
  out.x = std::clamp(box.x, eps, 1.0 - 2.0 * eps);
  out.y = std::clamp(box.y, eps, 1.0 - 2.0 * eps);
  out.w = std::clamp(box.w, eps, 1.0 - eps - out.x);
  out.h = std::clamp(box.h, eps, 1.0 - eps - out.y);
  return out;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  // Extents are taken from corner differences everywhere so that
  // iou(a, a) reduces to A / (2A - A) == 1 in floating point.
  const double ax1 = a.x + a.w, ay1 = a.y + a.h;
  const double bx1 = b.x + b.w, by1 = b.y + b.h;
  const double area_a = (ax1 - a.x) * (ay1 - a.y);
  const double area_b = (bx1 - b.x) * (by1 - b.y);
  const double iw = std::min(ax1, bx1) - std::max(a.x, b.x);
  const double ih = std::min(ay1, by1) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool is_valid_label(std::string_view label) {
  if (label.empty()) return false;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  if (is_space(label.front()) || is_space(label.back())) return false;
  if (label.find_first_of("\r\n") != std::string_view::npos) return false;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label[i] != ':') continue;
    std::size_t j = i + 1;
    while (j < label.size() && (label[j] == ' ' || label[j] == '\t')) ++j;
    if (j < label.size() && label[j] == '[') return false;
  }
  return true;
}

std::vector<double> fourier_encode(const BoundingBox& box, const FourierConfig& cfg) {
  if (cfg.bands <= 0) throw std::invalid_argument("fourier_encode: bands must be positive");
  double coords[4];
  if (cfg.input == FourierInput::kCorners) {
    coords[0] = box.x;
    coords[1] = box.y;
    coords[2] = box.x + box.w;
    coords[3] = box.y + box.h;
  } else {
    coords[0] = box.x;
    coords[1] = box.y;
    coords[2] = box.w;
    coords[3] = box.h;
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(8 * cfg.bands));
  for (double rho : coords) {
    double freq = std::numbers::pi;
    for (int k = 0; k < cfg.bands; ++k) {
      out.push_back(std::sin(freq * rho));
      out.push_back(std::cos(freq * rho));
      freq *= 2.0;
    }
  }
  return out;
}

MalformedRecord::MalformedRecord(std::size_t line, std::string reason)
    : std::runtime_error("malformed record at line " + std::to_string(line) + ": " + reason),
      line_(line),
      reason_(std::move(reason)) {}

std::string format_coordinate(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

namespace {

std::string json_string(const std::string& s) { return nlohmann::json(s).dump(); }

constexpr double kEdgeSlack = 1e-9;

}  // namespace

std::string serialize_layout(const LayoutRecord& record) {
  std::string out = "{\"id\": ";
  out += json_string(record.id);
  out += ", \"caption\": ";
  out += json_string(record.caption);
  out += ", \"items\": [";
  bool first = true;
  for (const auto& item : record.layout.items) {
    if (!first) out += ", ";
    first = false;
    out += "{\"label\": ";
    out += json_string(item.label);
    out += ", \"box\": [";
    out += format_coordinate(item.box.x);
    out += ", ";
    out += format_coordinate(item.box.y);
    out += ", ";
    out += format_coordinate(item.box.w);
    out += ", ";
    out += format_coordinate(item.box.h);
    out += "]}";
  }
  out += "]}";
  return out;
}

LayoutRecord deserialize_layout(std::string_view text, std::size_t line_no) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedRecord(line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw MalformedRecord(line_no, "record is not an object");
  auto require = [&](const char* key) -> const nlohmann::json& {
    auto it = doc.find(key);
    if (it == doc.end()) throw MalformedRecord(line_no, std::string("missing key '") + key + "'");
    return *it;
  };
  const auto& id = require("id");
  const auto& caption = require("caption");
  const auto& items = require("items");
  if (!id.is_string()) throw MalformedRecord(line_no, "'id' must be a string");
  if (!caption.is_string()) throw MalformedRecord(line_no, "'caption' must be a string");
  if (!items.is_array()) throw MalformedRecord(line_no, "'items' must be an array");
  if (items.size() > kMaxLayoutItems) {
    throw MalformedRecord(line_no, "more than " + std::to_string(kMaxLayoutItems) + " items");
  }

  LayoutRecord rec;
  rec.id = id.get<std::string>();
  rec.caption = caption.get<std::string>();
  rec.layout.source_id = rec.id;
  rec.layout.items.reserve(items.size());
  std::size_t idx = 0;
  for (const auto& it : items) {
    const std::string where = "item " + std::to_string(idx++);
    if (!it.is_object() || !it.contains("label") || !it.contains("box")) {
      throw MalformedRecord(line_no, where + ": expected {label, box}");
    }
    const auto& label = it["label"];
    const auto& box = it["box"];
    if (!label.is_string() || !is_valid_label(label.get<std::string>())) {
      throw MalformedRecord(line_no, where + ": invalid label");
    }
    if (!box.is_array() || box.size() != 4) {
      throw MalformedRecord(line_no, where + ": box must have four numbers");
    }
    double v[4];
    for (std::size_t k = 0; k < 4; ++k) {
      if (!box[k].is_number()) throw MalformedRecord(line_no, where + ": non-numeric coordinate");
      v[k] = box[k].get<double>();
      if (!std::isfinite(v[k])) throw MalformedRecord(line_no, where + ": non-finite coordinate");
    }
    const BoundingBox b{v[0], v[1], v[2], v[3]};
    if (!(b.w > 0.0) || !(b.h > 0.0)) throw MalformedRecord(line_no, where + ": non-positive extent");
    if (b.x < 0.0 || b.y < 0.0) throw MalformedRecord(line_no, where + ": negative origin");
    if (b.x + b.w > 1.0 + kEdgeSlack || b.y + b.h > 1.0 + kEdgeSlack) {
      throw MalformedRecord(line_no, where + ": box leaves the unit square");
    }
    rec.layout.items.push_back({label.get<std::string>(), b});
  }
  return rec;
}

std::vector<LayoutRecord> read_layout_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<LayoutRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(deserialize_layout(line, line_no));
  }
  return out;
}

void write_layout_records(const std::filesystem::path& path,
                          const std::vector<LayoutRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << serialize_layout(r) << '\n';
}

}  // namespace layoutplan

#include "layoutplan/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <regex>
#include <system_error>

namespace layoutplan {

namespace {

constexpr std::string_view kInstructionHead =
    "[Instruction]. Now you are an assistant to help me design a layout given a description. "
    "Concretely, a layout denotes a set of \"object: bounding box\" items. \"object\" means any "
    "object name in the world, while \"bounding box\" is formulated as [x, y, w, h], where "
    "\"x, y\" denotes the top left coordinate of the bounding box, \"w\" denotes the width, and "
    "\"h\" denotes the height. The six values \"x, y, w, h, x+w, y+h\" are all larger than 0 and "
    "smaller than 1. ";

constexpr std::string_view kZeroShotTail =
    "Next, I will give you an input that describes an image, and then you should give me an "
    "output with the format \"\n"
    "output:\n"
    "object: [x, y, w, h],\n"
    "object: [x, y, w, h],\n"
    "...\n"
    "\".";

constexpr std::string_view kFewShotTail =
    "Next, I will give you several examples for you to understand this task.";

const std::string& zero_shot_text() {
  static const std::string s = std::string(kInstructionHead) + std::string(kZeroShotTail);
  return s;
}

const std::string& few_shot_text() {
  static const std::string s = std::string(kInstructionHead) + std::string(kFewShotTail);
  return s;
}

std::string_view trim(std::string_view s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  auto b = std::find_if(s.begin(), s.end(), not_space);
  auto e = std::find_if(s.rbegin(), s.rend(), not_space).base();
  if (b >= e) return {};
  return std::string_view(&*b, static_cast<std::size_t>(e - b));
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

bool iequals_prefix(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
  }
  return true;
}

double parse_number(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad number");
  }
  return v;
}

}  // namespace

std::string_view zero_shot_instruction() { return zero_shot_text(); }
std::string_view few_shot_instruction() { return few_shot_text(); }

std::string format_prompt_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string render_output_block(const Layout& layout) {
  std::string out;
  for (const auto& item : layout.items) {
    out += item.label;
    out += ": [";
    out += format_prompt_number(item.box.x);
    out += ", ";
    out += format_prompt_number(item.box.y);
    out += ", ";
    out += format_prompt_number(item.box.w);
    out += ", ";
    out += format_prompt_number(item.box.h);
    out += "]\n";
  }
  return out;
}

PromptBundle build_prompt(std::vector<IclExample> examples, std::string test_caption) {
  PromptBundle bundle;
  bundle.instruction = examples.empty() ? zero_shot_text() : few_shot_text();
  bundle.examples = std::move(examples);
  bundle.test_caption = std::string(trim(test_caption));
  for (auto& ex : bundle.examples) ex.caption = std::string(trim(ex.caption));
  return bundle;
}

std::string PromptBundle::render() const {
  std::string out = instruction;
  out += '\n';
  if (!examples.empty()) {
    out += "[In-context Examples].\n";
    for (const auto& ex : examples) {
      out += "input: ";
      out += ex.caption;
      out += "\noutput:\n";
      out += render_output_block(ex.layout);
      out += '\n';
    }
  }
  out += "[Test].\ninput: ";
  out += test_caption;
  out += '\n';
  return out;
}

MalformedLine::MalformedLine(std::size_t line_no, std::string text)
    : std::runtime_error("malformed layout line " + std::to_string(line_no) + ": " + text),
      line_no_(line_no),
      text_(std::move(text)) {}

Layout parse_layout_response(std::string_view text) {
  static const std::regex item_re(
      R"(^(.+?)\s*:\s*\[\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*,)"
      R"(\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*,)"
      R"(\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*,)"
      R"(\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*\]\s*,?$)");

  const auto lines = split_lines(text);
  std::size_t i = 0;
  std::string_view first_rest;
  bool found = false;
  for (; i < lines.size(); ++i) {
    auto t = trim(lines[i]);
    if (iequals_prefix(t, "output:")) {
      first_rest = trim(t.substr(7));
      found = true;
      break;
    }
  }
  if (!found) throw NoOutputMarker();

  Layout layout;
  auto consume = [&](std::string_view line, std::size_t line_no) {
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_match(line.begin(), line.end(), m, item_re)) {
      throw MalformedLine(line_no, std::string(line));
    }
    std::string label(trim(std::string_view(&*m[1].first, static_cast<std::size_t>(m[1].length()))));
    if (!is_valid_label(label)) throw MalformedLine(line_no, std::string(line));
    double v[4];
    try {
      for (int k = 0; k < 4; ++k) {
        v[k] = parse_number(std::string_view(&*m[k + 2].first, static_cast<std::size_t>(m[k + 2].length())));
      }
    } catch (const std::invalid_argument&) {
      throw MalformedLine(line_no, std::string(line));
    }
    if (layout.items.size() >= kMaxLayoutItems) throw MalformedLine(line_no, "too many items");
    BoundingBox box;
    try {
      box = validate_box({v[0], v[1], v[2], v[3]}, ValidationMode::kClamp);
    } catch (const InvalidBox&) {
      throw MalformedLine(line_no, std::string(line));
    }
    layout.items.push_back({std::move(label), box});
  };

  if (!first_rest.empty()) consume(first_rest, i + 1);
  for (std::size_t j = i + 1; j < lines.size(); ++j) {
    auto t = trim(lines[j]);
    if (t.empty()) break;
    consume(t, j + 1);
  }
  if (layout.items.empty()) throw EmptyLayout();
  return layout;
}

}  // namespace layoutplan

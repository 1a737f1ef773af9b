// In-context-learning prompt rendering and the LLM output grammar.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "layoutplan/layout.hpp"

namespace layoutplan {

/// One caption -> layout demonstration.
struct IclExample {
  std::string caption;
  Layout layout;
};

struct PromptBundle {
  std::string instruction;
  std::vector<IclExample> examples;
  std::string test_caption;

  /// Full prompt text sent as a single user message.
  std::string render() const;
};

/// Instruction text used for zero-shot prompts (ends with the output-format
/// stanza) and for prompts with at least one example.
std::string_view zero_shot_instruction();
std::string_view few_shot_instruction();

PromptBundle build_prompt(std::vector<IclExample> examples, std::string test_caption);

/// Shortest decimal text that parses back to `v`, always with a decimal
/// point: 0.0, 0.37, -0.0, 1.0.
std::string format_prompt_number(double v);

/// `<label>: [x, y, w, h]` lines, one per item, each terminated by '\n'.
std::string render_output_block(const Layout& layout);

class NoOutputMarker : public std::runtime_error {
 public:
  NoOutputMarker() : std::runtime_error("completion has no 'output:' line") {}
};

class MalformedLine : public std::runtime_error {
 public:
  MalformedLine(std::size_t line_no, std::string text);
  std::size_t line_no() const { return line_no_; }
  const std::string& text() const { return text_; }

 private:
  std::size_t line_no_;
  std::string text_;
};

class EmptyLayout : public std::runtime_error {
 public:
  EmptyLayout() : std::runtime_error("completion contains no layout items") {}
};

/// Reads the layout block of an LLM completion. Everything before the first
/// `output:` line is ignored; the block ends at the first blank line. Boxes
/// are repaired with validate_box(kClamp). Line numbers in errors are 1-based
/// over the whole text.
Layout parse_layout_response(std::string_view text);

}  // namespace layoutplan

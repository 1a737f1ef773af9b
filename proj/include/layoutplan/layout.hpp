// Layout data model: normalized boxes, labeled items, Fourier coordinate
// encoding and the JSON Lines layout record.
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace layoutplan {

/// Margin used when repairing out-of-range boxes.
inline constexpr double kClampEpsilon = 1e-4;
inline constexpr std::size_t kMaxLayoutItems = 64;

/// Box in normalized image coordinates: (x, y) is the top-left corner,
/// (w, h) the extent, all as fractions of the image size.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  double center_x() const { return x + 0.5 * w; }
  double center_y() const { return y + 0.5 * h; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

enum class BoxConstraint {
  kFinite,
  kXPositive,
  kYPositive,
  kWPositive,
  kHPositive,
  kRightEdge,   // x + w < 1
  kBottomEdge,  // y + h < 1
};

std::string_view to_string(BoxConstraint c);

class InvalidBox : public std::invalid_argument {
 public:
  explicit InvalidBox(BoxConstraint which);
  BoxConstraint which() const { return which_; }

 private:
  BoxConstraint which_;
};

enum class ValidationMode { kStrict, kClamp };

/// Strict mode returns the box unchanged when x, y, w, h > 0 and
/// x + w, y + h < 1, otherwise throws InvalidBox. Clamp mode moves the box
/// into the epsilon interior; only non-finite input is rejected.
BoundingBox validate_box(const BoundingBox& box, ValidationMode mode);

/// Intersection over union; 0 for disjoint boxes, exactly 1 for a == b.
double iou(const BoundingBox& a, const BoundingBox& b);

struct LayoutItem {
  std::string label;
  BoundingBox box;

  friend bool operator==(const LayoutItem&, const LayoutItem&) = default;
};

/// Ordered list of labeled boxes. Order is whatever the producer emitted.
struct Layout {
  std::vector<LayoutItem> items;
  std::optional<std::string> source_id;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }

  friend bool operator==(const Layout&, const Layout&) = default;
};

/// True when `label` can be carried by both the prompt grammar and the
/// record format: non-empty, already trimmed, no line breaks, and no ':'
/// followed by '['.
bool is_valid_label(std::string_view label);

enum class FourierInput {
  kXYWH,     // the stored quadruple
  kCorners,  // (x_min, y_min, x_max, y_max)
};

struct FourierConfig {
  int bands = 32;
  FourierInput input = FourierInput::kXYWH;
};

/// sin/cos of 2^k * pi * rho for k = 0..bands-1, pairs interleaved,
/// coordinate-major. Length is 8 * bands.
std::vector<double> fourier_encode(const BoundingBox& box, const FourierConfig& cfg = {});

class MalformedRecord : public std::runtime_error {
 public:
  MalformedRecord(std::size_t line, std::string reason);
  std::size_t line() const { return line_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

/// One line of a layout JSON Lines file.
struct LayoutRecord {
  std::string id;
  std::string caption;
  Layout layout;

  friend bool operator==(const LayoutRecord&, const LayoutRecord&) = default;
};

/// Fixed-point rendering with six decimals (round half to even on exact ties).
std::string format_coordinate(double v);

/// `{"id": ..., "caption": ..., "items": [{"label": ..., "box": [x, y, w, h]}]}`
/// on a single line without trailing newline. Byte-stable.
std::string serialize_layout(const LayoutRecord& record);

/// Parses one record line. Boxes must have w, h > 0, x, y >= 0 and stay
/// inside the unit square; ground-truth data routinely touches the border so
/// the strict open-interval check is not applied here.
LayoutRecord deserialize_layout(std::string_view text, std::size_t line_no = 1);

std::vector<LayoutRecord> read_layout_records(const std::filesystem::path& path);
void write_layout_records(const std::filesystem::path& path, const std::vector<LayoutRecord>& records);

}  // namespace layoutplan

// Python module _layoutplan: the layout model, prompts, metrics, the
// example-selection policy and the relation-kernel self-checks.
#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "layoutplan/commands.hpp"
#include "layoutplan/dataset.hpp"
#include "layoutplan/layout.hpp"
#include "layoutplan/metrics.hpp"
#include "layoutplan/prompt.hpp"
#include "layoutplan/relation_kernel.hpp"
#include "layoutplan/sampler.hpp"

namespace py = pybind11;
using namespace layoutplan;

namespace {

CandidatePool make_pool(const std::vector<std::vector<double>>& embeddings) {
  std::vector<Candidate> c;
  c.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) c.push_back({std::to_string(i), {}, embeddings[i]});
  return CandidatePool(std::move(c));
}

PolicyParams make_params(const std::vector<double>& weights, std::size_t latent_dim, std::size_t input_dim) {
  if (weights.size() != latent_dim * input_dim) throw py::value_error("weights must have latent_dim * input_dim entries");
  PolicyParams p;
  p.latent_dim = latent_dim;
  p.input_dim = input_dim;
  p.weights = weights;
  return p;
}

std::string box_repr(const BoundingBox& b) {
  std::ostringstream os;
  os << "BoundingBox(" << b.x << ", " << b.y << ", " << b.w << ", " << b.h << ")";
  return os.str();
}

}  // namespace

PYBIND11_MODULE(_layoutplan, m) {
  m.doc() = "LLM layout planning: layouts, prompts, metrics and the example sampler";
  m.attr("__version__") = kVersion;

  py::register_exception<InvalidBox>(m, "InvalidBox", PyExc_ValueError);
  py::register_exception<MalformedRecord>(m, "MalformedRecord", PyExc_ValueError);
  py::register_exception<NoOutputMarker>(m, "NoOutputMarker", PyExc_ValueError);
  py::register_exception<MalformedLine>(m, "MalformedLine", PyExc_ValueError);
  py::register_exception<EmptyLayout>(m, "EmptyLayout", PyExc_ValueError);

  py::class_<BoundingBox>(m, "BoundingBox")
      .def(py::init<>())
      .def(py::init([](double x, double y, double w, double h) { return BoundingBox{x, y, w, h}; }), py::arg("x"),
           py::arg("y"), py::arg("w"), py::arg("h"))
      .def_readwrite("x", &BoundingBox::x)
      .def_readwrite("y", &BoundingBox::y)
      .def_readwrite("w", &BoundingBox::w)
      .def_readwrite("h", &BoundingBox::h)
      .def("area", &BoundingBox::area)
      .def("as_tuple", [](const BoundingBox& b) { return py::make_tuple(b.x, b.y, b.w, b.h); })
      .def(py::self == py::self)
      .def("__repr__", &box_repr);

  py::class_<LayoutItem>(m, "LayoutItem")
      .def(py::init([](std::string label, BoundingBox box) { return LayoutItem{std::move(label), box}; }),
           py::arg("label"), py::arg("box"))
      .def_readwrite("label", &LayoutItem::label)
      .def_readwrite("box", &LayoutItem::box)
      .def(py::self == py::self);

  py::class_<Layout>(m, "Layout")
      .def(py::init<>())
      .def(py::init([](std::vector<LayoutItem> items) { return Layout{std::move(items), std::nullopt}; }),
           py::arg("items"))
      .def_readwrite("items", &Layout::items)
      .def_readwrite("source_id", &Layout::source_id)
      .def("__len__", &Layout::size)
      .def(py::self == py::self);

  py::class_<LayoutRecord>(m, "LayoutRecord")
      .def(py::init([](std::string id, std::string caption, Layout layout) {
             return LayoutRecord{std::move(id), std::move(caption), std::move(layout)};
           }),
           py::arg("id"), py::arg("caption"), py::arg("layout"))
      .def_readwrite("id", &LayoutRecord::id)
      .def_readwrite("caption", &LayoutRecord::caption)
      .def_readwrite("layout", &LayoutRecord::layout)
      .def(py::self == py::self);

  m.def("clamp_box", [](const BoundingBox& b) { return validate_box(b, ValidationMode::kClamp); },
        "Move a box into the open unit square (epsilon margin).");
  m.def("check_box", [](const BoundingBox& b) { return validate_box(b, ValidationMode::kStrict); },
        "Return the box unchanged or raise InvalidBox.");
  m.def("iou", &iou);
  m.def("fourier_encode", [](const BoundingBox& b, int bands) { return fourier_encode(b, {bands}); }, py::arg("box"),
        py::arg("bands") = 32);
  m.def("format_coordinate", &format_coordinate);
  m.def("serialize_layout", &serialize_layout);
  m.def("deserialize_layout", [](std::string_view line) { return deserialize_layout(line); });

  py::class_<IclExample>(m, "IclExample")
      .def(py::init([](std::string caption, Layout layout) { return IclExample{std::move(caption), std::move(layout)}; }),
           py::arg("caption"), py::arg("layout"))
      .def_readwrite("caption", &IclExample::caption)
      .def_readwrite("layout", &IclExample::layout);
  m.def("build_prompt", [](std::vector<IclExample> examples, std::string caption) {
    return build_prompt(std::move(examples), std::move(caption)).render();
  }, py::arg("examples"), py::arg("caption"), "Render the full prompt text.");
  m.def("parse_layout_response", &parse_layout_response);
  m.def("render_output_block", &render_output_block);

  py::class_<MatchPair>(m, "MatchPair")
      .def_readonly("index_a", &MatchPair::index_a)
      .def_readonly("index_b", &MatchPair::index_b)
      .def_readonly("weight", &MatchPair::weight);
  py::class_<MatchResult>(m, "MatchResult")
      .def_readonly("pairs", &MatchResult::pairs)
      .def_readonly("total", &MatchResult::total)
      .def_readonly("normalized", &MatchResult::normalized);
  m.def("max_iou", [](const Layout& a, const Layout& b) { return max_iou(a, b); });
  m.def("lay_sim", [](const Layout& a, const Layout& b) { return lay_sim(a, b); });
  m.def("max_iou_match", [](const Layout& a, const Layout& b) { return max_iou_match(a, b); });
  m.def("lay_sim_match", [](const Layout& a, const Layout& b) { return lay_sim_match(a, b); });
  m.def("match_layouts", &match_layouts, py::arg("a"), py::arg("b"), py::arg("weight"),
        "Optimal same-label matching under a Python edge-weight callable.");
  m.def("frechet_distance", [](std::vector<std::vector<double>> a, std::vector<std::vector<double>> b) {
    return frechet_distance(FeatureCloud{std::move(a)}, FeatureCloud{std::move(b)});
  });

  // The policy is exchanged as a flat row-major weight list.
  m.def("init_policy", [](std::size_t input_dim, std::size_t latent_dim, double gain, std::uint64_t seed) {
    return PolicyParams::initialize(input_dim, latent_dim, gain, seed).weights;
  }, py::arg("input_dim"), py::arg("latent_dim"), py::arg("gain"), py::arg("seed"));
  m.def("policy_probs", [](const std::vector<double>& w, std::size_t latent_dim, const std::vector<double>& query,
                           const std::vector<std::vector<double>>& pool) {
    return policy_probs(make_params(w, latent_dim, query.size()), query, make_pool(pool));
  }, py::arg("weights"), py::arg("latent_dim"), py::arg("query"), py::arg("pool"));
  m.def("sample_examples", [](const std::vector<double>& w, std::size_t latent_dim, const std::vector<double>& query,
                              const std::vector<std::vector<double>>& pool, std::size_t k, std::uint64_t seed,
                              bool with_replacement) {
    Rng rng(seed);
    return sample_examples(make_params(w, latent_dim, query.size()), query, make_pool(pool), k, rng,
                           with_replacement);
  }, py::arg("weights"), py::arg("latent_dim"), py::arg("query"), py::arg("pool"), py::arg("k"), py::arg("seed"),
        py::arg("with_replacement") = false);
  m.def("sequence_log_prob", [](const std::vector<double>& w, std::size_t latent_dim, const std::vector<double>& query,
                                const std::vector<std::vector<double>>& pool, const std::vector<std::size_t>& chosen,
                                bool with_replacement) {
    return sequence_log_prob(make_params(w, latent_dim, query.size()), query, make_pool(pool), chosen,
                             with_replacement);
  }, py::arg("weights"), py::arg("latent_dim"), py::arg("query"), py::arg("pool"), py::arg("chosen"),
        py::arg("with_replacement") = false);
  m.def("reinforce_gradient",
        [](const std::vector<double>& w, std::size_t latent_dim, const std::vector<std::vector<double>>& pool,
           const std::vector<std::tuple<std::vector<double>, std::vector<std::size_t>, double>>& episodes,
           double baseline, bool with_replacement) {
          std::vector<Episode> eps;
          for (const auto& [q, chosen, reward] : episodes) eps.push_back({q, chosen, reward});
          const std::size_t dim = pool.empty() ? 0 : pool.front().size();
          return reinforce_gradient(make_params(w, latent_dim, dim), eps, make_pool(pool), baseline, with_replacement);
        },
        py::arg("weights"), py::arg("latent_dim"), py::arg("pool"), py::arg("episodes"), py::arg("baseline") = 0.0,
        py::arg("with_replacement") = false, "episodes: [(query, chosen, reward), ...]");
  m.def("compute_reward", [](const Layout& generated, const Layout& gold) { return compute_reward(generated, gold).total; });

  m.def("tag_caption", [](std::string_view caption) { return tag_caption(caption).names(); });
  m.def("build_test_subsets", [](const std::vector<std::pair<std::string, std::string>>& captions, std::uint64_t seed,
                                 std::size_t cap) {
    std::vector<CaptionRecord> records;
    for (const auto& [id, caption] : captions) {
      CaptionRecord r;
      r.id = id;
      r.caption = caption;
      r.tags = tag_caption(caption);
      records.push_back(std::move(r));
    }
    const TestSubsets s = build_test_subsets(records, seed, cap);
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& [name, members] : named_subsets(s)) {
      auto& ids = out[name];
      for (const auto& r : *members) ids.push_back(r.id);
    }
    return out;
  }, py::arg("captions"), py::arg("seed") = 0, py::arg("cap") = kSubsetCap,
        "captions: [(id, caption), ...] -> {subset name: [ids]}");

  m.def("kernel_checks", [](std::uint64_t seed) {
    std::vector<std::tuple<std::string, bool, std::string>> out;
    for (const auto& c : run_kernel_checks(seed)) out.emplace_back(c.name, c.passed, c.detail);
    return out;
  }, py::arg("seed") = 0);
}

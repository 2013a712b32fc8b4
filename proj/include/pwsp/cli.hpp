#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pwsp/density.hpp"
#include "pwsp/error.hpp"
#include "pwsp/estimation.hpp"
#include "pwsp/geodesic.hpp"
#include "pwsp/geometry.hpp"
#include "pwsp/pathengine.hpp"
#include "pwsp/records_io.hpp"
#include "pwsp/sampling.hpp"

namespace pwsp::cli {

using nlohmann::json;

enum class Command { Sample, Spp, Geodesic, EstimateC, Converge, Diagnose };

inline const char* to_string(Command c) {
  switch (c) {
    case Command::Sample: return "sample";
    case Command::Spp: return "spp";
    case Command::Geodesic: return "geodesic";
    case Command::EstimateC: return "estimate-c";
    case Command::Converge: return "converge";
    case Command::Diagnose: return "diagnose";
  }
  return "unknown";
}

/// Config key of the command-specific block.
inline std::string block_key(Command c) {
  std::string k = to_string(c);
  for (auto& ch : k) {
    if (ch == '-') ch = '_';
  }
  return k;
}

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct DomainBlock {
  DomainKind kind = DomainKind::EuclideanBox;
  std::vector<double> sides{1.0, 1.0};
  DomainSpec spec() const { return DomainSpec(kind, sides); }
};

struct DensityBlock {
  std::string kind = "uniform";  // uniform | bump | mixture
  std::vector<Bump> bumps;
  DensityField build(const DomainSpec& d) const {
    if (kind == "uniform") return uniform_density(d);
    return bump_mixture_density(d, bumps);
  }
};

struct SampleBlock {
  std::string generator = "iid";  // iid | poisson | thinned
  std::size_t n = 1000;
  double lambda = 1000.0;
};

struct SppBlock {
  Point x, y;
  std::string mode = "pruned";
  std::size_t n = 0;
  std::string cloud_file;
  double radius_factor = 4.0;
  std::size_t exact_cap = kDefaultExactCap;
};

struct GeodesicBlock {
  Point source;
  std::optional<Point> target;
  int resolution = 256;
  bool write_field = true;
};

struct SubadditivityBlock {
  double s = 20.0;
  double t = 20.0;
  std::size_t trials = 200;
};

struct EstimateCBlock {
  std::vector<double> t_schedule{10.0, 20.0, 40.0, 80.0};
  TubeRadiusRule b_rule;
  std::size_t trials = 30;
  std::string mode = "pruned";
  std::optional<SubadditivityBlock> subadditivity;
};

struct ConvergeBlock {
  std::vector<std::size_t> n_schedule;
  std::vector<AnchorPair> anchors;
  std::size_t trials = 50;
  int resolution = 256;
  std::string mode = "pruned";
  double margin = 0.25;
};

struct CardinalityBlock {
  std::vector<std::size_t> n_schedule;
  AnchorPair anchors;
  std::size_t trials = 50;
};

struct GwBlock {
  double lambda = 1.0;
  double r0 = 1.0;
  int generations = 3;
  std::size_t trials = 10000;
};

struct TailBlock {
  std::size_t n = 10000;
  AnchorPair anchors;
  double threshold_factor = 1.0;
  std::size_t trials = 100;
};

struct ThetaBlock {
  std::size_t samples = 100000;
};

struct DiagnoseBlock {
  std::string mode = "pruned";
  double margin = 0.25;
  std::optional<CardinalityBlock> cardinality;
  std::optional<GwBlock> gw;
  std::optional<TailBlock> tail;
  std::optional<ThetaBlock> theta;
};

struct ExperimentConfig {
  Command command = Command::Sample;
  std::uint64_t seed = 0;
  std::string output_dir;
  int threads = 1;
  double p = 2.0;
  DomainBlock domain;
  DensityBlock density;
  std::optional<SampleBlock> sample;
  std::optional<SppBlock> spp;
  std::optional<GeodesicBlock> geodesic;
  std::optional<EstimateCBlock> estimate_c;
  std::optional<ConvergeBlock> converge;
  std::optional<DiagnoseBlock> diagnose;
};

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const Bump& b) { return {{"center", b.center}, {"amplitude", b.amplitude}, {"width", b.width}}; }

inline json to_json(const AnchorPair& a) { return {{"x", a.x}, {"y", a.y}}; }

inline json to_json(const DensityBlock& d) {
  if (d.kind == "uniform") return {{"kind", "uniform"}};
  if (d.kind == "bump") {
    json j = to_json(d.bumps.at(0));
    j["kind"] = "bump";
    return j;
  }
  json bumps = json::array();
  for (const auto& b : d.bumps) bumps.push_back(to_json(b));
  return {{"kind", "mixture"}, {"bumps", bumps}};
}

/// Fully resolved configuration, defaults included.
inline json to_json(const ExperimentConfig& c) {
  json j{{"command", to_string(c.command)},
         {"seed", c.seed},
         {"output_dir", c.output_dir},
         {"threads", c.threads},
         {"p", c.p},
         {"domain", {{"kind", pwsp::to_string(c.domain.kind)}, {"sides", c.domain.sides}}},
         {"density", to_json(c.density)}};
  if (c.sample) j["sample"] = {{"generator", c.sample->generator}, {"n", c.sample->n}, {"lambda", c.sample->lambda}};
  if (c.spp) {
    j["spp"] = {{"x", c.spp->x},
                {"y", c.spp->y},
                {"mode", c.spp->mode},
                {"n", c.spp->n},
                {"cloud_file", c.spp->cloud_file},
                {"radius_factor", c.spp->radius_factor},
                {"exact_cap", c.spp->exact_cap}};
  }
  if (c.geodesic) {
    j["geodesic"] = {{"source", c.geodesic->source},
                     {"target", c.geodesic->target ? json(*c.geodesic->target) : json(nullptr)},
                     {"resolution", c.geodesic->resolution},
                     {"write_field", c.geodesic->write_field}};
  }
  if (c.estimate_c) {
    const auto& e = *c.estimate_c;
    j["estimate_c"] = {{"t_schedule", e.t_schedule}, {"b_rule", e.b_rule.to_json()}, {"trials", e.trials},
                       {"mode", e.mode}};
    j["estimate_c"]["subadditivity"] =
        e.subadditivity ? json{{"s", e.subadditivity->s}, {"t", e.subadditivity->t}, {"trials", e.subadditivity->trials}}
                        : json(nullptr);
  }
  if (c.converge) {
    const auto& v = *c.converge;
    json anchors = json::array();
    for (const auto& a : v.anchors) anchors.push_back(to_json(a));
    j["converge"] = {{"n_schedule", v.n_schedule}, {"anchors", anchors}, {"trials", v.trials},
                     {"resolution", v.resolution}, {"mode", v.mode},     {"margin", v.margin}};
  }
  if (c.diagnose) {
    const auto& g = *c.diagnose;
    json b{{"mode", g.mode}, {"margin", g.margin}};
    b["cardinality"] = g.cardinality ? json{{"n_schedule", g.cardinality->n_schedule},
                                            {"anchors", to_json(g.cardinality->anchors)},
                                            {"trials", g.cardinality->trials}}
                                     : json(nullptr);
    b["gw"] = g.gw ? json{{"lambda", g.gw->lambda},
                          {"r0", g.gw->r0},
                          {"generations", g.gw->generations},
                          {"trials", g.gw->trials}}
                   : json(nullptr);
    b["tail"] = g.tail ? json{{"n", g.tail->n},
                              {"anchors", to_json(g.tail->anchors)},
                              {"threshold_factor", g.tail->threshold_factor},
                              {"trials", g.tail->trials}}
                       : json(nullptr);
    b["theta"] = g.theta ? json{{"samples", g.theta->samples}} : json(nullptr);
    j["diagnose"] = b;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Parsing with full error collection

namespace detail {

/// Reads fields of one JSON object, recording every problem instead of
/// stopping at the first, and flags keys nobody asked for.
class Reader {
 public:
  Reader(const json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (!obj_.is_object()) error("", "must be an object");
  }

  ~Reader() = default;
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  bool ok() const { return obj_.is_object(); }
  bool has(const std::string& key) const { return ok() && obj_.contains(key) && !obj_.at(key).is_null(); }
  const json& raw(const std::string& key) {
    seen_.push_back(key);
    return obj_.at(key);
  }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void error(const std::string& key, const std::string& msg) {
    errors_.push_back((key.empty() ? (path_.empty() ? std::string("config") : path_) : where(key)) + ": " + msg);
  }

  template <class T>
  void get(const std::string& key, T& out, bool required = false) {
    seen_.push_back(key);
    if (!has(key)) {
      if (required) error(key, "is required");
      return;
    }
    try {
      out = obj_.at(key).get<T>();
      check_type<T>(key, obj_.at(key));
    } catch (const json::exception&) {
      error(key, "has the wrong type");
    }
  }

  void finish() {
    if (!ok()) return;
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) error(it.key(), "unknown field");
    }
  }

 private:
  template <class T>
  void check_type(const std::string& key, const json& v) {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t> || std::is_same_v<T, int>) {
      if (!v.is_number_integer()) error(key, "must be an integer");
      else if constexpr (!std::is_same_v<T, int>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) error(key, "must be nonnegative");
      }
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) error(key, "must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) error(key, "must be a string");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) error(key, "must be true or false");
    }
  }

  const json& obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::vector<std::string> seen_;
};

inline void check_point(const Point& x, const DomainSpec* dom, const std::string& where, std::vector<std::string>& errors) {
  if (!dom || x.empty()) return;
  if (!dom->contains(x)) errors.push_back(where + ": point lies outside the domain or has the wrong dimension");
}

inline void check_mode(const std::string& mode, const std::string& where, std::vector<std::string>& errors) {
  if (mode != "pruned" && mode != "exact") errors.push_back(where + ": must be \"pruned\" or \"exact\"");
}

inline PathMode path_mode(const std::string& m) { return m == "exact" ? PathMode::Exact : PathMode::Pruned; }

inline void read_anchor_pair(const json& j, const std::string& path, AnchorPair& out, const DomainSpec* dom,
                             std::vector<std::string>& errors) {
  Reader r(j, path, errors);
  r.get("x", out.x, true);
  r.get("y", out.y, true);
  r.finish();
  check_point(out.x, dom, path + ".x", errors);
  check_point(out.y, dom, path + ".y", errors);
}

inline void read_schedule(Reader& r, const std::string& key, std::vector<std::size_t>& out) {
  r.get(key, out, true);
  if (out.empty()) r.error(key, "must list at least one n");
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] == 0) r.error(key, "entries must be positive");
    if (i && out[i] <= out[i - 1]) r.error(key, "must be strictly increasing");
  }
}

inline void positive_trials(Reader& r, std::size_t trials) {
  if (trials < 2) r.error("trials", "must be at least 2");
}

}  // namespace detail

/// Parses and validates a configuration. Throws Error(Config) listing every
/// violated field at once.
inline ExperimentConfig parse_config(const json& j) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  detail::Reader top(j, "", errors);
  if (!top.ok()) fail(ErrorKind::Config, "config must be a JSON object");

  std::string command;
  top.get("command", command, true);
  const Command all[] = {Command::Sample, Command::Spp, Command::Geodesic, Command::EstimateC, Command::Converge,
                         Command::Diagnose};
  bool known = false;
  for (auto k : all) {
    if (command == to_string(k)) {
      c.command = k;
      known = true;
    }
  }
  if (!command.empty() && !known) top.error("command", "unknown command '" + command + "'");
  top.get("seed", c.seed, true);
  top.get("output_dir", c.output_dir, true);
  if (top.has("output_dir") && c.output_dir.empty()) top.error("output_dir", "must not be empty");
  top.get("threads", c.threads);
  if (c.threads < 0) top.error("threads", "must be >= 0 (0 = all cores)");
  top.get("p", c.p);
  if (!(std::isfinite(c.p) && c.p >= 1.0)) top.error("p", "must be >= 1");

  std::optional<DomainSpec> dom;
  if (top.has("domain")) {
    detail::Reader r(top.raw("domain"), "domain", errors);
    std::string kind = "box";
    r.get("kind", kind);
    if (kind == "box") c.domain.kind = DomainKind::EuclideanBox;
    else if (kind == "torus") c.domain.kind = DomainKind::FlatTorus;
    else r.error("kind", "must be \"box\" or \"torus\"");
    r.get("sides", c.domain.sides);
    r.finish();
  }
  try {
    dom = c.domain.spec();
  } catch (const Error& e) {
    errors.push_back(std::string("domain: ") + e.what());
  }
  const DomainSpec* dptr = dom ? &*dom : nullptr;

  if (top.has("density")) {
    detail::Reader r(top.raw("density"), "density", errors);
    r.get("kind", c.density.kind, true);
    if (c.density.kind == "bump") {
      Bump b;
      r.get("center", b.center, true);
      r.get("amplitude", b.amplitude, true);
      r.get("width", b.width, true);
      c.density.bumps = {b};
    } else if (c.density.kind == "mixture") {
      if (r.has("bumps") && r.raw("bumps").is_array()) {
        const auto& arr = r.raw("bumps");
        for (std::size_t i = 0; i < arr.size(); ++i) {
          detail::Reader br(arr[i], "density.bumps[" + std::to_string(i) + "]", errors);
          Bump b;
          br.get("center", b.center, true);
          br.get("amplitude", b.amplitude, true);
          br.get("width", b.width, true);
          br.finish();
          c.density.bumps.push_back(b);
        }
        if (arr.empty()) r.error("bumps", "must list at least one bump");
      } else {
        r.error("bumps", "is required and must be an array");
      }
    } else if (c.density.kind != "uniform") {
      r.error("kind", "must be \"uniform\", \"bump\" or \"mixture\"");
    }
    r.finish();
  }
  if (dom && c.density.kind != "uniform" && !c.density.bumps.empty()) {
    try {
      c.density.build(*dom);
    } catch (const Error& e) {
      errors.push_back(std::string("density: ") + e.what());
    }
  }

  // Command blocks; only the block of the chosen command may appear.
  for (auto k : all) {
    const std::string key = block_key(k);
    if (top.has(key) && (!known || k != c.command)) top.error(key, "does not belong to command '" + command + "'");
  }
  const std::string bk = known ? block_key(c.command) : "";
  const json empty = json::object();
  const json& block = known && top.has(bk) ? top.raw(bk) : empty;
  if (known) {
    switch (c.command) {
      case Command::Sample: {
        detail::Reader r(block, bk, errors);
        SampleBlock b;
        r.get("generator", b.generator);
        r.get("n", b.n);
        r.get("lambda", b.lambda);
        if (b.generator != "iid" && b.generator != "poisson" && b.generator != "thinned") {
          r.error("generator", "must be \"iid\", \"poisson\" or \"thinned\"");
        }
        if (!(b.lambda > 0.0)) r.error("lambda", "must be positive");
        r.finish();
        c.sample = b;
        break;
      }
      case Command::Spp: {
        detail::Reader r(block, bk, errors);
        SppBlock b;
        r.get("x", b.x, true);
        r.get("y", b.y, true);
        r.get("mode", b.mode);
        r.get("n", b.n);
        r.get("cloud_file", b.cloud_file);
        r.get("radius_factor", b.radius_factor);
        r.get("exact_cap", b.exact_cap);
        detail::check_mode(b.mode, bk + ".mode", errors);
        detail::check_point(b.x, dptr, bk + ".x", errors);
        detail::check_point(b.y, dptr, bk + ".y", errors);
        if (!(b.radius_factor > 0.0)) r.error("radius_factor", "must be positive");
        if (!b.cloud_file.empty() && b.n != 0) r.error("n", "must be 0 when cloud_file is given");
        r.finish();
        c.spp = b;
        break;
      }
      case Command::Geodesic: {
        detail::Reader r(block, bk, errors);
        GeodesicBlock b;
        r.get("source", b.source, true);
        if (r.has("target")) {
          Point t;
          r.get("target", t);
          b.target = t;
          detail::check_point(t, dptr, bk + ".target", errors);
        } else {
          r.get("target", b.source);  // mark as seen
        }
        r.get("resolution", b.resolution);
        r.get("write_field", b.write_field);
        detail::check_point(b.source, dptr, bk + ".source", errors);
        if (b.resolution < kMinGridResolution) r.error("resolution", "must be at least 8");
        if (dptr && dptr->dim() > 3) r.error("", "grids are limited to d = 2 or 3");
        r.finish();
        c.geodesic = b;
        break;
      }
      case Command::EstimateC: {
        detail::Reader r(block, bk, errors);
        EstimateCBlock b;
        r.get("t_schedule", b.t_schedule);
        r.get("trials", b.trials);
        r.get("mode", b.mode);
        detail::check_mode(b.mode, bk + ".mode", errors);
        detail::positive_trials(r, b.trials);
        if (b.t_schedule.empty()) r.error("t_schedule", "must not be empty");
        for (std::size_t i = 0; i < b.t_schedule.size(); ++i) {
          if (!(b.t_schedule[i] > 0.0)) r.error("t_schedule", "entries must be positive");
          if (i && b.t_schedule[i] <= b.t_schedule[i - 1]) r.error("t_schedule", "must be strictly increasing");
        }
        if (r.has("b_rule")) {
          detail::Reader br(r.raw("b_rule"), bk + ".b_rule", errors);
          std::string rule = "power";
          br.get("rule", rule);
          br.get("coefficient", b.b_rule.coefficient);
          if (rule == "power") {
            br.get("exponent", b.b_rule.exponent);
            if (!(b.b_rule.exponent > 0.0)) br.error("exponent", "must be positive so that b_t grows without bound");
          } else if (rule == "log") {
            b.b_rule.kind = TubeRadiusRule::Kind::Log;
          } else {
            br.error("rule", "must be \"power\" or \"log\"");
          }
          if (!(b.b_rule.coefficient > 0.0)) br.error("coefficient", "must be positive");
          br.finish();
        } else {
          r.get("b_rule", b.t_schedule);  // mark as seen
        }
        if (r.has("subadditivity")) {
          detail::Reader sr(r.raw("subadditivity"), bk + ".subadditivity", errors);
          SubadditivityBlock s;
          sr.get("s", s.s);
          sr.get("t", s.t);
          sr.get("trials", s.trials);
          if (!(s.s > 0.0)) sr.error("s", "must be positive");
          if (!(s.t > 0.0)) sr.error("t", "must be positive");
          detail::positive_trials(sr, s.trials);
          sr.finish();
          b.subadditivity = s;
        } else {
          r.get("subadditivity", b.t_schedule);  // mark as seen
        }
        r.finish();
        c.estimate_c = b;
        break;
      }
      case Command::Converge: {
        detail::Reader r(block, bk, errors);
        ConvergeBlock b;
        detail::read_schedule(r, "n_schedule", b.n_schedule);
        r.get("trials", b.trials);
        r.get("resolution", b.resolution);
        r.get("mode", b.mode);
        r.get("margin", b.margin);
        detail::check_mode(b.mode, bk + ".mode", errors);
        detail::positive_trials(r, b.trials);
        if (b.resolution < kMinGridResolution) r.error("resolution", "must be at least 8");
        if (!(b.margin >= 0.0 && b.margin < 0.5)) r.error("margin", "must lie in [0, 0.5)");
        if (r.has("anchors") && r.raw("anchors").is_array() && !r.raw("anchors").empty()) {
          const auto& arr = r.raw("anchors");
          for (std::size_t i = 0; i < arr.size(); ++i) {
            AnchorPair a;
            detail::read_anchor_pair(arr[i], bk + ".anchors[" + std::to_string(i) + "]", a, dptr, errors);
            if (dptr && dptr->contains(a.x) && dptr->contains(a.y) &&
                !(dptr->respects_margin(a.x, b.margin) && dptr->respects_margin(a.y, b.margin))) {
              errors.push_back(bk + ".anchors[" + std::to_string(i) + "]: anchors violate the boundary margin");
            }
            b.anchors.push_back(a);
          }
        } else {
          r.error("anchors", "is required and must be a nonempty array of {x, y}");
        }
        r.finish();
        c.converge = b;
        break;
      }
      case Command::Diagnose: {
        detail::Reader r(block, bk, errors);
        DiagnoseBlock b;
        r.get("mode", b.mode);
        r.get("margin", b.margin);
        detail::check_mode(b.mode, bk + ".mode", errors);
        if (!(b.margin >= 0.0 && b.margin < 0.5)) r.error("margin", "must lie in [0, 0.5)");
        auto margin_ok = [&](const AnchorPair& a, const std::string& where) {
          if (dptr && dptr->contains(a.x) && dptr->contains(a.y) &&
              !(dptr->respects_margin(a.x, b.margin) && dptr->respects_margin(a.y, b.margin))) {
            errors.push_back(where + ": anchors violate the boundary margin");
          }
        };
        if (r.has("cardinality")) {
          detail::Reader s(r.raw("cardinality"), bk + ".cardinality", errors);
          CardinalityBlock cb;
          detail::read_schedule(s, "n_schedule", cb.n_schedule);
          if (cb.n_schedule.size() < 2) s.error("n_schedule", "needs at least two values");
          if (s.has("anchors")) detail::read_anchor_pair(s.raw("anchors"), bk + ".cardinality.anchors", cb.anchors, dptr, errors);
          else s.error("anchors", "is required");
          margin_ok(cb.anchors, bk + ".cardinality.anchors");
          s.get("trials", cb.trials);
          detail::positive_trials(s, cb.trials);
          if (c.density.kind != "uniform") s.error("", "cardinality scaling needs a uniform density");
          s.finish();
          b.cardinality = cb;
        } else {
          r.get("cardinality", b.mode);
        }
        if (r.has("gw")) {
          detail::Reader s(r.raw("gw"), bk + ".gw", errors);
          GwBlock g;
          s.get("lambda", g.lambda);
          s.get("r0", g.r0);
          s.get("generations", g.generations);
          s.get("trials", g.trials);
          if (!(g.lambda > 0.0)) s.error("lambda", "must be positive");
          if (!(g.r0 >= 0.0)) s.error("r0", "must be nonnegative");
          if (g.generations < 1) s.error("generations", "must be at least 1");
          detail::positive_trials(s, g.trials);
          s.finish();
          b.gw = g;
        } else {
          r.get("gw", b.mode);
        }
        if (r.has("tail")) {
          detail::Reader s(r.raw("tail"), bk + ".tail", errors);
          TailBlock t;
          s.get("n", t.n);
          if (s.has("anchors")) detail::read_anchor_pair(s.raw("anchors"), bk + ".tail.anchors", t.anchors, dptr, errors);
          else s.error("anchors", "is required");
          margin_ok(t.anchors, bk + ".tail.anchors");
          s.get("threshold_factor", t.threshold_factor);
          s.get("trials", t.trials);
          if (!(t.threshold_factor > 0.0)) s.error("threshold_factor", "must be positive");
          if (t.n == 0) s.error("n", "must be positive");
          detail::positive_trials(s, t.trials);
          s.finish();
          b.tail = t;
        } else {
          r.get("tail", b.mode);
        }
        if (r.has("theta")) {
          detail::Reader s(r.raw("theta"), bk + ".theta", errors);
          ThetaBlock t;
          s.get("samples", t.samples);
          if (t.samples < 2) s.error("samples", "must be at least 2");
          s.finish();
          b.theta = t;
        } else {
          r.get("theta", b.mode);
        }
        if (!b.cardinality && !b.gw && !b.tail && !b.theta) r.error("", "needs at least one of cardinality, gw, tail, theta");
        r.finish();
        c.diagnose = b;
        break;
      }
    }
  }
  top.finish();
  if (!errors.empty()) {
    std::string msg = std::to_string(errors.size()) + " configuration problem(s):";
    for (const auto& e : errors) msg += "\n  " + e;
    fail(ErrorKind::Config, msg);
  }
  return c;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Config, "cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, "config file " + path + " is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Running

namespace detail {

class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& path() const { return dir_; }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot create " + (dir_ / name).string());
    out << content;
    require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + (dir_ / name).string());
    files_.push_back(name);
  }

  template <class Fn>
  void write_with(const std::string& name, Fn&& fn) {
    std::ostringstream os;
    fn(os);
    write(name, os.str());
  }

  void note(const std::string& name) { files_.push_back(name); }
  std::vector<std::string> files() const {
    auto f = files_;
    std::sort(f.begin(), f.end());
    return f;
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline void write_records(OutputDir& out, const std::vector<EstimateRecord>& recs, int d, double p, std::uint64_t seed) {
  if (recs.empty()) return;
  out.write_with(record_file_name(recs.front().quantity, d, p, seed), [&](std::ostream& os) { write_records_csv(os, recs); });
}

inline std::string fmt(double v) { return format_number(v); }

inline PointCloud make_cloud(const ExperimentConfig& c, const DomainSpec& dom, const DensityField& f) {
  const auto& b = *c.sample;
  if (b.generator == "iid") return sample_iid(f, dom, b.n, c.seed);
  const auto base = sample_poisson(b.lambda, dom, c.seed);
  if (b.generator == "poisson") return base;
  return thin(base, f, f.inf_bound(), c.seed, 1);
}

inline void run_sample(const ExperimentConfig& c, OutputDir& out, std::ostream& summary) {
  const auto dom = c.domain.spec();
  const auto f = c.density.build(dom);
  const auto cloud = make_cloud(c, dom, f);
  out.write_with("cloud.csv", [&](std::ostream& os) { write_cloud_csv(os, cloud); });
  summary << "generator " << c.sample->generator << ", " << cloud.size() << " points\n";
}

inline void run_spp(const ExperimentConfig& c, OutputDir& out, std::ostream& summary) {
  const auto dom = c.domain.spec();
  const auto f = c.density.build(dom);
  const auto& b = *c.spp;
  PointCloud cloud = PointCloud::empty(dom, c.seed);
  if (!b.cloud_file.empty()) {
    std::ifstream in(b.cloud_file);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open cloud file " + b.cloud_file);
    cloud = read_cloud_csv(in, dom);
  } else if (b.n > 0) {
    cloud = sample_iid(f, dom, b.n, c.seed);
  }
  PathQuery q;
  q.x = b.x;
  q.y = b.y;
  q.p = c.p;
  q.cloud = &cloud;
  q.mode = path_mode(b.mode);
  q.radius_factor = b.radius_factor;
  q.exact_cap = b.exact_cap;
  const auto r = shortest_path(q);
  json j = pwsp::to_json(q, r);
  j["node_indices"] = r.node_sequence;
  j["stats"] = {{"settled", r.stats.settled},
                {"relaxations", r.stats.relaxations},
                {"ring_expansions", r.stats.ring_expansions},
                {"max_ring", r.stats.max_ring},
                {"diameter_fallback", r.stats.diameter_fallback}};
  j["cloud_size"] = cloud.size();
  out.write("path.json", j.dump(2) + "\n");
  summary << "L = " << fmt(r.length) << ", #L = " << r.cardinality << ", certificate " << pwsp::to_string(r.certificate)
          << "\n";
}

inline void run_geodesic(const ExperimentConfig& c, OutputDir& out, std::ostream& summary) {
  const auto dom = c.domain.spec();
  const auto f = c.density.build(dom);
  const ConformalParams params(c.p, dom.dim());
  const auto& b = *c.geodesic;
  if (b.write_field) {
    const auto field = solve_eikonal(build_cost_grid(dom, f, params, b.resolution), b.source);
    write_distance_field(field, (out.path() / "field.bin").string(), (out.path() / "field.json").string());
    out.note("field.bin");
    out.note("field.json");
    summary << "distance field " << b.resolution << "^" << dom.dim() << " written\n";
  }
  if (b.target) {
    const auto r = dist_p(dom, f, params, b.source, *b.target, b.resolution);
    const auto [lo, hi] = dist_p_bounds(dom, f, params, b.source, *b.target);
    json j{{"value", r.value},
           {"error_estimate", r.error_estimate},
           {"coarse_value", r.coarse_value},
           {"refinement_warning", r.refinement_warning},
           {"closed_form", r.closed_form},
           {"lower_bound", lo},
           {"upper_bound", hi},
           {"source", b.source},
           {"target", *b.target},
           {"resolution", b.resolution}};
    out.write("dist_p.json", j.dump(2) + "\n");
    summary << "dist_p = " << fmt(r.value) << " +- " << fmt(r.error_estimate)
            << (r.refinement_warning ? " (refinement warning)" : "") << "\n";
  }
}

inline void run_estimate_c(const ExperimentConfig& c, OutputDir& out, std::ostream& summary) {
  const auto& b = *c.estimate_c;
  TubeEstimatorConfig cfg;
  cfg.d = static_cast<int>(c.domain.sides.size());
  cfg.p = c.p;
  cfg.t_schedule = b.t_schedule;
  cfg.b_rule = b.b_rule;
  cfg.trials = b.trials;
  cfg.mode = path_mode(b.mode);
  cfg.threads = c.threads;
  const auto est = estimate_C(cfg, c.seed);
  std::vector<EstimateRecord> cdp{est.cdp};
  if (est.extrapolated) cdp.push_back(*est.extrapolated);
  write_records(out, est.curve, cfg.d, cfg.p, c.seed);
  write_records(out, cdp, cfg.d, cfg.p, c.seed);
  out.write_with("plot_MeanCurvePoint.dat", [&](std::ostream& os) { emit_plotdata(os, est.curve, Quantity::MeanCurvePoint); });

  CsvTable trials;
  trials.columns = {"t", "trial", "length", "ratio", "points", "cardinality", "first_edge", "last_edge"};
  for (std::size_t k = 0; k < est.trials.size(); ++k) {
    for (std::size_t i = 0; i < est.trials[k].size(); ++i) {
      const auto& r = est.trials[k][i];
      trials.rows.push_back({b.t_schedule[k], i, r.length, r.length / r.segment, r.points, r.cardinality, r.first_edge,
                             r.last_edge});
    }
  }
  out.write_with("tube_trials_" + std::to_string(cfg.d) + "_" + fmt(cfg.p) + "_" + std::to_string(c.seed) + ".csv",
                 [&](std::ostream& os) { trials.write(os); });
  std::vector<EstimateRecord> all = est.curve;
  all.insert(all.end(), cdp.begin(), cdp.end());
  for (const auto& r : est.curve) {
    summary << "t = " << fmt(r.params.at("t").get<double>()) << ": mean L/t = " << fmt(r.value) << " +- " << fmt(r.std_err)
            << (r.params.at("pre_asymptotic").get<bool>() ? " (pre-asymptotic)" : "") << "\n";
  }
  summary << "C(" << cfg.d << "," << fmt(cfg.p) << ") ~ " << fmt(est.cdp.value) << " +- " << fmt(est.cdp.std_err);
  if (est.extrapolated) summary << "; 1/t extrapolation " << fmt(est.extrapolated->value) << " +- " << fmt(est.extrapolated->std_err);
  summary << "\n";
  if (b.subadditivity) {
    const auto s = subadditivity_check(cfg, b.subadditivity->s, b.subadditivity->t, b.subadditivity->trials, c.seed);
    write_records(out, {s}, cfg.d, cfg.p, c.seed);
    all.push_back(s);
    summary << "subadditivity gap " << fmt(s.value) << " +- " << fmt(s.std_err) << " (holds: "
            << (s.params.at("holds").get<bool>() ? "yes" : "no") << ")\n";
  }
  out.write_with("records.jsonl", [&](std::ostream& os) { write_records_jsonl(os, all); });
}

inline void run_converge(const ExperimentConfig& c, OutputDir& out, std::ostream& summary) {
  const auto dom = c.domain.spec();
  const auto f = c.density.build(dom);
  const ConformalParams params(c.p, dom.dim());
  const auto& b = *c.converge;
  ExperimentOptions opt;
  opt.resolution = b.resolution;
  opt.mode = path_mode(b.mode);
  opt.threads = c.threads;
  opt.margin_fraction = b.margin;
  const auto res = convergence_experiment(dom, f, params, b.n_schedule, b.anchors, b.trials, c.seed, opt);
  write_records(out, res.records, dom.dim(), c.p, c.seed);
  out.write_with("records.jsonl", [&](std::ostream& os) { write_records_jsonl(os, res.records); });
  CsvTable rows;
  rows.columns = {"n", "pair", "trial", "length", "ratio", "cardinality", "max_edge", "certificate"};
  for (const auto& r : res.rows) {
    rows.rows.push_back({r.n, r.pair, r.trial, r.length, r.ratio, r.cardinality, r.max_edge, pwsp::to_string(r.certificate)});
  }
  out.write_with("converge_trials_" + std::to_string(dom.dim()) + "_" + fmt(c.p) + "_" + std::to_string(c.seed) + ".csv",
                 [&](std::ostream& os) { rows.write(os); });
  for (std::size_t k = 0; k < b.anchors.size(); ++k) {
    std::vector<EstimateRecord> mine;
    for (const auto& r : res.records) {
      if (r.params.at("pair").get<std::size_t>() == k) mine.push_back(r);
    }
    out.write_with("plot_ConvergenceRatio_pair" + std::to_string(k) + ".dat",
                   [&](std::ostream& os) { emit_plotdata(os, mine, Quantity::ConvergenceRatio, "n"); });
  }
  for (const auto& r : res.records) {
    summary << "n = " << r.params.at("n") << ", pair " << r.params.at("pair") << ": ratio " << fmt(r.value) << " +- "
            << fmt(r.std_err) << (r.params.at("dist_p_refinement_warning").get<bool>() ? " (dist_p refinement warning)" : "")
            << "\n";
  }
}

inline void run_diagnose(const ExperimentConfig& c, OutputDir& out, std::ostream& summary) {
  const auto dom = c.domain.spec();
  const auto f = c.density.build(dom);
  const ConformalParams params(c.p, dom.dim());
  const auto& b = *c.diagnose;
  ExperimentOptions opt;
  opt.mode = path_mode(b.mode);
  opt.threads = c.threads;
  opt.margin_fraction = b.margin;
  std::vector<EstimateRecord> all;
  if (b.cardinality) {
    const auto r = cardinality_scaling(dom, f, params, b.cardinality->n_schedule, b.cardinality->anchors,
                                       b.cardinality->trials, c.seed, opt);
    write_records(out, {r.slope}, dom.dim(), c.p, c.seed);
    write_records(out, r.per_n, dom.dim(), c.p, c.seed);
    out.write_with("plot_normalized_cardinality.dat",
                   [&](std::ostream& os) { emit_plotdata(os, r.per_n, Quantity::MeanCurvePoint, "n"); });
    CsvTable rows;
    rows.columns = {"n", "trial", "cardinality", "normalized"};
    for (const auto& t : r.rows) rows.rows.push_back({t.n, t.trial, t.cardinality, t.normalized});
    out.write_with("cardinality_trials_" + std::to_string(dom.dim()) + "_" + fmt(c.p) + "_" + std::to_string(c.seed) + ".csv",
                   [&](std::ostream& os) { rows.write(os); });
    all.push_back(r.slope);
    all.insert(all.end(), r.per_n.begin(), r.per_n.end());
    summary << "normalized cardinality slope " << fmt(r.slope.value) << " +- " << fmt(r.slope.std_err)
            << ", C_* estimate " << fmt(r.slope.params.at("c_star_estimate").get<double>()) << "\n";
  }
  if (b.gw) {
    const auto recs = gw_generation_mean(b.gw->lambda, b.gw->r0, params, b.gw->generations, b.gw->trials, c.seed, c.threads);
    write_records(out, recs, dom.dim(), c.p, c.seed);
    out.write_with("plot_GWGenMean.dat", [&](std::ostream& os) { emit_plotdata(os, recs, Quantity::GWGenMean); });
    all.insert(all.end(), recs.begin(), recs.end());
    for (const auto& r : recs) {
      summary << "generation " << r.params.at("generation") << ": mean " << fmt(r.value) << " +- " << fmt(r.std_err)
              << ", bound " << fmt(r.params.at("analytic_bound").get<double>()) << "\n";
    }
  }
  if (b.tail) {
    const auto r = link_tail_frequency(dom, f, params, b.tail->n, b.tail->anchors, b.tail->threshold_factor,
                                       b.tail->trials, c.seed, opt);
    write_records(out, {r}, dom.dim(), c.p, c.seed);
    all.push_back(r);
    summary << "long-link frequency " << fmt(r.value) << " +- " << fmt(r.std_err) << "\n";
  }
  if (b.theta) {
    const auto s = theta_region_volume(c.p, dom.dim(), b.theta->samples, c.seed);
    json j{{"d", dom.dim()}, {"p", c.p}, {"samples", b.theta->samples}, {"volume", s.mean}, {"stderr", s.std_err},
           {"seed", c.seed}};
    out.write("theta_region.json", j.dump(2) + "\n");
    summary << "domination region volume " << fmt(s.mean) << " +- " << fmt(s.std_err) << "\n";
  }
  out.write_with("records.jsonl", [&](std::ostream& os) { write_records_jsonl(os, all); });
}

}  // namespace detail

/// Machine-readable failure description.
inline json error_record(ErrorKind kind, const std::string& message, int exit_code) {
  return {{"status", "error"}, {"kind", pwsp::to_string(kind)}, {"message", message}, {"exit_code", exit_code}};
}

namespace detail {

// Drops partial results, prints the record and leaves error.json in the
// output directory unless that directory already held something.
inline int report_failure(const std::filesystem::path& target, const std::filesystem::path& tmp, const json& record,
                          std::ostream& err) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::remove_all(tmp, ec);
  err << record.dump() << "\n";
  if (!fs::exists(target, ec) || (fs::is_directory(target, ec) && fs::is_empty(target, ec))) {
    fs::create_directories(target, ec);
    std::ofstream out(target / "error.json");
    out << record.dump(2) << "\n";
  }
  return record.at("exit_code").get<int>();
}

}  // namespace detail

/// Runs one experiment. Results are written to a sibling temp directory
/// and renamed onto output_dir only on success; output_dir must be absent
/// or empty. Returns the exit status; failures print an error record to `err`.
inline int run(const ExperimentConfig& c, std::ostream& log, std::ostream& err) {
  namespace fs = std::filesystem;
  const fs::path target(c.output_dir);
  fs::path tmp = target;
  tmp += ".partial";
  try {
    if (fs::exists(target)) {
      require(fs::is_directory(target) && fs::is_empty(target), ErrorKind::Io,
              "output directory " + target.string() + " exists and is not empty");
    }
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    detail::OutputDir out(tmp);
    std::ostringstream summary;
    summary << "command " << to_string(c.command) << ", seed " << c.seed << "\n";
    switch (c.command) {
      case Command::Sample: detail::run_sample(c, out, summary); break;
      case Command::Spp: detail::run_spp(c, out, summary); break;
      case Command::Geodesic: detail::run_geodesic(c, out, summary); break;
      case Command::EstimateC: detail::run_estimate_c(c, out, summary); break;
      case Command::Converge: detail::run_converge(c, out, summary); break;
      case Command::Diagnose: detail::run_diagnose(c, out, summary); break;
    }
    out.write("summary.txt", summary.str());
    auto files = out.files();
    files.push_back("manifest.json");
    std::sort(files.begin(), files.end());
    const json manifest{{"tool", "pwsp"},
                        {"command", to_string(c.command)},
                        {"seed", c.seed},
                        {"created_utc", detail::utc_timestamp()},
                        {"resolved_config", to_json(c)},
                        {"files", files}};
    out.write("manifest.json", manifest.dump(2) + "\n");
    if (fs::exists(target)) fs::remove(target);
    fs::rename(tmp, target);
    log << summary.str();
    return kExitOk;
  } catch (const Error& e) {
    const int code = e.kind() == ErrorKind::Config ? kExitConfig : kExitRuntime;
    return detail::report_failure(target, tmp, error_record(e.kind(), e.what(), code), err);
  } catch (const std::exception& e) {
    return detail::report_failure(target, tmp, error_record(ErrorKind::Io, e.what(), kExitRuntime), err);
  }
}

}  // namespace pwsp::cli

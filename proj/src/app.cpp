#include "reachcert/app.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "reachcert/certify.hpp"
#include "reachcert/fvi.hpp"
#include "reachcert/oracle.hpp"

namespace reachcert::app {

using nlohmann::json;
namespace fs = std::filesystem;

ConfigError::ConfigError(const std::string& message, int line, std::string pointer)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + " (" + pointer + "): " + message
                                  : pointer + ": " + message),
      line_(line),
      pointer_(std::move(pointer)) {}

namespace {

// ---------------------------------------------------------------------------
// Source lines of every JSON value, keyed by JSON pointer. Runs on text that
// already parsed, so it only needs to track structure.

class LineIndex {
 public:
  explicit LineIndex(const std::string& text) : text_(text) {
    skip_ws();
    value("");
  }

  // Line of the pointer, or of its closest recorded ancestor.
  int line(std::string pointer) const {
    while (true) {
      auto it = lines_.find(pointer);
      if (it != lines_.end()) return it->second;
      if (pointer.empty()) return 0;
      pointer.erase(pointer.rfind('/'));
    }
  }

 private:
  static std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) {
      if (c == '~') {
        out += "~0";
      } else if (c == '/') {
        out += "~1";
      } else {
        out += c;
      }
    }
    return out;
  }

  void advance() {
    if (text_[pos_] == '\n') ++line_;
    ++pos_;
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) advance();
  }

  std::string string_token() {
    std::string out;
    advance();  // opening quote
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\') {
        advance();
      }
      out += text_[pos_];
      advance();
    }
    advance();
    return out;
  }

  void value(const std::string& pointer) {
    lines_.emplace(pointer, line_);
    if (pos_ >= text_.size()) return;
    const char c = text_[pos_];
    if (c == '{') {
      advance();
      skip_ws();
      while (pos_ < text_.size() && text_[pos_] != '}') {
        const std::string key = string_token();
        const std::string child = pointer + "/" + escape(key);
        const int key_line = line_;
        skip_ws();
        advance();  // colon
        skip_ws();
        value(child);
        lines_[child] = key_line;
        skip_ws();
        if (text_[pos_] == ',') {
          advance();
          skip_ws();
        }
      }
      advance();
    } else if (c == '[') {
      advance();
      skip_ws();
      std::size_t index = 0;
      while (pos_ < text_.size() && text_[pos_] != ']') {
        value(pointer + "/" + std::to_string(index++));
        skip_ws();
        if (text_[pos_] == ',') {
          advance();
          skip_ws();
        }
      }
      advance();
    } else if (c == '"') {
      string_token();
    } else {
      while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != ',' &&
             text_[pos_] != '}' && text_[pos_] != ']') {
        advance();
      }
    }
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

// Typed access to one JSON object with schema errors located by line.
class Section {
 public:
  Section(const json& node, std::string pointer, const LineIndex& lines)
      : node_(node), pointer_(std::move(pointer)), lines_(lines) {
    if (!node_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& message, const std::string& key = "") const {
    const std::string p = key.empty() ? pointer_ : pointer_ + "/" + key;
    throw ConfigError(message, lines_.line(p), p.empty() ? "/" : p);
  }

  void allow(std::initializer_list<const char*> keys) const {
    for (const auto& [key, _] : node_.items()) {
      bool known = false;
      for (const char* k : keys) known = known || key == k;
      if (!known) fail("unknown key", key);
    }
  }

  bool has(const char* key) const { return node_.contains(key) && !node_.at(key).is_null(); }

  Section child(const char* key) const {
    if (!node_.contains(key)) fail(std::string("missing section \"") + key + "\"");
    return Section(node_.at(key), pointer_ + "/" + key, lines_);
  }

  double number(const char* key, std::optional<double> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      fail(std::string("missing required number \"") + key + "\"");
    }
    const auto& v = node_.at(key);
    if (!v.is_number()) fail("expected a number", key);
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail("expected a finite number", key);
    return d;
  }

  std::uint64_t integer(const char* key, std::optional<std::uint64_t> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      fail(std::string("missing required integer \"") + key + "\"");
    }
    const auto& v = node_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
      if (v.get<std::int64_t>() < 0) fail("expected a nonnegative integer", key);
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    fail("expected a nonnegative integer", key);
  }

  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!node_.at(key).is_boolean()) fail("expected true or false", key);
    return node_.at(key).get<bool>();
  }

  std::vector<double> vector(const char* key) const {
    if (!has(key)) fail(std::string("missing required array \"") + key + "\"");
    return vector_at(node_.at(key), pointer_ + "/" + key);
  }

  std::vector<std::vector<double>> matrix(const char* key) const {
    if (!has(key)) fail(std::string("missing required array \"") + key + "\"");
    const auto& v = node_.at(key);
    const std::string p = pointer_ + "/" + key;
    if (!v.is_array() || v.empty()) fail("expected a nonempty array of arrays", key);
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(vector_at(v[i], p + "/" + std::to_string(i)));
    return out;
  }

  std::vector<std::string> strings(const char* key) const {
    const auto& v = node_.at(key);
    if (!v.is_array()) fail("expected an array of strings", key);
    std::vector<std::string> out;
    for (const auto& s : v) {
      if (!s.is_string()) fail("expected an array of strings", key);
      out.push_back(s.get<std::string>());
    }
    return out;
  }

  std::string string(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!node_.at(key).is_string()) fail("expected a string", key);
    return node_.at(key).get<std::string>();
  }

  BoxSet box(const char* key) const {
    const Section s = child(key);
    s.allow({"lower", "upper"});
    try {
      return BoxSet(s.vector("lower"), s.vector("upper"));
    } catch (const std::invalid_argument& e) {
      fail(e.what(), key);
    }
  }

 private:
  std::vector<double> vector_at(const json& v, const std::string& p) const {
    if (!v.is_array() || v.empty()) throw ConfigError("expected a nonempty array of numbers", lines_.line(p), p);
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError("expected a nonempty array of numbers", lines_.line(p), p);
      out.push_back(x.get<double>());
    }
    return out;
  }

  const json& node_;
  std::string pointer_;
  const LineIndex& lines_;
};

std::size_t positive(const Section& s, const char* key, std::uint64_t fallback) {
  const auto v = s.integer(key, fallback);
  if (v < 1) s.fail("must be >= 1", key);
  return static_cast<std::size_t>(v);
}

void parse_model(const Section& s, ModelSection& m) {
  m.type = s.string("type", "thermal");
  if (m.type == "thermal") {
    s.allow({"type", "params"});
    if (s.has("params")) {
      const Section p = s.child("params");
      p.allow({"x_a", "b1", "b2", "a_ex", "c1", "c2", "nu"});
      m.thermal.x_a = p.number("x_a", m.thermal.x_a);
      m.thermal.b1 = p.number("b1", m.thermal.b1);
      m.thermal.b2 = p.number("b2", m.thermal.b2);
      m.thermal.a_ex = p.number("a_ex", m.thermal.a_ex);
      m.thermal.c1 = p.number("c1", m.thermal.c1);
      m.thermal.c2 = p.number("c2", m.thermal.c2);
      m.thermal.nu = p.number("nu", m.thermal.nu);
      try {
        m.thermal.validate();
      } catch (const std::invalid_argument& e) {
        s.fail(e.what(), "params");
      }
    }
  } else if (m.type == "linear_gaussian") {
    s.allow({"type", "dynamics", "offsets", "stddev", "action_labels"});
    const auto rows = s.matrix("dynamics");
    m.linear.dim = rows.size();
    for (const auto& r : rows) {
      if (r.size() != rows.size()) s.fail("dynamics must be square", "dynamics");
      m.linear.dynamics.insert(m.linear.dynamics.end(), r.begin(), r.end());
    }
    m.linear.offsets = s.matrix("offsets");
    m.linear.stddev = s.vector("stddev");
    try {
      m.linear.validate();
    } catch (const std::invalid_argument& e) {
      s.fail(e.what());
    }
    if (s.has("action_labels")) {
      m.action_labels = s.strings("action_labels");
      if (m.action_labels.size() != m.linear.offsets.size()) {
        s.fail("one label per action offset required", "action_labels");
      }
    } else {
      for (std::size_t a = 0; a < m.linear.offsets.size(); ++a) m.action_labels.push_back("a" + std::to_string(a));
    }
  } else {
    s.fail("model type must be \"thermal\" or \"linear_gaussian\"", "type");
  }
}

std::uint64_t seed_of(const Section& s) {
  if (!s.has("seed")) s.fail("seed required for reproducibility");
  return s.integer("seed");
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    int line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i) line += text[i] == '\n';
    throw ConfigError(std::string("malformed JSON: ") + e.what(), line, "/");
  }
  const LineIndex lines(text);
  const Section root(doc, "", lines);
  root.allow({"model", "spec", "fvi", "bounds", "certify", "policy", "oracle", "export"});

  RunConfig cfg;
  cfg.echo = doc;
  if (root.has("model")) parse_model(root.child("model"), cfg.model);

  const Section spec = root.child("spec");
  spec.allow({"safe", "target", "horizon", "initial_state", "initial_states"});
  cfg.spec.safe = spec.box("safe");
  cfg.spec.target = spec.box("target");
  const auto horizon = spec.integer("horizon");
  if (horizon < 1 || horizon > 100000) spec.fail("horizon must be in 1..100000", "horizon");
  cfg.spec.horizon = static_cast<int>(horizon);
  if (spec.has("initial_states") == spec.has("initial_state")) {
    spec.fail("give exactly one of \"initial_state\" or \"initial_states\"");
  }
  cfg.initial_states = spec.has("initial_states") ? spec.matrix("initial_states")
                                                  : std::vector<State>{spec.vector("initial_state")};
  cfg.spec.initial_state = cfg.initial_states.front();

  const Section fvi = root.child("fvi");
  fvi.allow({"N", "M", "M0", "p", "rbf", "seed"});
  cfg.fvi.N = positive(fvi, "N", cfg.fvi.N);
  cfg.fvi.M = positive(fvi, "M", cfg.fvi.M);
  cfg.fvi.M0 = positive(fvi, "M0", cfg.fvi.M0);
  cfg.fvi.p = fvi.number("p", cfg.fvi.p);
  if (!(cfg.fvi.p >= 1.0)) fvi.fail("p must be >= 1", "p");
  if (fvi.has("rbf")) {
    const Section rbf = fvi.child("rbf");
    rbf.allow({"count", "width", "ridge", "centers"});
    cfg.fvi.rbf_width = rbf.number("width", cfg.fvi.rbf_width);
    cfg.fvi.rbf_ridge = rbf.number("ridge", cfg.fvi.rbf_ridge);
    if (rbf.has("centers")) {
      if (rbf.has("count")) rbf.fail("give either \"count\" or \"centers\"");
      cfg.fvi.rbf_centers = rbf.matrix("centers");
      cfg.fvi.rbf_count = cfg.fvi.rbf_centers.size();
    } else {
      cfg.fvi.rbf_count = positive(rbf, "count", cfg.fvi.rbf_count);
    }
    if (!(cfg.fvi.rbf_width > 0.0)) rbf.fail("width must be positive", "width");
    if (!(cfg.fvi.rbf_ridge >= 0.0)) rbf.fail("ridge must be nonnegative", "ridge");
  }
  cfg.fvi.seed = seed_of(fvi);

  if (root.has("bounds")) {
    const Section b = root.child("bounds");
    b.allow({"resolution", "eps0", "eps1", "eps2"});
    cfg.bounds.resolution = positive(b, "resolution", cfg.bounds.resolution);
    if (cfg.bounds.resolution < 2) b.fail("resolution must be >= 2", "resolution");
    cfg.bounds.eps0 = b.number("eps0", cfg.bounds.eps0);
    cfg.bounds.eps1 = b.number("eps1", cfg.bounds.eps1);
    cfg.bounds.eps2 = b.number("eps2", cfg.bounds.eps2);
    if (!(cfg.bounds.eps0 > 0.0)) b.fail("must be positive", "eps0");
    if (!(cfg.bounds.eps1 > 0.0)) b.fail("must be positive", "eps1");
    if (!(cfg.bounds.eps2 > 0.0)) b.fail("must be positive", "eps2");
  }

  if (root.has("certify")) {
    const Section c = root.child("certify");
    c.allow({"enabled", "N_tilde", "M_tilde", "eps", "seed"});
    cfg.certify.enabled = c.boolean("enabled", true);
    cfg.certify.N_tilde = positive(c, "N_tilde", cfg.certify.N_tilde);
    cfg.certify.M_tilde = positive(c, "M_tilde", cfg.certify.M_tilde);
    cfg.certify.eps = c.number("eps", 0.0);
    if (cfg.certify.enabled) {
      cfg.certify.seed = seed_of(c);
      if (cfg.certify.seed == cfg.fvi.seed) c.fail("certify seed must differ from the fvi seed", "seed");
    }
  } else {
    cfg.certify.enabled = false;
  }

  if (root.has("policy")) {
    const Section p = root.child("policy");
    p.allow({"enabled", "mc_runs", "seed"});
    cfg.policy.enabled = p.boolean("enabled", true);
    cfg.policy.mc_runs = positive(p, "mc_runs", cfg.policy.mc_runs);
    if (cfg.policy.enabled) cfg.policy.seed = seed_of(p);
  } else {
    cfg.policy.enabled = false;
  }

  if (root.has("oracle")) {
    const Section o = root.child("oracle");
    o.allow({"enabled", "resolution"});
    cfg.oracle.enabled = o.boolean("enabled", true);
    cfg.oracle.resolution = positive(o, "resolution", cfg.oracle.resolution);
  } else {
    cfg.oracle.enabled = false;
  }

  if (root.has("export")) {
    const Section e = root.child("export");
    e.allow({"resolution"});
    cfg.export_resolution = positive(e, "resolution", cfg.export_resolution);
  }

  try {
    validate_config(cfg);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what(), lines.line("/spec"), "/spec");
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

void validate_config(const RunConfig& config) {
  config.spec.validate();
  for (const auto& x : config.initial_states) {
    if (x.size() != config.spec.dim()) throw DimensionError("initial state dimension differs from the safe set");
  }
  const std::size_t dim = config.model.type == "thermal" ? 2 : config.model.linear.dim;
  if (dim != config.spec.dim()) throw DimensionError("model and spec differ in dimension");
  if (config.certify.enabled && config.certify.seed == config.fvi.seed) {
    throw ConfigError("certify seed must differ from the fvi seed", 0, "/certify/seed");
  }
}

Problem build_problem(const RunConfig& config) {
  validate_config(config);
  Problem p;
  if (config.model.type == "thermal") {
    p.process = std::make_unique<MarkovProcess>(thermal_process(config.model.thermal));
  } else {
    p.process = std::make_unique<MarkovProcess>(config.model.linear, config.model.action_labels);
  }
  p.spec = config.spec;
  p.eta = std::make_unique<SamplingDistribution>(uniform_eta(p.spec.safe, p.spec.target));
  if (config.fvi.rbf_centers.empty()) {
    p.rbf = std::make_shared<const RbfClassConfig>(
        lattice_rbf_class(p.spec.safe, config.fvi.rbf_count, config.fvi.rbf_width, config.fvi.rbf_ridge));
  } else {
    p.rbf = std::make_shared<const RbfClassConfig>(
        rbf_class(config.fvi.rbf_centers, config.fvi.rbf_width, config.fvi.rbf_ridge));
  }
  return p;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

FviConfig fvi_config(const RunConfig& c, const Problem& p) {
  FviConfig f;
  f.n_base = c.fvi.N;
  f.n_successors = c.fvi.M;
  f.n_initial = c.fvi.M0;
  f.p = c.fvi.p;
  f.rbf = p.rbf;
  f.seed = c.fvi.seed;
  return f;
}

ReachAvoidSpec spec_at(const Problem& p, const State& x0) {
  ReachAvoidSpec s = p.spec;
  s.initial_state = x0;
  return s;
}

json stack_to_json(const ValueFunctionStack& values, const RbfClassConfig& rbf) {
  json out;
  out["rbf"] = {{"centers", rbf.centers}, {"width", rbf.width}, {"ridge", rbf.ridge}};
  json functions = json::array();
  for (int k = 1; k < values.horizon(); ++k) functions.push_back({{"k", k}, {"weights", values.at(k).weights()}});
  out["functions"] = functions;
  out["horizon"] = values.horizon();
  return out;
}

ValueFunctionStack stack_from_json(const json& report, const Problem& p) {
  if (!report.contains("fvi") || !report["fvi"].contains("value_stack")) {
    throw std::invalid_argument("stored report has no fvi.value_stack");
  }
  const json& s = report["fvi"]["value_stack"];
  const auto centers = s.at("rbf").at("centers").get<std::vector<State>>();
  if (centers != p.rbf->centers || s.at("rbf").at("width").get<double>() != p.rbf->width) {
    throw std::invalid_argument("stored value stack uses a different RBF class than the config");
  }
  const int horizon = s.at("horizon").get<int>();
  if (horizon != p.spec.horizon) throw std::invalid_argument("stored value stack has a different horizon");
  ValueFunctionStack values(horizon, p.rbf);
  for (const auto& f : s.at("functions")) {
    values.set(f.at("k").get<int>(), FittedFunction(p.rbf, f.at("weights").get<std::vector<double>>()));
  }
  return values;
}

std::uint64_t stored_fvi_seed(const json& report) { return report.at("seeds").at("fvi").get<std::uint64_t>(); }

void check_stored_seed(const RunConfig& c, const json& report) {
  if (stored_fvi_seed(report) != c.fvi.seed) {
    throw std::invalid_argument("stored report was produced with fvi seed " + std::to_string(stored_fvi_seed(report)) +
                                ", config has " + std::to_string(c.fvi.seed));
  }
}

std::ofstream open_csv(const fs::path& path, std::uint64_t seed, const std::string& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "# seed: " << seed << "\n" << header << "\n";
  return out;
}

std::string coord_header(std::size_t dim) {
  std::string h;
  for (std::size_t d = 0; d < dim; ++d) h += "x" + std::to_string(d + 1) + ",";
  return h;
}

// Cell midpoints of a grid over A that lie in A\K.
std::vector<State> export_points(const ReachAvoidSpec& spec, std::size_t resolution) {
  Grid grid(spec.safe, resolution);
  std::vector<State> points;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    State x = grid.center(c);
    if (spec.classify(x) == Region::kSafe) points.push_back(std::move(x));
  }
  return points;
}

void write_coords(std::ostream& out, const State& x) {
  for (double v : x) out << v << ",";
}

void write_values_csv(const fs::path& path, const ValueFunctionStack& values, const ReachAvoidSpec& spec,
                      std::size_t resolution, std::uint64_t seed) {
  auto out = open_csv(path, seed, coord_header(spec.dim()) + "k,value");
  const auto points = export_points(spec, resolution);
  for (int k = 1; k < values.horizon(); ++k) {
    for (const auto& x : points) {
      write_coords(out, x);
      out << k << "," << values.at(k)(x) << "\n";
    }
  }
}

void write_policy_csv(const fs::path& path, const Policy& policy, const ReachAvoidSpec& spec, std::size_t resolution,
                      std::uint64_t seed) {
  auto out = open_csv(path, seed, coord_header(spec.dim()) + "k,action_index");
  const auto points = export_points(spec, resolution);
  for (int k = 0; k < policy.horizon(); ++k) {
    for (const auto& x : points) {
      write_coords(out, x);
      out << k << "," << policy.action(k, x) << "\n";
    }
  }
}

void write_certificate_csv(const fs::path& path, const SampleCertificate& cert, std::uint64_t seed) {
  auto out = open_csv(path, seed, "k,single_step,bias,delta_profile");
  for (std::size_t j = 0; j < cert.per_k.size(); ++j) {
    out << cert.per_k[j].k << "," << cert.per_k[j].single_step << "," << cert.per_k[j].bias << ","
        << cert.delta_profile[j] << "\n";
  }
}

void write_grid_csv(const fs::path& path, const GridValue& value, std::uint64_t seed) {
  auto out = open_csv(path, seed, coord_header(value.grid.dim()) + "k,value");
  for (std::size_t k = 0; k + 1 < value.values.size(); ++k) {
    for (std::size_t c = 0; c < value.grid.size(); ++c) {
      if (value.cell_region[c] != Region::kSafe) continue;
      write_coords(out, value.grid.center(c));
      out << k << "," << value.values[k][c] << "\n";
    }
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json apriori_json(const AprioriCertificate& a, ScalingMethod method) {
  return {{"delta_total", a.delta_total},   {"Delta_quantified", a.delta_quantified},
          {"bias_coefficient", a.bias_coefficient}, {"bias_symbolic", a.bias_symbolic},
          {"vacuous", a.vacuous},           {"B", a.B},
          {"B0", a.B0},                     {"method", to_string(method)}};
}

json estimates_json(const std::vector<StepEstimate>& per_k) {
  json arr = json::array();
  for (const auto& e : per_k) arr.push_back({{"k", e.k}, {"single_step", e.single_step}, {"bias", e.bias}});
  return arr;
}

json certificate_json(const SampleCertificate& c) {
  return {{"per_k", estimates_json(c.per_k)},
          {"delta_profile", c.delta_profile},
          {"Delta", c.Delta},
          {"delta_Delta", c.delta_Delta},
          {"L", c.L},
          {"B", c.B},
          {"B0", c.B0},
          {"eps", c.eps},
          {"eps0", c.eps0},
          {"delta0", c.delta0},
          {"valid", c.valid},
          {"vacuous", c.vacuous}};
}

json mc_json(const MonteCarloEstimate& mc) {
  return {{"estimate", mc.estimate}, {"half_width_95", mc.half_width_95}, {"runs", mc.runs},
          {"successes", mc.successes}};
}

struct Scaling {
  NumericScaling B;
  std::optional<double> B_analytic;
  std::vector<NumericScaling> B0;  // per initial state
};

Scaling compute_scaling(const RunConfig& c, const Problem& p) {
  Scaling s;
  s.B = scaling_B_numeric(*p.process, p.spec, *p.eta, c.bounds.resolution);
  if (const auto* lg = p.process->linear_gaussian()) {
    s.B_analytic = scaling_B_analytic_linear_gaussian(lg->dynamics, lg->dim, p.process->n_actions());
  }
  for (const auto& x0 : c.initial_states) s.B0.push_back(scaling_B0(*p.process, p.spec, *p.eta, x0, c.bounds.resolution));
  return s;
}

json scaling_json(const Scaling& s, const Problem& p) {
  json j = {{"B", s.B.value},
            {"B_half_resolution", s.B.half_resolution_value},
            {"B_refinement_delta", s.B.refinement_delta},
            {"resolution", s.B.resolution},
            {"method", "numeric"},
            {"eta", p.eta->id()}};
  j["B_analytic_upper"] = s.B_analytic ? json(*s.B_analytic) : json(nullptr);
  return j;
}

BoundBudget run_budget(const RunConfig& c, const Problem& p) {
  BoundBudget b;
  b.eps0 = c.bounds.eps0;
  b.eps1 = c.bounds.eps1;
  b.eps2 = c.bounds.eps2;
  b.delta0 = b.delta1 = b.delta2 = 0.5;  // replaced by the sample-size expressions
  b.p = c.fvi.p;
  b.d = pseudo_dimension(*p.rbf);
  b.n_actions = p.process->n_actions();
  b.horizon = p.spec.horizon;
  b.N = c.fvi.N;
  b.M = c.fvi.M;
  b.M0 = c.fvi.M0;
  return b;
}

ScalingFactors factors(const Scaling& s, std::size_t j, const Problem& p) {
  return {s.B.value, s.B0[j].value, ScalingMethod::kNumeric, p.eta->id()};
}

// Step-0 estimates at every initial state from one stack; slot j keys the
// stream of the j-th state.
std::vector<OperatorValue> initial_values(const RunConfig& c, const Problem& p, const ValueFunctionStack& values) {
  std::vector<OperatorValue> out;
  for (std::size_t j = 0; j < c.initial_states.size(); ++j) {
    const auto spec = spec_at(p, c.initial_states[j]);
    switch (spec.classify(spec.initial_state)) {
      case Region::kTarget:
        out.push_back({1.0, 0});
        break;
      case Region::kOutside:
        out.push_back({0.0, 0});
        break;
      case Region::kSafe:
        out.push_back(estimate_initial_value(*p.process, spec, values, spec.initial_state, c.fvi.M0, c.fvi.seed, j));
        break;
    }
  }
  return out;
}

json oracle_section(const RunConfig& c, const Problem& p, std::size_t resolution, const fs::path& out_dir,
                    bool write_csv) {
  const OracleResult r = dp_optimal(*p.process, p.spec, resolution);
  json per = json::array();
  for (const auto& x0 : c.initial_states) {
    const auto spec = spec_at(p, x0);
    double best = 0.0;
    std::size_t action = 0;
    switch (spec.classify(x0)) {
      case Region::kTarget:
        best = 1.0;
        break;
      case Region::kOutside:
        break;
      case Region::kSafe:
        for (std::size_t a = 0; a < p.process->n_actions(); ++a) {
          const double v = quadrature_operator(
              *p.process, spec, [&](StateView y) { return r.value.lookup(1, y); }, x0, a, resolution);
          if (a == 0 || v > best) {
            best = v;
            action = a;
          }
        }
        break;
    }
    per.push_back({{"x0", x0},
                   {"r_star", std::clamp(best, 0.0, 1.0)},
                   {"action_index", action},
                   {"action", p.process->action_labels()[action]}});
  }
  if (write_csv) write_grid_csv(out_dir / "oracle_values.csv", r.value, c.fvi.seed);
  return {{"resolution", resolution},
          {"initial_states", per},
          {"quadrature_mass_ratio", r.diagnostics.quadrature_mass_ratio},
          {"warnings", r.diagnostics.warnings}};
}

}  // namespace

json cmd_run(const RunConfig& c, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const Problem p = build_problem(c);
  const FviConfig fc = fvi_config(c, p);
  json timing;
  json report;
  report["tool_version"] = kToolVersion;
  report["config"] = c.echo;
  report["seeds"] = {{"fvi", c.fvi.seed},
                     {"certify", c.certify.enabled ? json(c.certify.seed) : json(nullptr)},
                     {"policy", c.policy.enabled ? json(c.policy.seed) : json(nullptr)}};

  auto t0 = Clock::now();
  const FviResult fvi = fit_value_stack(*p.process, p.spec, *p.eta, fc);
  const auto w0 = initial_values(c, p, fvi.values);
  timing["fvi_seconds"] = seconds_since(t0);

  json residuals = json::array();
  for (int k = 1; k < p.spec.horizon; ++k) {
    residuals.push_back({{"k", k}, {"rms", fvi.fit_residuals[static_cast<std::size_t>(k)]}});
  }
  report["fvi"] = {{"N", c.fvi.N},
                   {"M", c.fvi.M},
                   {"M0", c.fvi.M0},
                   {"p", c.fvi.p},
                   {"pseudo_dimension", pseudo_dimension(*p.rbf)},
                   {"fit_residuals", residuals},
                   {"value_stack", stack_to_json(fvi.values, *p.rbf)}};
  write_values_csv(out_dir / "values_k.csv", fvi.values, p.spec, c.export_resolution, c.fvi.seed);

  t0 = Clock::now();
  const Scaling scaling = compute_scaling(c, p);
  timing["scaling_seconds"] = seconds_since(t0);
  report["scaling"] = scaling_json(scaling, p);

  std::optional<StepEstimates> estimates;
  if (c.certify.enabled) {
    t0 = Clock::now();
    const HoldoutSet holdout = draw_holdout(*p.process, *p.eta, c.certify.N_tilde, c.certify.M_tilde, c.certify.seed);
    estimates = estimate_all(holdout, fvi.values, p.spec, c.fvi.seed);
    timing["certify_seconds"] = seconds_since(t0);
    report["sample_estimates"] = {{"per_k", estimates_json(estimates->per_k)},
                                  {"holdout_seed", c.certify.seed},
                                  {"N_tilde", c.certify.N_tilde},
                                  {"M_tilde", c.certify.M_tilde},
                                  {"eta", p.eta->id()}};
  }

  std::optional<Policy> policy;
  if (c.policy.enabled) {
    t0 = Clock::now();
    policy = extract_policy(*p.process, p.spec, *p.eta, fvi, fc);
    write_policy_csv(out_dir / "policy.csv", *policy, p.spec, c.export_resolution, c.fvi.seed);
    timing["policy_seconds"] = seconds_since(t0);
  }

  const BoundBudget budget = run_budget(c, p);
  json states = json::array();
  t0 = Clock::now();
  for (std::size_t j = 0; j < c.initial_states.size(); ++j) {
    const auto spec = spec_at(p, c.initial_states[j]);
    json s = {{"x0", c.initial_states[j]},
              {"r_hat", w0[j].value},
              {"action_index", w0[j].action},
              {"action", p.process->action_labels()[w0[j].action]},
              {"B0", scaling.B0[j].value},
              {"B0_half_resolution", scaling.B0[j].half_resolution_value}};
    const auto apriori = global_apriori_certificate(budget, scaling.B.value, scaling.B0[j].value);
    s["apriori_certificate"] = apriori_json(apriori, ScalingMethod::kNumeric);
    std::optional<SampleCertificate> cert;
    if (estimates) {
      cert = sample_certificate(*estimates, factors(scaling, j, p), c.certify.eps, c.bounds.eps0, c.certify.N_tilde,
                                c.fvi.M0, p.process->n_actions());
      s["sample_certificate"] = certificate_json(*cert);
      if (j == 0) write_certificate_csv(out_dir / "certificate.csv", *cert, c.certify.seed);
    }
    if (policy) {
      const auto mc = monte_carlo_reach_avoid(*p.process, spec, *policy, c.policy.mc_runs, c.policy.seed);
      json pj = mc_json(mc);
      pj["lower_bound"] = std::max(0.0, mc.estimate - mc.half_width_95);
      if (cert) {
        const auto pb = policy_performance_bound(*cert, w0[j].value, mc.estimate, mc.half_width_95);
        pj["performance_bound"] = pb.bound;
        pj["performance_bound_vacuous"] = pb.vacuous;
      }
      s["policy"] = pj;
    }
    states.push_back(s);
  }
  timing["per_state_seconds"] = seconds_since(t0);
  report["initial_states"] = states;
  report["r_hat"] = w0.front().value;
  report["apriori_certificate"] = states.front()["apriori_certificate"];
  if (estimates) report["certificate"] = states.front()["sample_certificate"];

  if (c.oracle.enabled) {
    t0 = Clock::now();
    report["oracle"] = oracle_section(c, p, c.oracle.resolution, out_dir, false);
    timing["oracle_seconds"] = seconds_since(t0);
  }
  report["timing"] = timing;
  write_json(out_dir / "report.json", report);
  return report;
}

json cmd_oracle(const RunConfig& c, std::size_t resolution, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const Problem p = build_problem(c);
  const auto t0 = Clock::now();
  json report;
  report["tool_version"] = kToolVersion;
  report["config"] = c.echo;
  report["oracle"] = oracle_section(c, p, resolution, out_dir, true);

  // Cauchy check on the first initial state over halved resolutions.
  json conv = json::array();
  std::vector<double> r;
  for (std::size_t res : {resolution / 4, resolution / 2}) {
    if (res < 2) continue;
    r.push_back(oracle_section(c, p, res, out_dir, false)["initial_states"][0]["r_star"].get<double>());
    conv.push_back({{"resolution", res}, {"r_star", r.back()}});
  }
  r.push_back(report["oracle"]["initial_states"][0]["r_star"].get<double>());
  conv.push_back({{"resolution", resolution}, {"r_star", r.back()}});
  json diag = {{"sequence", conv}};
  if (r.size() >= 2) diag["last_change"] = std::abs(r[r.size() - 1] - r[r.size() - 2]);
  if (r.size() >= 3) {
    diag["previous_change"] = std::abs(r[r.size() - 2] - r[r.size() - 3]);
    diag["cauchy_decreasing"] = diag["last_change"].get<double>() < diag["previous_change"].get<double>();
  }
  report["convergence"] = diag;

  if (c.policy.enabled) {
    const OracleResult opt = dp_optimal(*p.process, p.spec, resolution);
    json mcs = json::array();
    for (const auto& x0 : c.initial_states) {
      mcs.push_back(mc_json(monte_carlo_reach_avoid(*p.process, spec_at(p, x0), opt.policy, c.policy.mc_runs,
                                                    c.policy.seed)));
    }
    report["monte_carlo"] = mcs;
  }
  report["timing"] = {{"oracle_seconds", seconds_since(t0)}};
  write_json(out_dir / "oracle.json", report);
  return report;
}

json cmd_certify(const RunConfig& c, const json& stored, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  if (!c.certify.enabled) throw std::invalid_argument("certify section is disabled in the config");
  check_stored_seed(c, stored);
  const Problem p = build_problem(c);
  const ValueFunctionStack values = stack_from_json(stored, p);
  const auto t0 = Clock::now();
  const Scaling scaling = compute_scaling(c, p);
  const HoldoutSet holdout = draw_holdout(*p.process, *p.eta, c.certify.N_tilde, c.certify.M_tilde, c.certify.seed);
  const StepEstimates est = estimate_all(holdout, values, p.spec, stored_fvi_seed(stored));
  json report;
  report["tool_version"] = kToolVersion;
  report["seeds"] = {{"fvi", c.fvi.seed}, {"certify", c.certify.seed}};
  report["scaling"] = scaling_json(scaling, p);
  json states = json::array();
  for (std::size_t j = 0; j < c.initial_states.size(); ++j) {
    const auto cert = sample_certificate(est, factors(scaling, j, p), c.certify.eps, c.bounds.eps0, c.certify.N_tilde,
                                         c.fvi.M0, p.process->n_actions());
    if (j == 0) write_certificate_csv(out_dir / "certificate.csv", cert, c.certify.seed);
    states.push_back({{"x0", c.initial_states[j]}, {"sample_certificate", certificate_json(cert)}});
  }
  report["initial_states"] = states;
  report["certificate"] = states.front()["sample_certificate"];
  report["timing"] = {{"certify_seconds", seconds_since(t0)}};
  write_json(out_dir / "certify_report.json", report);
  return report;
}

json cmd_policy(const RunConfig& c, const json& stored, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  if (!c.policy.enabled) throw std::invalid_argument("policy section is disabled in the config");
  check_stored_seed(c, stored);
  const Problem p = build_problem(c);
  const FviConfig fc = fvi_config(c, p);
  const auto t0 = Clock::now();
  FviResult fvi;
  fvi.values = stack_from_json(stored, p);
  fvi.labels = label_iterations(*p.process, p.spec, *p.eta, fvi.values, fc);
  const Policy policy = extract_policy(*p.process, p.spec, *p.eta, fvi, fc);
  write_policy_csv(out_dir / "policy.csv", policy, p.spec, c.export_resolution, c.fvi.seed);

  json report;
  report["tool_version"] = kToolVersion;
  report["seeds"] = {{"fvi", c.fvi.seed}, {"policy", c.policy.seed}};
  json states = json::array();
  for (const auto& x0 : c.initial_states) {
    const auto spec = spec_at(p, x0);
    json s = {{"x0", x0},
              {"action_index", policy.action(0, x0)},
              {"monte_carlo", mc_json(monte_carlo_reach_avoid(*p.process, spec, policy, c.policy.mc_runs,
                                                              c.policy.seed))}};
    if (c.oracle.enabled) {
      s["dp_fixed_policy"] = dp_fixed_policy(*p.process, spec, policy, c.oracle.resolution).r_mu;
    }
    states.push_back(s);
  }
  report["initial_states"] = states;
  report["timing"] = {{"policy_seconds", seconds_since(t0)}};
  write_json(out_dir / "policy_report.json", report);
  return report;
}

json cmd_plan(const PlanArgs& a) {
  if (!(a.alpha >= 0.0 && a.alpha < 1.0)) throw std::invalid_argument("alpha must lie in [0, 1)");
  if (a.horizon < 1) throw std::invalid_argument("N_t must be >= 1");
  const double share = (1.0 - a.alpha) / (1.0 + 2.0 * static_cast<double>(a.horizon - 1));
  if (!(share > 0.0 && share < 1.0)) throw std::invalid_argument("infeasible confidence split");
  const auto n = plan_sample_sizes(a.eps0, a.eps1, a.eps2, share, share, share, a.d, a.p, a.n_actions);
  const double d1 = hoeffding_delta_real(n.M, a.eps1, a.n_actions, n.N);
  const double d2 = pollard_delta(n.N, a.eps2, a.p, a.d);
  const double d0 = 2.0 * static_cast<double>(a.n_actions) * std::exp(-2.0 * n.M0 * a.eps0 * a.eps0);
  const double steps = static_cast<double>(a.horizon - 1);
  return {{"inputs",
           {{"eps0", a.eps0}, {"eps1", a.eps1}, {"eps2", a.eps2}, {"alpha", a.alpha}, {"d", a.d}, {"p", a.p},
            {"n_actions", a.n_actions}, {"N_t", a.horizon}}},
          {"delta_split", {{"delta0", share}, {"delta1", share}, {"delta2", share}}},
          {"N", n.N},
          {"M", n.M},
          {"M0", n.M0},
          {"implied", {{"delta0", d0}, {"delta1", d1}, {"delta2", d2}, {"total", d0 + steps * (d1 + d2)}}}};
}

json strip_timing(json report) {
  report.erase("timing");
  return report;
}

std::string error_json(const std::exception& e) {
  json err = {{"message", e.what()}};
  if (const auto* ce = dynamic_cast<const ConfigError*>(&e)) {
    err["type"] = "config_error";
    err["line"] = ce->line();
    err["pointer"] = ce->pointer();
  } else if (dynamic_cast<const IndependenceError*>(&e)) {
    err["type"] = "independence_error";
  } else if (dynamic_cast<const VacuousBoundError*>(&e)) {
    err["type"] = "vacuous_bound";
  } else if (dynamic_cast<const FitError*>(&e)) {
    err["type"] = "fit_error";
  } else if (dynamic_cast<const DimensionError*>(&e)) {
    err["type"] = "dimension_error";
  } else if (dynamic_cast<const std::invalid_argument*>(&e)) {
    err["type"] = "invalid_argument";
  } else {
    err["type"] = "error";
  }
  return json{{"error", err}}.dump();
}

}  // namespace reachcert::app

#pragma once

// JSON experiment configuration: strict parsing (unknown keys are errors),
// validation, canonical serialization and a stable digest.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdp/error.hpp"
#include "kgdp/harness.hpp"

namespace kgdp {

using nlohmann::json;

namespace detail {

// 1-based line of the member named by a JSON pointer inside `text`, found
// by scanning for each key in turn. 0 when it cannot be located.
inline std::size_t locate_line(const std::string& text, const std::string& pointer) {
  if (text.empty()) return 0;
  std::size_t pos = 0;
  std::size_t start = 1;
  bool found_any = false;
  while (start <= pointer.size()) {
    std::size_t end = pointer.find('/', start);
    if (end == std::string::npos) end = pointer.size();
    const std::string key = pointer.substr(start, end - start);
    start = end + 1;
    if (key.empty() || std::all_of(key.begin(), key.end(), ::isdigit)) continue;
    const std::size_t hit = text.find("\"" + key + "\"", pos);
    if (hit == std::string::npos) break;
    pos = hit;
    found_any = true;
  }
  if (!found_any) return 0;
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

class Reader {
 public:
  Reader(const std::string& text) : text_(text) {}

  [[noreturn]] void fail(const std::string& pointer, const std::string& msg) const {
    const std::size_t line = locate_line(text_, pointer);
    std::string where = line ? "line " + std::to_string(line) : std::string();
    if (!pointer.empty()) where += (where.empty() ? "" : " ") + std::string("(") + pointer + ")";
    throw ConfigError(where, msg);
  }

  void only_keys(const json& obj, const std::string& ptr, std::initializer_list<const char*> keys) const {
    if (!obj.is_object()) fail(ptr, "expected an object");
    for (const auto& [k, _] : obj.items()) {
      bool ok = false;
      for (const char* allowed : keys) ok = ok || k == allowed;
      if (!ok) {
        std::string list;
        for (const char* allowed : keys) list += (list.empty() ? "" : ", ") + std::string(allowed);
        fail(ptr + "/" + k, "unknown key '" + k + "' (valid: " + list + ")");
      }
    }
  }

  template <typename T>
  T get(const json& obj, const std::string& ptr, const char* key) const {
    try {
      return obj.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ptr + "/" + key, std::string("invalid value: ") + e.what());
    }
  }

  template <typename T>
  T get_or(const json& obj, const std::string& ptr, const char* key, T fallback) const {
    if (!obj.contains(key)) return fallback;
    return get<T>(obj, ptr, key);
  }

  std::size_t get_count(const json& obj, const std::string& ptr, const char* key, std::size_t fallback) const {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
      fail(ptr + "/" + key, "expected a non-negative integer");
    return v.get<std::size_t>();
  }

 private:
  const std::string& text_;
};

}  // namespace detail

inline void validate_config(const ExperimentConfig& c, const detail::Reader& rd) {
  if (c.L < 1) rd.fail("/L", "L must be >= 1");
  if (c.L > c.prior.pool_size)
    rd.fail("/L", "L (" + std::to_string(c.L) + ") must not exceed K (" +
                      std::to_string(c.prior.pool_size) + "): constraint L <= K");
  if (c.N < 1) rd.fail("/N", "N must be >= 1");
  if (c.noise_level.has_value() == c.sigma.has_value())
    rd.fail("/noise_level", "exactly one of noise_level and sigma must be given");
  if (c.noise_level && !(*c.noise_level > 0.0 && *c.noise_level <= 1.0))
    rd.fail("/noise_level", "noise_level must lie in (0, 1]");
  if (c.sigma && !(*c.sigma > 0.0)) rd.fail("/sigma", "sigma must be positive");
  try {
    c.prior.validate();
  } catch (const Error& e) {
    rd.fail("/prior", e.what());
  }
  if (c.truth_mode == TruthMode::kFromPool && c.L + 1 > c.prior.pool_size)
    rd.fail("/L", "truth_mode from-pool needs K >= L + 1");
  if (c.truth_mode == TruthMode::kExternal) {
    if (!c.truth) rd.fail("/truth", "truth_mode external requires a truth vector");
    if (c.truth->size() != c.prior.lower.size())
      rd.fail("/truth", "truth must have the prior's dimension");
  } else if (c.truth) {
    rd.fail("/truth", "truth is only allowed with truth_mode external");
  }
  if (c.resample_enabled) {
    try {
      c.resample.validate(c.prior.pool_size, c.L);
    } catch (const Error& e) {
      rd.fail("/resample", e.what());
    }
  }
  try {
    c.quadrature.validate();
  } catch (const Error& e) {
    rd.fail("/quadrature", e.what());
  }
  if (!(c.score_tolerance >= 0.0)) rd.fail("/score_tolerance", "score_tolerance must be >= 0");
  if (c.replications < 1) rd.fail("/replications", "replications must be >= 1");

  const auto& a = c.alternatives;
  if (a.points.empty()) {
    if (a.lower.empty() || a.lower.size() != a.upper.size())
      rd.fail("/alternatives", "grid lower and upper must be non-empty and of equal length");
    for (std::size_t i = 0; i < a.lower.size(); ++i)
      if (!(a.lower[i] <= a.upper[i])) rd.fail("/alternatives", "grid lower must be <= upper");
    if (a.points_per_axis < 1) rd.fail("/alternatives", "points_per_axis must be >= 1");
  }
  try {
    const ModelSpec model = ModelRegistry::instance().create(c.model.name, c.model.params);
    if (model.dimension != c.prior.lower.size())
      rd.fail("/prior", "prior has dimension " + std::to_string(c.prior.lower.size()) +
                            " but model '" + c.model.name + "' expects " + std::to_string(model.dimension));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    rd.fail("/model", e.what());
  }
}

// `text` is only used to anchor messages to lines.
inline ExperimentConfig config_from_json(const json& doc, const std::string& text = {}) {
  const detail::Reader rd(text);
  rd.only_keys(doc, "", {"model", "alternatives", "prior", "L", "N", "noise_level", "sigma", "policy",
                         "resample", "truth_mode", "truth", "quadrature", "score_tolerance",
                         "replications", "seed"});
  ExperimentConfig c;

  if (!doc.contains("model")) rd.fail("/model", "missing required key 'model'");
  const json& model = doc.at("model");
  rd.only_keys(model, "/model", {"name", "params"});
  c.model.name = rd.get<std::string>(model, "/model", "name");
  c.model.params = model.value("params", json::object());
  if (!ModelRegistry::instance().contains(c.model.name))
    rd.fail("/model/name", "unknown model '" + c.model.name + "' (registered: " +
                               ModelRegistry::instance().names() + ")");

  if (!doc.contains("prior")) rd.fail("/prior", "missing required key 'prior'");
  const json& prior = doc.at("prior");
  rd.only_keys(prior, "/prior", {"lower", "upper", "K", "seed"});
  c.prior.lower = rd.get<std::vector<double>>(prior, "/prior", "lower");
  c.prior.upper = rd.get<std::vector<double>>(prior, "/prior", "upper");
  c.prior.pool_size = rd.get_count(prior, "/prior", "K", 10000);
  c.prior.seed = rd.get_or<std::uint64_t>(prior, "/prior", "seed", 1);

  if (!doc.contains("alternatives")) rd.fail("/alternatives", "missing required key 'alternatives'");
  const json& alts = doc.at("alternatives");
  rd.only_keys(alts, "/alternatives", {"lower", "upper", "points_per_axis", "points"});
  if (alts.contains("points")) {
    if (alts.contains("lower") || alts.contains("upper") || alts.contains("points_per_axis"))
      rd.fail("/alternatives/points", "give either an explicit point list or a grid, not both");
    c.alternatives.points = rd.get<std::vector<std::vector<double>>>(alts, "/alternatives", "points");
    if (c.alternatives.points.empty()) rd.fail("/alternatives/points", "point list must not be empty");
  } else {
    c.alternatives.lower = rd.get<std::vector<double>>(alts, "/alternatives", "lower");
    c.alternatives.upper = rd.get<std::vector<double>>(alts, "/alternatives", "upper");
    c.alternatives.points_per_axis = rd.get_count(alts, "/alternatives", "points_per_axis", 0);
  }

  c.L = rd.get_count(doc, "", "L", c.L);
  c.N = rd.get_count(doc, "", "N", c.N);
  if (doc.contains("sigma")) {
    c.sigma = rd.get<double>(doc, "", "sigma");
    c.noise_level.reset();
  }
  if (doc.contains("noise_level")) c.noise_level = rd.get<double>(doc, "", "noise_level");

  if (doc.contains("policy")) {
    const auto name = rd.get<std::string>(doc, "", "policy");
    try {
      c.policy = parse_policy(name);
    } catch (const Error& e) {
      rd.fail("/policy", e.what());
    }
  }

  c.resample.small_pool_size = ResampleConfig::default_small_pool_size(c.prior.pool_size);
  if (doc.contains("resample")) {
    const json& rs = doc.at("resample");
    rd.only_keys(rs, "/resample", {"enabled", "n_resamp", "epsilon", "R", "min_removal", "max_iterations"});
    c.resample_enabled = rd.get_or<bool>(rs, "/resample", "enabled", true);
    c.resample.n_resamp = rd.get_or<int>(rs, "/resample", "n_resamp", c.resample.n_resamp);
    c.resample.epsilon = rd.get_or<double>(rs, "/resample", "epsilon", c.resample.epsilon);
    c.resample.small_pool_size = rd.get_count(rs, "/resample", "R", c.resample.small_pool_size);
    c.resample.min_removal = rd.get_count(rs, "/resample", "min_removal", c.resample.min_removal);
    c.resample.max_iterations = rd.get_or<int>(rs, "/resample", "max_iterations", c.resample.max_iterations);
  }

  if (doc.contains("truth_mode")) {
    const auto name = rd.get<std::string>(doc, "", "truth_mode");
    try {
      c.truth_mode = parse_truth_mode(name);
    } catch (const Error& e) {
      rd.fail("/truth_mode", e.what());
    }
  }
  if (doc.contains("truth")) c.truth = rd.get<std::vector<double>>(doc, "", "truth");

  if (doc.contains("quadrature")) {
    const json& q = doc.at("quadrature");
    rd.only_keys(q, "/quadrature", {"scheme", "order", "half_width"});
    if (q.contains("scheme")) {
      try {
        c.quadrature.scheme = parse_quadrature_scheme(rd.get<std::string>(q, "/quadrature", "scheme"));
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        rd.fail("/quadrature/scheme", e.what());
      }
    }
    c.quadrature.order = rd.get_or<int>(q, "/quadrature", "order", c.quadrature.order);
    c.quadrature.half_width = rd.get_or<double>(q, "/quadrature", "half_width", c.quadrature.half_width);
  }
  c.score_tolerance = rd.get_or<double>(doc, "", "score_tolerance", c.score_tolerance);
  c.replications = rd.get_count(doc, "", "replications", c.replications);
  c.seed = rd.get_or<std::uint64_t>(doc, "", "seed", c.seed);

  validate_config(c, rd);
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t off = std::min<std::size_t>(e.byte, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(
                                     std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(off), '\n'));
    throw ConfigError("line " + std::to_string(line), std::string("JSON syntax error: ") + e.what());
  }
  return config_from_json(doc, text);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// Every field is written, defaults included.
inline json config_to_json(const ExperimentConfig& c) {
  json doc;
  doc["model"] = {{"name", c.model.name}, {"params", c.model.params}};
  if (!c.alternatives.points.empty()) {
    doc["alternatives"] = {{"points", c.alternatives.points}};
  } else {
    doc["alternatives"] = {{"lower", c.alternatives.lower},
                           {"upper", c.alternatives.upper},
                           {"points_per_axis", c.alternatives.points_per_axis}};
  }
  doc["prior"] = {{"lower", c.prior.lower}, {"upper", c.prior.upper}, {"K", c.prior.pool_size},
                  {"seed", c.prior.seed}};
  doc["L"] = c.L;
  doc["N"] = c.N;
  if (c.noise_level) doc["noise_level"] = *c.noise_level;
  if (c.sigma) doc["sigma"] = *c.sigma;
  doc["policy"] = std::string(to_string(c.policy));
  doc["resample"] = {{"enabled", c.resample_enabled},
                     {"n_resamp", c.resample.n_resamp},
                     {"epsilon", c.resample.epsilon},
                     {"R", c.resample.small_pool_size},
                     {"min_removal", c.resample.min_removal},
                     {"max_iterations", c.resample.max_iterations}};
  doc["truth_mode"] = std::string(to_string(c.truth_mode));
  if (c.truth) doc["truth"] = *c.truth;
  doc["quadrature"] = {{"scheme", std::string(to_string(c.quadrature.scheme))},
                       {"order", c.quadrature.order},
                       {"half_width", c.quadrature.half_width}};
  doc["score_tolerance"] = c.score_tolerance;
  doc["replications"] = c.replications;
  doc["seed"] = c.seed;
  return doc;
}

// FNV-1a over the canonical dump. nlohmann::json keeps object keys sorted,
// so the digest does not depend on key order in the source document.
inline std::string config_digest(const json& doc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : doc.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_digest(const ExperimentConfig& c) { return config_digest(config_to_json(c)); }

}  // namespace kgdp

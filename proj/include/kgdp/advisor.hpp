#pragma once

// Live campaign advisor: recommends the next experiment, records measured
// outcomes and persists each campaign as one JSON document.
//
// The service layer is transport-agnostic; every operation returns an
// HTTP-style status and JSON body. advisor_http.hpp binds it to routes.

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdp/config.hpp"
#include "kgdp/harness.hpp"

namespace kgdp {

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

// Thrown by the fault-injection hook to emulate a process dying mid-request.
class InjectedCrash : public Error {
 public:
  using Error::Error;
};

enum class FaultPoint {
  kNone,
  kBeforeRename,  // temp file written, rename not yet done
  kAfterPersist,  // new state on disk, in-memory state and response not yet updated
};

namespace detail {

inline nlohmann::json log_weight_to_json(double lw) {
  return lw == kNegInf ? nlohmann::json(nullptr) : nlohmann::json(lw);
}

inline double log_weight_from_json(const nlohmann::json& j) {
  return j.is_null() ? kNegInf : j.get<double>();
}

// Write-temp-then-rename with fsync, so readers only ever see a complete
// old or complete new document.
inline void atomic_write(const std::filesystem::path& path, const std::string& contents,
                         FaultPoint fault) {
  const auto tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error("cannot write " + tmp);
  std::size_t done = 0;
  while (done < contents.size()) {
    const ssize_t n = ::write(fd, contents.data() + done, contents.size() - done);
    if (n <= 0) {
      ::close(fd);
      throw Error("short write to " + tmp);
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  if (fault == FaultPoint::kBeforeRename) throw InjectedCrash("injected crash before rename");
  std::filesystem::rename(tmp, path);
  const int dfd = ::open(path.parent_path().c_str(), O_RDONLY | O_DIRECTORY);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

}  // namespace detail

class AdvisorService {
 public:
  explicit AdvisorService(std::filesystem::path state_dir) : dir_(std::move(state_dir)) {
    std::filesystem::create_directories(dir_);
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      const auto& p = entry.path();
      if (p.extension() == ".tmp") {
        std::filesystem::remove(p);
        continue;
      }
      if (p.extension() != ".json") continue;
      std::ifstream in(p);
      std::stringstream ss;
      ss << in.rdbuf();
      auto snap = load_snapshot(nlohmann::json::parse(ss.str()), p);
      auto slot = std::make_shared<Slot>();
      if (!snap->idempotency_key.empty()) by_key_[snap->idempotency_key] = snap->id;
      next_id_ = std::max(next_id_, id_number(snap->id) + 1);
      slot->current = std::move(snap);
      slots_[slot->current->id] = std::move(slot);
    }
  }

  const std::filesystem::path& state_dir() const { return dir_; }

  void inject_fault(FaultPoint f) { fault_ = f; }

  // Body: {"config": {...}, "idempotency_key": "..."} or a bare config.
  ServiceResponse create_campaign(const nlohmann::json& body, std::string idempotency_key = {}) {
    nlohmann::json cfg_doc = body;
    if (body.is_object() && body.contains("config")) {
      for (const auto& [k, _] : body.items())
        if (k != "config" && k != "idempotency_key")
          return error(400, "unknown key '" + k + "' (valid: config, idempotency_key)");
      cfg_doc = body.at("config");
      if (body.contains("idempotency_key")) {
        if (!body.at("idempotency_key").is_string()) return error(400, "idempotency_key must be a string");
        if (idempotency_key.empty()) idempotency_key = body.at("idempotency_key").get<std::string>();
      }
    }
    ExperimentConfig cfg;
    try {
      cfg = campaign_config(cfg_doc);
    } catch (const ConfigError& e) {
      return config_error(e);
    } catch (const Error& e) {
      return error(400, e.what());
    }

    std::unique_lock lock(registry_mu_);
    if (!idempotency_key.empty()) {
      if (auto it = by_key_.find(idempotency_key); it != by_key_.end()) {
        auto snap = snapshot_locked(it->second);
        ServiceResponse r{200, summary(*snap)};
        r.body["idempotent_replay"] = true;
        return r;
      }
    }
    std::shared_ptr<const Snapshot> snap;
    try {
      auto s = std::make_shared<Snapshot>();
      s->id = make_id(next_id_);
      s->idempotency_key = idempotency_key;
      s->config = cfg;
      auto problem = build_problem(cfg);
      Rng init = substream(cfg.seed, Stream::kCandidateInit);
      const auto initial = draw_distinct(problem->pool.size(), cfg.L, init);
      s->campaign = std::make_shared<const Campaign>(problem, settings_for(cfg), cfg.seed, initial);
      s->events = nlohmann::json::array({{{"type", "create"}, {"step", 0}}});
      snap = s;
    } catch (const Error& e) {
      return error(400, e.what());
    }
    persist(*snap);
    ++next_id_;
    auto slot = std::make_shared<Slot>();
    slot->current = snap;
    slots_[snap->id] = slot;
    if (!idempotency_key.empty()) by_key_[idempotency_key] = snap->id;
    return {201, summary(*snap)};
  }

  ServiceResponse list_campaigns() const {
    std::shared_lock lock(registry_mu_);
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [id, slot] : slots_) {
      auto snap = slot->get();
      list.push_back({{"id", id}, {"step", snap->campaign->step()}});
    }
    return {200, {{"campaigns", list}}};
  }

  ServiceResponse get_campaign(const std::string& id) const {
    auto snap = find(id);
    if (!snap) return not_found(id);
    return {200, summary(*snap)};
  }

  ServiceResponse get_state(const std::string& id) const {
    auto snap = find(id);
    if (!snap) return not_found(id);
    return {200, state_document(*snap)};
  }

  // Pure read: the policy generator is re-derived from the step counter.
  ServiceResponse recommend(const std::string& id, std::optional<std::string> policy_name = {}) const {
    auto snap = find(id);
    if (!snap) return not_found(id);
    PolicyKind policy = snap->config.policy;
    if (policy_name && !policy_name->empty()) {
      try {
        policy = parse_policy(*policy_name);
      } catch (const Error& e) {
        return error(400, e.what(), snap->campaign->step());
      }
    }
    const Campaign& c = *snap->campaign;
    const Recommendation rec = c.recommend(policy);
    nlohmann::json body;
    body["id"] = id;
    body["step"] = c.step();
    body["policy"] = std::string(to_string(policy));
    body["x_index"] = rec.index;
    body["x_features"] = c.problem().alternatives[rec.index].features;
    body["scores"] = {{"KGDP-f", rec.kgdp_f}, {"KGDP-H", rec.kgdp_h}, {"MaxVar", rec.max_var}};
    return {200, body};
  }

  // Body: {"x_index": m, "y": value, "expected_step": n (optional)}.
  ServiceResponse record_measurement(const std::string& id, const nlohmann::json& body) {
    std::shared_ptr<Slot> slot;
    {
      std::shared_lock lock(registry_mu_);
      auto it = slots_.find(id);
      if (it == slots_.end()) return not_found(id);
      slot = it->second;
    }
    std::unique_lock guard(slot->mutate_mu, std::try_to_lock);
    if (!guard.owns_lock())
      return error(409, "another measurement for this campaign is in flight",
                   slot->get()->campaign->step());
    auto cur = slot->get();
    const std::size_t step = cur->campaign->step();
    if (!body.is_object()) return error(400, "body must be an object", step);
    for (const auto& [k, _] : body.items())
      if (k != "x_index" && k != "y" && k != "expected_step")
        return error(400, "unknown key '" + k + "' (valid: x_index, y, expected_step)", step);
    if (body.contains("expected_step")) {
      if (!is_count(body.at("expected_step")) || body.at("expected_step").get<std::size_t>() != step)
        return error(409, "stale step: campaign is at step " + std::to_string(step), step);
    }
    if (!body.contains("x_index") || !is_count(body.at("x_index")))
      return error(400, "x_index must be a non-negative integer", step);
    const std::size_t x = body.at("x_index").get<std::size_t>();
    if (x >= cur->campaign->problem().alternatives.size())
      return error(422, "x_index " + std::to_string(x) + " out of range", step);
    const auto y = parse_observation(body);
    if (!y) return error(422, "y must be a finite number", step);

    auto next = std::make_shared<Snapshot>(*cur);
    auto engine = std::make_shared<Campaign>(*cur->campaign);
    StepOutcome outcome;
    try {
      outcome = engine->observe(x, *y);
    } catch (const Error& e) {
      return error(422, e.what(), step);
    }
    next->campaign = engine;
    if (outcome.resampled) ++next->resample_count;
    next->events.push_back({{"type", "measurement"},
                            {"step", engine->step()},
                            {"x_index", x},
                            {"y", *y},
                            {"resampled", outcome.resampled},
                            {"resample_capped", outcome.capped}});
    persist(*next);
    if (fault_ == FaultPoint::kAfterPersist) throw InjectedCrash("injected crash after persist");
    slot->set(next);

    nlohmann::json resp = summary(*next);
    resp["resampled"] = outcome.resampled;
    resp["resample_capped"] = outcome.capped;
    resp["x_index"] = x;
    resp["y"] = *y;
    return {200, resp};
  }

 private:
  struct Snapshot {
    std::string id;
    std::string idempotency_key;
    ExperimentConfig config;
    std::shared_ptr<const Campaign> campaign;
    nlohmann::json events = nlohmann::json::array();
    std::size_t resample_count = 0;
  };

  struct Slot {
    std::mutex mutate_mu;
    mutable std::shared_mutex state_mu;
    std::shared_ptr<const Snapshot> current;

    std::shared_ptr<const Snapshot> get() const {
      std::shared_lock lock(state_mu);
      return current;
    }
    void set(std::shared_ptr<const Snapshot> s) {
      std::unique_lock lock(state_mu);
      current = std::move(s);
    }
  };

  static std::string make_id(std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "cmp-%06zu", n);
    return buf;
  }

  static std::size_t id_number(const std::string& id) {
    if (id.rfind("cmp-", 0) != 0) return 0;
    return static_cast<std::size_t>(std::strtoull(id.c_str() + 4, nullptr, 10));
  }

  // Live campaigns have no truth: sigma must be explicit.
  static ExperimentConfig campaign_config(const nlohmann::json& doc) {
    nlohmann::json d = doc;
    if (!d.is_object()) throw ConfigError("", "config must be an object");
    if (d.contains("truth_mode") && d.at("truth_mode") != "external")
      throw ConfigError("(/truth_mode)", "live campaigns use truth_mode external");
    if (!d.contains("sigma"))
      throw ConfigError("(/sigma)", "live campaigns need an explicit sigma (noise_level needs a known truth)");
    if (d.contains("truth")) throw ConfigError("(/truth)", "live campaigns have no known truth");
    d["truth_mode"] = "external";
    // validation of the external mode requires a truth vector; the value is
    // never used by the service
    if (d.contains("prior") && d["prior"].is_object() && d["prior"].contains("lower"))
      d["truth"] = d["prior"]["lower"];
    ExperimentConfig cfg = config_from_json(d, d.dump(2));
    cfg.truth.reset();
    return cfg;
  }

  static CampaignSettings settings_for(const ExperimentConfig& cfg) {
    CampaignSettings s;
    s.L = cfg.L;
    s.sigma = *cfg.sigma;
    s.quadrature = cfg.quadrature;
    if (cfg.resample_enabled) s.resample = cfg.resample;
    s.score_tolerance = cfg.score_tolerance;
    return s;
  }

  static bool is_count(const nlohmann::json& j) {
    return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0);
  }

  static std::optional<double> parse_observation(const nlohmann::json& body) {
    if (!body.contains("y")) return std::nullopt;
    const auto& y = body.at("y");
    double v = 0.0;
    if (y.is_number()) {
      v = y.get<double>();
    } else if (y.is_string()) {
      try {
        const std::string text = y.get<std::string>();
        std::size_t used = 0;
        v = std::stod(text, &used);
        if (used != text.size()) return std::nullopt;
      } catch (const std::exception&) {
        return std::nullopt;
      }
    } else {
      return std::nullopt;
    }
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  }

  std::shared_ptr<const Snapshot> snapshot_locked(const std::string& id) const {
    auto it = slots_.find(id);
    return it == slots_.end() ? nullptr : it->second->get();
  }

  std::shared_ptr<const Snapshot> find(const std::string& id) const {
    std::shared_lock lock(registry_mu_);
    return snapshot_locked(id);
  }

  static ServiceResponse error(int status, const std::string& msg,
                               std::optional<std::size_t> step = std::nullopt) {
    nlohmann::json body{{"error", msg}};
    if (step) body["step"] = *step;
    return {status, body};
  }

  static ServiceResponse config_error(const ConfigError& e) {
    return {400, {{"error", "invalid config"}, {"fields", {{{"where", e.where()}, {"message", e.what()}}}}}};
  }

  static ServiceResponse not_found(const std::string& id) {
    return error(404, "unknown campaign '" + id + "'");
  }

  static nlohmann::json theta_hat_json(const Campaign& c) {
    if (c.step() == 0) return nullptr;
    const auto est = c.estimates();
    return {{"pool_index", est.theta_hat_index}, {"values", est.theta_hat.values()}};
  }

  static nlohmann::json summary(const Snapshot& s) {
    const Campaign& c = *s.campaign;
    const CandidateSet& cs = c.candidates();
    nlohmann::json weights = nlohmann::json::array();
    for (double w : cs.weights()) weights.push_back(w);
    return {{"id", s.id},
            {"step", c.step()},
            {"L", cs.size()},
            {"M", c.problem().alternatives.size()},
            {"weights", weights},
            {"entropy", entropy(cs)},
            {"x_hat", argmax_lowest(posterior_means(cs))},
            {"theta_hat", theta_hat_json(c)},
            {"resample_count", s.resample_count}};
  }

  static nlohmann::json state_document(const Snapshot& s) {
    const Campaign& c = *s.campaign;
    const CandidateSet& cs = c.candidates();
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["id"] = s.id;
    doc["idempotency_key"] = s.idempotency_key;
    doc["config"] = config_to_json(s.config);
    doc["seed"] = c.seed();
    doc["step"] = c.step();
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& m : c.history()) hist.push_back({{"x_index", m.alt}, {"y", m.y}});
    doc["history"] = hist;
    nlohmann::json cands = nlohmann::json::array();
    for (std::size_t i = 0; i < cs.size(); ++i)
      cands.push_back({{"pool_index", cs.pool_index(i)},
                       {"theta", cs.candidate(i).values()},
                       {"log_weight", detail::log_weight_to_json(cs.log_weight(i))},
                       {"log_posterior", detail::log_weight_to_json(cs.log_posterior()[i])},
                       {"weight", cs.weight(i)}});
    doc["candidates"] = cands;
    doc["entropy"] = entropy(cs);
    doc["posterior_mean"] = posterior_means(cs);
    doc["x_hat"] = argmax_lowest(posterior_means(cs));
    doc["theta_hat"] = theta_hat_json(c);
    doc["resample_count"] = s.resample_count;
    doc["events"] = s.events;
    return doc;
  }

  // Rebuilds a snapshot and checks that the stored weights agree with a
  // batch reweighting of the stored candidates over the stored history.
  std::shared_ptr<const Snapshot> load_snapshot(const nlohmann::json& doc,
                                                const std::filesystem::path& from) const {
    auto s = std::make_shared<Snapshot>();
    try {
      s->id = doc.at("id").get<std::string>();
      s->idempotency_key = doc.value("idempotency_key", std::string());
      nlohmann::json cfg_doc = doc.at("config");
      cfg_doc.erase("truth");
      cfg_doc.erase("truth_mode");
      s->config = campaign_config(cfg_doc);
      s->events = doc.at("events");
      s->resample_count = doc.at("resample_count").get<std::size_t>();
      MeasurementHistory hist;
      for (const auto& h : doc.at("history"))
        hist.push_back({h.at("x_index").get<std::size_t>(), h.at("y").get<double>()});
      std::vector<std::size_t> idx;
      std::vector<double> lw;
      std::vector<double> stored;
      for (const auto& cj : doc.at("candidates")) {
        idx.push_back(cj.at("pool_index").get<std::size_t>());
        stored.push_back(detail::log_weight_from_json(cj.at("log_weight")));
        lw.push_back(cj.contains("log_posterior") ? detail::log_weight_from_json(cj.at("log_posterior"))
                                                  : stored.back());
      }
      auto problem = build_problem(s->config);
      auto engine = Campaign::restore(problem, settings_for(s->config), doc.at("seed").get<std::uint64_t>(),
                                      hist, idx, lw);
      if (engine.step() != doc.at("step").get<std::size_t>()) throw Error("step counter disagrees with history");
      std::vector<ParameterVector> cands;
      for (std::size_t k : idx) cands.push_back(problem->pool.at(k));
      const auto check = batch_update(cands, engine.history(), problem->model, problem->alternatives,
                                      engine.noise());
      auto agree = [](double a, double b) { return a == b || std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); };
      for (std::size_t i = 0; i < lw.size(); ++i) {
        if (!agree(engine.candidates().log_weight(i), check.log_weight(i)))
          throw Error("stored weights are inconsistent with the measurement history");
        if (!agree(stored[i], engine.candidates().log_weight(i)))
          throw Error("stored weights are inconsistent with the stored log posterior");
      }
      s->campaign = std::make_shared<const Campaign>(std::move(engine));
    } catch (const std::exception& e) {
      throw Error("cannot load campaign state " + from.string() + ": " + e.what());
    }
    return s;
  }

  void persist(const Snapshot& s) const {
    detail::atomic_write(dir_ / (s.id + ".json"), state_document(s).dump(2), fault_);
  }

  std::filesystem::path dir_;
  mutable std::shared_mutex registry_mu_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
  std::map<std::string, std::string> by_key_;
  std::size_t next_id_ = 1;
  FaultPoint fault_ = FaultPoint::kNone;
};

}  // namespace kgdp

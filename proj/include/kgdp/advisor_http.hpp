#pragma once

// HTTP/JSON binding of AdvisorService.
//
//   POST /campaigns                              create (Idempotency-Key header or body key)
//   GET  /campaigns                              list
//   GET  /campaigns/:id                          summary
//   GET  /campaigns/:id/recommendation?policy=   next experiment and all scores
//   POST /campaigns/:id/measurements             record {x_index, y, expected_step}
//   GET  /campaigns/:id/state                    full persisted document

#include <regex>
#include <string>

// Before httplib: <resolv.h> defines a `_res` macro that breaks Eigen.
#include "kgdp/advisor.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace kgdp {

namespace detail {

inline void send(httplib::Response& res, const ServiceResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

// Bare NaN / Infinity tokens (as emitted by e.g. Python's json module)
// become strings, so a non-finite measurement is reported as such.
inline std::string quote_nonfinite_literals(const std::string& body) {
  static const std::regex token(R"((-?Infinity|NaN)(?=\s*[,}\]]))");
  return std::regex_replace(body, token, "\"$1\"");
}

inline bool parse_body(const httplib::Request& req, httplib::Response& res, nlohmann::json& out,
                       bool allow_nonfinite = false) {
  try {
    out = nlohmann::json::parse(req.body);
    return true;
  } catch (const nlohmann::json::parse_error& e) {
    if (allow_nonfinite) {
      out = nlohmann::json::parse(quote_nonfinite_literals(req.body), nullptr, false);
      if (!out.is_discarded()) return true;
    }
    send(res, {400, {{"error", std::string("malformed JSON: ") + e.what()}}});
    return false;
  }
}

}  // namespace detail

inline void install_routes(httplib::Server& server, AdvisorService& service,
                           const std::string& static_dir = {}) {
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    detail::send(res, {500, {{"error", msg}}});
  });

  server.Post("/campaigns", [&service](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    if (!detail::parse_body(req, res, body)) return;
    detail::send(res, service.create_campaign(body, req.get_header_value("Idempotency-Key")));
  });

  server.Get("/campaigns", [&service](const httplib::Request&, httplib::Response& res) {
    detail::send(res, service.list_campaigns());
  });

  server.Get("/campaigns/:id", [&service](const httplib::Request& req, httplib::Response& res) {
    detail::send(res, service.get_campaign(req.path_params.at("id")));
  });

  server.Get("/campaigns/:id/recommendation", [&service](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> policy;
    if (req.has_param("policy")) policy = req.get_param_value("policy");
    detail::send(res, service.recommend(req.path_params.at("id"), policy));
  });

  server.Post("/campaigns/:id/measurements", [&service](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    if (!detail::parse_body(req, res, body, true)) return;
    detail::send(res, service.record_measurement(req.path_params.at("id"), body));
  });

  server.Get("/campaigns/:id/state", [&service](const httplib::Request& req, httplib::Response& res) {
    detail::send(res, service.get_state(req.path_params.at("id")));
  });

  if (!static_dir.empty()) server.set_mount_point("/", static_dir);
}

}  // namespace kgdp

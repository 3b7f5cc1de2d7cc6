#include <thread>

#include <httplib.h>

#include "spatialrel/errors.h"
#include "spatialrel/relation_prior.h"
#include "spatialrel/text.h"

namespace spatialrel {

using nlohmann::json;

namespace {

bool is_transient(int status) { return status == 429 || status >= 500; }

}  // namespace

PriorRecord parse_prior_response(const json& body, const std::string& subject,
                                 const std::string& object, std::size_t top_k) {
  auto fail = [](const std::string& m) -> ProviderError {
    return ProviderError("scoring service schema violation: " + m);
  };
  if (!body.is_object()) throw fail("body is not an object");
  auto preds = body.find("predictions");
  if (preds == body.end() || !preds->is_array()) throw fail("missing predictions array");
  PriorRecord rec{normalize_text(subject), normalize_text(object), {}};
  for (const auto& p : *preds) {
    if (!p.is_object()) throw fail("prediction is not an object");
    auto rel = p.find("relation");
    auto score = p.find("score");
    if (rel == p.end() || !rel->is_string()) throw fail("prediction without a relation string");
    if (score == p.end() || !score->is_number()) throw fail("prediction without a numeric score");
    rec.predictions.push_back({normalize_text(rel->get<std::string>()), score->get<double>()});
  }
  try {
    validate_prior_record(rec, top_k);
  } catch (const ValidationError& e) {
    throw fail(e.what());
  }
  return rec;
}

PriorRecord query_remote(const std::string& endpoint, const std::string& subject,
                         const std::string& object, std::size_t top_k, const RemoteOptions& options) {
  const std::string body = json{{"subject", subject}, {"object", object}, {"top_k", top_k}}.dump();
  auto backoff = options.initial_backoff;
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= options.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(endpoint);
    client.set_connection_timeout(options.timeout);
    client.set_read_timeout(options.timeout);
    auto res = client.Post("/v1/predictions", body, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (is_transient(res->status)) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ProviderError("scoring service returned HTTP " + std::to_string(res->status) + ": " +
                          res->body);
    }
    json parsed;
    try {
      parsed = json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ProviderError(std::string("scoring service schema violation: invalid JSON (") + e.what() + ")");
    }
    return parse_prior_response(parsed, subject, object, top_k);
  }
  throw ProviderError("scoring service at " + endpoint + " unavailable after " +
                      std::to_string(options.max_retries) + " retries: " + last_error);
}

RemotePrior::RemotePrior(std::string endpoint, std::size_t top_k, RemoteOptions options)
    : PriorProvider(top_k),
      endpoint_(std::move(endpoint)),
      options_(options),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(options.max_in_flight, 1, 1024))) {}

PriorRecord RemotePrior::query(const std::string& subject, const std::string& object) const {
  in_flight_.acquire();
  try {
    PriorRecord r = query_remote(endpoint_, subject, object, top_k(), options_);
    in_flight_.release();
    return r;
  } catch (...) {
    in_flight_.release();
    throw;
  }
}

}  // namespace spatialrel

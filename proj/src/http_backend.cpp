#include "five/report.hpp"

#include "five/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace five {

HttpStandardizer::HttpStandardizer(std::string base_url, std::string path, std::string model,
                                   std::string api_key)
    : base_url_(std::move(base_url)),
      path_(std::move(path)),
      model_(std::move(model)),
      api_key_(std::move(api_key)) {}

std::string HttpStandardizer::standardize(const RawReport& report, const PromptTemplate& tmpl) {
  using nlohmann::json;
  httplib::Client client(base_url_);
  client.set_read_timeout(120, 0);
  json body = {{"model", model_},
               {"temperature", 0},
               {"messages", json::array({{{"role", "user"}, {"content", build_query(report, tmpl)}}})}};
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw IoError("standardizer request to " + base_url_ + path_ + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw IoError("standardizer returned HTTP " + std::to_string(res->status) + " for " + report.report_id);
  try {
    return json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError("unexpected standardizer response for " + report.report_id + ": " + e.what());
  }
}

}  // namespace five

#include "vt/client.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "vt/digest.hpp"
#include "vt/table.hpp"

namespace vt {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string base64_encode(std::string_view data) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 2 < data.size()) {
    unsigned v = (static_cast<unsigned char>(data[i]) << 16) |
                 (static_cast<unsigned char>(data[i + 1]) << 8) |
                 static_cast<unsigned char>(data[i + 2]);
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += alphabet[(v >> 6) & 63];
    out += alphabet[v & 63];
    i += 3;
  }
  if (i + 1 == data.size()) {
    unsigned v = static_cast<unsigned char>(data[i]) << 16;
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == data.size()) {
    unsigned v = (static_cast<unsigned char>(data[i]) << 16) |
                 (static_cast<unsigned char>(data[i + 1]) << 8);
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += alphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string prefix;  // path prefix without trailing slash
};

SplitUrl split_url(const std::string& base_url) {
  SplitUrl split;
  std::size_t scheme = base_url.find("://");
  std::size_t path_start =
      scheme == std::string::npos ? base_url.find('/') : base_url.find('/', scheme + 3);
  if (path_start == std::string::npos) {
    split.origin = base_url;
  } else {
    split.origin = base_url.substr(0, path_start);
    split.prefix = base_url.substr(path_start);
  }
  while (!split.prefix.empty() && split.prefix.back() == '/') split.prefix.pop_back();
  return split;
}

std::string format_temperature(double temperature) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.6g", temperature);
  return buffer;
}

json build_body(const EndpointConfig& config, const EndpointRequest& request) {
  json body;
  body["model"] = config.model_name;
  body["temperature"] = request.decode.temperature;
  body["max_tokens"] = request.decode.max_tokens;
  json message;
  message["role"] = "user";
  if (request.image.has_value()) {
    json parts = json::array();
    parts.push_back({{"type", "text"}, {"text", request.rendered_prompt}});
    std::string uri = "data:" + request.image->media_type + ";base64," +
                      base64_encode(request.image->bytes);
    parts.push_back({{"type", "image_url"}, {"image_url", {{"url", uri}}}});
    message["content"] = std::move(parts);
  } else {
    message["content"] = request.rendered_prompt;
  }
  body["messages"] = json::array({std::move(message)});
  return body;
}

bool retryable_status(int status) {
  return status == 429 || status == 500 || status == 502 || status == 503 || status == 504;
}

}  // namespace

const char* to_string(CallError error) {
  switch (error) {
    case CallError::auth: return "auth";
    case CallError::rate_limited: return "rate_limited";
    case CallError::timeout: return "timeout";
    case CallError::bad_response: return "bad_response";
    case CallError::content_filtered: return "content_filtered";
    case CallError::transport: return "transport";
  }
  return "unknown";
}

void CostLedger::record(const std::string& endpoint_key, const Usage& usage, double cost,
                        bool cache_hit) {
  std::lock_guard<std::mutex> lock(mutex_);
  Totals& totals = per_endpoint_[endpoint_key];
  if (cache_hit) {
    ++totals.cache_hits;
    return;
  }
  ++totals.requests;
  totals.tokens_in += usage.tokens_in;
  totals.tokens_out += usage.tokens_out;
  totals.cost += cost;
}

CostLedger::Totals CostLedger::totals(const std::string& endpoint_key) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = per_endpoint_.find(endpoint_key);
  return it == per_endpoint_.end() ? Totals{} : it->second;
}

CostLedger::Totals CostLedger::grand_total() const {
  std::lock_guard<std::mutex> lock(mutex_);
  Totals sum;
  for (const auto& [key, totals] : per_endpoint_) {
    sum.requests += totals.requests;
    sum.cache_hits += totals.cache_hits;
    sum.tokens_in += totals.tokens_in;
    sum.tokens_out += totals.tokens_out;
    sum.cost += totals.cost;
  }
  return sum;
}

nlohmann::ordered_json CostLedger::to_json() const {
  std::lock_guard<std::mutex> lock(mutex_);
  ordered_json out = ordered_json::object();
  for (const auto& [key, totals] : per_endpoint_) {
    out[key] = {{"requests", totals.requests},
                {"cache_hits", totals.cache_hits},
                {"tokens_in", totals.tokens_in},
                {"tokens_out", totals.tokens_out},
                {"cost", totals.cost}};
  }
  return out;
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::string ResponseCache::cache_key(const EndpointConfig& config, const EndpointRequest& request) {
  std::string material;
  material += config.model_name;
  material += '\0';
  material += request.rendered_prompt;
  material += '\0';
  if (request.image.has_value()) {
    material += request.image->media_type;
    material += '\0';
    material += request.image->bytes;
  }
  material += '\0';
  material += format_temperature(request.decode.temperature);
  material += '\0';
  material += std::to_string(request.decode.max_tokens);
  return sha256_hex(material);
}

std::optional<ResponseCache::Entry> ResponseCache::lookup(const std::string& key) const {
  if (!enabled()) return std::nullopt;
  std::filesystem::path file = dir_ / key.substr(0, 2) / (key + ".json");
  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  Entry entry;
  entry.text = j.value("response_text", "");
  entry.usage.tokens_in = j.value("tokens_in", std::int64_t{0});
  entry.usage.tokens_out = j.value("tokens_out", std::int64_t{0});
  return entry;
}

void ResponseCache::store(const std::string& key, const nlohmann::ordered_json& fingerprint,
                          const Entry& entry) const {
  if (!enabled()) return;
  std::filesystem::path shard = dir_ / key.substr(0, 2);
  std::filesystem::create_directories(shard);
  ordered_json j;
  j["fingerprint"] = fingerprint;
  j["response_text"] = entry.text;
  j["tokens_in"] = entry.usage.tokens_in;
  j["tokens_out"] = entry.usage.tokens_out;
  std::filesystem::path file = shard / (key + ".json");
  std::filesystem::path tmp = shard / (key + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    out << j.dump(2) << '\n';
  }
  std::error_code ec;
  std::filesystem::rename(tmp, file, ec);
}

EndpointClient::EndpointClient(EndpointConfig config, ResponseCache* cache, CostLedger* ledger)
    : config_(std::move(config)), cache_(cache), ledger_(ledger) {
  if (config_.max_parallel < 1) throw Error(ErrorKind::config, "max_parallel must be >= 1");
  if (config_.retry.max_attempts < 1) throw Error(ErrorKind::config, "max_attempts must be >= 1");
}

CallResult EndpointClient::network_call(const EndpointRequest& request) {
  SplitUrl url = split_url(config_.base_url);
  std::string path = url.prefix + "/chat/completions";
  std::string body = build_body(config_, request).dump();

  httplib::Headers headers;
  if (!config_.api_key_source.empty()) {
    if (const char* key = std::getenv(config_.api_key_source.c_str()); key != nullptr && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  if (!request.request_id.empty()) headers.emplace("X-Request-Id", request.request_id);

  CallResult result;
  int attempts = 0;
  CallError last_error = CallError::transport;
  std::string last_detail;
  auto started = std::chrono::steady_clock::now();

  while (attempts < config_.retry.max_attempts) {
    ++attempts;
    httplib::Client client(url.origin);
    client.set_connection_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
    client.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
    client.set_write_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);

    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      httplib::Error err = res.error();
      bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
      last_error = timed_out ? CallError::timeout : CallError::transport;
      last_detail = httplib::to_string(err);
    } else if (res->status == 401 || res->status == 403) {
      result.error = CallError::auth;
      result.error_detail = "HTTP " + std::to_string(res->status);
      return result;
    } else if (retryable_status(res->status)) {
      last_error = res->status == 429 ? CallError::rate_limited : CallError::transport;
      last_detail = "HTTP " + std::to_string(res->status);
    } else if (res->status != 200) {
      result.error = CallError::bad_response;
      result.error_detail = "HTTP " + std::to_string(res->status);
      return result;
    } else {
      json reply = json::parse(res->body, nullptr, false);
      if (reply.is_discarded() || !reply.is_object() || !reply.contains("choices") ||
          !reply["choices"].is_array() || reply["choices"].empty()) {
        result.error = CallError::bad_response;
        result.error_detail = "malformed completion envelope";
        return result;
      }
      const json& choice = reply["choices"][0];
      if (choice.value("finish_reason", "") == "content_filter") {
        result.error = CallError::content_filtered;
        result.error_detail = "finish_reason=content_filter";
        return result;
      }
      if (!choice.contains("message") || !choice["message"].contains("content") ||
          !choice["message"]["content"].is_string()) {
        result.error = CallError::bad_response;
        result.error_detail = "missing message content";
        return result;
      }
      EndpointResponse response;
      response.text = choice["message"]["content"].get<std::string>();
      if (reply.contains("usage") && reply["usage"].is_object()) {
        response.usage.tokens_in = reply["usage"].value("prompt_tokens", std::int64_t{0});
        response.usage.tokens_out = reply["usage"].value("completion_tokens", std::int64_t{0});
      }
      response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - started)
                                .count();
      response.attempts = attempts;
      result.response = std::move(response);
      return result;
    }
    if (attempts < config_.retry.max_attempts) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(config_.retry.backoff_base_ms * (1LL << (attempts - 1))));
    }
  }
  result.error = last_error;
  result.error_detail = last_detail + " after " + std::to_string(attempts) + " attempts";
  return result;
}

CallResult EndpointClient::call(const EndpointRequest& request) {
  std::string endpoint_key = config_.base_url + "|" + config_.model_name;
  std::string key;
  if (cache_ != nullptr && cache_->enabled()) {
    key = ResponseCache::cache_key(config_, request);
    if (auto hit = cache_->lookup(key); hit.has_value()) {
      EndpointResponse response;
      response.text = hit->text;
      response.usage = hit->usage;
      response.cache_hit = true;
      response.attempts = 0;
      if (ledger_ != nullptr) ledger_->record(endpoint_key, {}, 0.0, true);
      CallResult result;
      result.response = std::move(response);
      return result;
    }
  }

  CallResult result = network_call(request);
  if (!result.ok()) return result;

  double cost = result.response->usage.tokens_in / 1000.0 * config_.price_per_1k_in +
                result.response->usage.tokens_out / 1000.0 * config_.price_per_1k_out;
  if (ledger_ != nullptr) ledger_->record(endpoint_key, result.response->usage, cost, false);
  if (cache_ != nullptr && cache_->enabled()) {
    ordered_json fingerprint;
    fingerprint["model"] = config_.model_name;
    fingerprint["prompt_sha256"] = sha256_hex(request.rendered_prompt);
    fingerprint["image_sha256"] =
        request.image.has_value() ? sha256_hex(request.image->bytes) : "";
    fingerprint["temperature"] = request.decode.temperature;
    fingerprint["max_tokens"] = request.decode.max_tokens;
    cache_->store(key, fingerprint,
                  ResponseCache::Entry{result.response->text, result.response->usage});
  }
  return result;
}

std::string sanitize_file_stem(std::string_view image_id) {
  std::string out;
  out.reserve(image_id.size());
  for (char c : image_id) {
    bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                c == '.' || c == '-' || c == '_';
    out += safe ? c : '_';
  }
  if (out.empty()) out = "_";
  return out;
}

namespace {

std::filesystem::path item_path(const BatchOptions& options, const std::string& image_id) {
  return options.output_dir / "tables" / (sanitize_file_stem(image_id) + ".json");
}

void persist_item(const BatchOptions& options, const std::string& image_id,
                  const ParseOutcome& outcome, std::size_t slot_index) {
  std::filesystem::path file = item_path(options, image_id);
  std::string payload = "{\"image_id\": \"" + json_escape(image_id) +
                        "\", \"table\": " + canonical_serialize(*outcome.table) +
                        ", \"repairs\": [";
  for (std::size_t i = 0; i < outcome.repairs.size(); ++i) {
    if (i > 0) payload += ", ";
    payload += '"';
    payload += to_string(outcome.repairs[i]);
    payload += '"';
  }
  payload += "]}\n";
  std::filesystem::path tmp = file;
  tmp += ".tmp" + std::to_string(slot_index);
  {
    std::ofstream out(tmp, std::ios::binary);
    out << payload;
  }
  std::filesystem::rename(tmp, file);
}

}  // namespace

BatchReport batch_collect(EndpointClient& client, const std::vector<CollectItem>& items,
                          const BatchOptions& options) {
  std::filesystem::create_directories(options.output_dir / "tables");

  BatchReport report;
  report.items.resize(items.size());

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < items.size(); ++i) {
    BatchItemResult& slot = report.items[i];
    slot.image_id = items[i].image_id;
    if (options.resume && std::filesystem::exists(item_path(options, items[i].image_id))) {
      std::ifstream in(item_path(options, items[i].image_id), std::ios::binary);
      nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
      if (!j.is_discarded() && j.contains("table")) {
        slot.outcome = extract_and_parse(j["table"].dump(), ParsePolicy::lenient);
        slot.from_existing = true;
        ++report.skipped_existing;
        continue;
      }
    }
    pending.push_back(i);
  }

  std::size_t limit = pending.size();
  if (options.stop_after >= 0) {
    limit = std::min<std::size_t>(limit, static_cast<std::size_t>(options.stop_after));
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      std::size_t slot_index = next.fetch_add(1);
      if (slot_index >= limit) break;
      std::size_t i = pending[slot_index];
      const CollectItem& item = items[i];
      BatchItemResult& slot = report.items[i];

      EndpointRequest request;
      request.rendered_prompt = item.rendered_prompt;
      request.image = item.image;
      request.decode = options.decode;
      request.request_id = item.image_id;
      CallResult call_result = client.call(request);
      if (!call_result.ok()) {
        slot.error = call_result.error;
        slot.error_detail = call_result.error_detail;
        continue;
      }
      slot.outcome = extract_and_parse(call_result.response->text, ParsePolicy::lenient);
      if (!slot.outcome.ok()) {
        slot.error = CallError::bad_response;
        slot.error_detail = "response did not parse: " + slot.outcome.error_detail;
        continue;
      }
      persist_item(options, item.image_id, slot.outcome, slot_index);
    }
  };

  std::size_t n_threads = std::min<std::size_t>(
      static_cast<std::size_t>(std::max(1, client.config().max_parallel)), std::max<std::size_t>(limit, 1));
  std::vector<std::thread> threads;
  threads.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();

  for (std::size_t slot_index = limit; slot_index < pending.size(); ++slot_index) {
    BatchItemResult& slot = report.items[pending[slot_index]];
    slot.error_detail = "not attempted this run (stop_after)";
  }

  for (const BatchItemResult& slot : report.items) {
    if (slot.from_existing) continue;
    if (slot.outcome.ok()) {
      ++report.succeeded;
    } else if (slot.error.has_value()) {
      ++report.failed;
    }
  }
  return report;
}

}  // namespace vt

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vt/error.hpp"
#include "vt/parse.hpp"

namespace vt {

struct RetryPolicy {
  int max_attempts = 3;      // >= 1
  int backoff_base_ms = 250; // doubled per retry
};

struct EndpointConfig {
  std::string base_url;  // e.g. "http://127.0.0.1:8807/v1"
  std::string model_name;
  std::string api_key_source = "OPENAI_API_KEY";  // environment variable NAME
  int max_parallel = 4;                           // >= 1
  int timeout_ms = 60'000;
  RetryPolicy retry;
  double price_per_1k_in = 0.0;
  double price_per_1k_out = 0.0;
};

struct DecodeParams {
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct ImagePayload {
  std::string bytes;       // raw image bytes, base64-encoded on the wire
  std::string media_type;  // e.g. "image/png"
};

// One chat-style call. Vision calls (collection/generation) carry an image;
// judge and other text calls must leave it empty.
struct EndpointRequest {
  std::string rendered_prompt;
  std::optional<ImagePayload> image;
  DecodeParams decode;
  std::string request_id;
};

struct Usage {
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
};

enum class CallError { auth, rate_limited, timeout, bad_response, content_filtered, transport };

const char* to_string(CallError error);

struct EndpointResponse {
  std::string text;
  Usage usage;
  std::int64_t latency_ms = 0;
  bool cache_hit = false;  // implies zero incremental cost
  int attempts = 0;        // network attempts made (0 for a cache hit)
};

struct CallResult {
  std::optional<EndpointResponse> response;
  std::optional<CallError> error;
  std::string error_detail;

  bool ok() const { return response.has_value(); }
};

// Thread-safe running totals. Network tokens and cost only; cache hits are
// counted separately so final cost always equals the closed-form
// sum(tokens_in/1000*price_in + tokens_out/1000*price_out) over misses.
class CostLedger {
 public:
  struct Totals {
    std::int64_t requests = 0;
    std::int64_t cache_hits = 0;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    double cost = 0.0;
  };

  void record(const std::string& endpoint_key, const Usage& usage, double cost, bool cache_hit);
  Totals totals(const std::string& endpoint_key) const;
  Totals grand_total() const;
  nlohmann::ordered_json to_json() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Totals> per_endpoint_;
};

// Content-addressed disk cache: cache/<hh>/<hash>.json holding the request
// fingerprint, response text and usage. Thread-safe; a default-constructed
// cache is disabled.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path dir);

  bool enabled() const { return !dir_.empty(); }

  struct Entry {
    std::string text;
    Usage usage;
  };

  std::optional<Entry> lookup(const std::string& key) const;
  void store(const std::string& key, const nlohmann::ordered_json& fingerprint,
             const Entry& entry) const;

  // sha256 over (model_name, rendered_prompt, image bytes, decode_params)
  static std::string cache_key(const EndpointConfig& config, const EndpointRequest& request);

 private:
  std::filesystem::path dir_;
};

// Chat-completions client with bounded-parallel batching, retrying, caching
// and cost accounting. Retries rate limits, transient server errors and
// transport failures with exponential backoff.
class EndpointClient {
 public:
  EndpointClient(EndpointConfig config, ResponseCache* cache = nullptr,
                 CostLedger* ledger = nullptr);

  const EndpointConfig& config() const { return config_; }

  CallResult call(const EndpointRequest& request);

 private:
  CallResult network_call(const EndpointRequest& request);

  EndpointConfig config_;
  ResponseCache* cache_ = nullptr;
  CostLedger* ledger_ = nullptr;
};

struct CollectItem {
  std::string image_id;
  std::optional<ImagePayload> image;
  std::string rendered_prompt;
};

struct BatchOptions {
  std::filesystem::path output_dir;  // per-item results under <dir>/tables/
  DecodeParams decode;
  bool resume = true;     // skip image_ids already persisted
  int stop_after = -1;    // process at most N new items this run (checkpointing hook)
};

struct BatchItemResult {
  std::string image_id;
  ParseOutcome outcome;
  std::optional<CallError> error;
  std::string error_detail;
  bool from_existing = false;  // satisfied by a previously persisted result
};

struct BatchReport {
  std::vector<BatchItemResult> items;  // submission order
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  std::size_t skipped_existing = 0;
};

// Issues calls with at most config.max_parallel in flight, pipes each raw
// response through the lenient parser, and persists every success to
// <output_dir>/tables/<image_id>.json as {"image_id", "table", "repairs"}.
// Per-item failures are reported without aborting the batch; re-running with
// resume skips persisted items, so an interrupted run converges to the same
// output set as an uninterrupted one.
BatchReport batch_collect(EndpointClient& client, const std::vector<CollectItem>& items,
                          const BatchOptions& options);

// file-name-safe form of an image id (used for the per-item result files)
std::string sanitize_file_stem(std::string_view image_id);

}  // namespace vt

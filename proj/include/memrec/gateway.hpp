#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <vector>

#include "memrec/http_transport.hpp"
#include "memrec/prompting.hpp"
#include "memrec/retry.hpp"

namespace memrec {

// Structured facts about a request that stub backends may use instead of
// reading prompt prose. Remote backends ignore it.
struct RequestContext {
  std::string user_id;
  std::vector<double> shown_ratings;
  GenreList target_genres;
};

struct CompletionRequest {
  PromptBundle bundle;
  double temperature = 0.0;
  int max_reply_tokens = 16;
  std::string tag;
  RequestContext context;
};

struct CompletionResult {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t reply_tokens = 0;
  std::string provider;
  std::int64_t latency_ms = 0;
};

struct PriceTable {
  double prompt_per_million = 0.50;
  double reply_per_million = 1.50;

  double cost(std::int64_t prompt_tokens, std::int64_t reply_tokens) const {
    return static_cast<double>(prompt_tokens) * prompt_per_million / 1e6 +
           static_cast<double>(reply_tokens) * reply_per_million / 1e6;
  }
};

struct LedgerEntry {
  std::string tag;
  std::int64_t prompt_tokens = 0;
  std::int64_t reply_tokens = 0;
  double dollars = 0.0;
};

struct UsageTotals {
  std::int64_t calls = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t reply_tokens = 0;
  double dollars = 0.0;
};

// Append-only record of token usage. Appends are atomic.
class UsageLedger {
 public:
  explicit UsageLedger(PriceTable prices = {}) : prices_(prices) {}

  void record(const std::string& tag, std::int64_t prompt_tokens, std::int64_t reply_tokens);
  std::vector<LedgerEntry> entries() const;
  const PriceTable& prices() const { return prices_; }
  double total_dollars() const;
  UsageTotals totals() const;
  std::map<std::string, UsageTotals> totals_by_tag() const;

 private:
  PriceTable prices_;
  mutable std::mutex mutex_;
  std::vector<LedgerEntry> entries_;
};

// total dollars / users / (history_increment / 10)
double ledger_cost_per_10_history(const UsageLedger& ledger, int users, int history_increment);
double cost_per_10_history(double total_dollars, int users, int history_increment);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  virtual CompletionResult complete(const CompletionRequest& request) = 0;
  virtual std::string name() const = 0;
};

// Stable hash of what a provider would see: roles, contents, temperature
// and reply budget. Keys scripted replay files.
std::string request_hash(const CompletionRequest& request);

// Ordered request-hash -> reply pairs, stored as JSON lines
//   {"request_hash": "...", "reply": "..."}
class ReplayScript {
 public:
  static ReplayScript load(const std::filesystem::path& path);
  void add(std::string hash, std::string reply);
  void save(const std::filesystem::path& path) const;
  const std::string* find(const std::string& hash) const;
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<std::pair<std::string, std::string>> order_;
  std::map<std::string, std::size_t> index_;
};

// user id -> (genre label -> rating). The "*" user applies to everyone
// without an entry of their own.
using PreferenceMap = std::map<std::string, std::map<std::string, double>>;

class StubPolicy {
 public:
  enum class Kind { constant, echo_mean_of_memory, scripted, genre_oracle };

  static StubPolicy constant(double value);
  // Mean of the ratings shown to the model; `empty_fallback` when none.
  static StubPolicy echo_mean_of_memory(double empty_fallback = 3.0);
  static StubPolicy scripted(ReplayScript script);
  static StubPolicy genre_oracle(PreferenceMap preferences, double unknown_fallback = 3.0);
  // "constant:3", "echo-mean", "scripted:<file>", "genre-oracle:<file>"
  static StubPolicy parse(const std::string& spec);

  Kind kind() const { return kind_; }
  std::string describe() const;
  std::string reply(const CompletionRequest& request) const;

 private:
  Kind kind_ = Kind::constant;
  double value_ = 3.0;
  std::shared_ptr<const ReplayScript> script_;
  std::shared_ptr<const PreferenceMap> preferences_;
  std::string source_;
};

// Reply for a mean-style stub: shortest round-trip decimal with at least one
// fractional digit ("3.0", "3.3333333333333335").
std::string format_mean_reply(double value);

class StubBackend final : public ChatBackend {
 public:
  explicit StubBackend(StubPolicy policy) : policy_(std::move(policy)) {}

  CompletionResult complete(const CompletionRequest& request) override;
  std::string name() const override { return "stub:" + policy_.describe(); }

 private:
  StubPolicy policy_;
};

struct RemoteChatConfig {
  std::string url = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key;
  std::chrono::milliseconds timeout{60'000};
};

// Chat-completions wire format:
//   request  {"model", "messages": [{"role","content"}], "temperature", "max_tokens"}
//   response {"choices": [{"message": {"content"}}], "usage": {"prompt_tokens","completion_tokens"}}
class RemoteChatBackend final : public ChatBackend {
 public:
  RemoteChatBackend(RemoteChatConfig config, std::shared_ptr<HttpTransport> transport,
                    RetryPolicy retry);

  CompletionResult complete(const CompletionRequest& request) override;
  std::string name() const override { return "remote:" + config_.model; }

 private:
  RemoteChatConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  RetryPolicy retry_;
};

// Front door for every model call: caps requests in flight and writes each
// completed call to the usage ledger.
class Gateway {
 public:
  static constexpr std::ptrdiff_t kMaxInFlightLimit = 256;

  Gateway(std::shared_ptr<ChatBackend> backend, PriceTable prices = {}, int max_in_flight = 4);

  CompletionResult complete(const CompletionRequest& request);

  UsageLedger& ledger() { return ledger_; }
  const UsageLedger& ledger() const { return ledger_; }
  std::string provider_name() const { return backend_->name(); }
  int max_in_flight() const { return max_in_flight_; }

 private:
  std::shared_ptr<ChatBackend> backend_;
  UsageLedger ledger_;
  int max_in_flight_;
  std::counting_semaphore<kMaxInFlightLimit> slots_;
};

}  // namespace memrec

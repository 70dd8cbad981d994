#include "memrec/gateway.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "memrec/error.hpp"
#include "memrec/text.hpp"

namespace memrec {

void UsageLedger::record(const std::string& tag, std::int64_t prompt_tokens,
                         std::int64_t reply_tokens) {
  LedgerEntry e{tag, prompt_tokens, reply_tokens, prices_.cost(prompt_tokens, reply_tokens)};
  std::lock_guard lock(mutex_);
  entries_.push_back(std::move(e));
}

std::vector<LedgerEntry> UsageLedger::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

double UsageLedger::total_dollars() const {
  std::lock_guard lock(mutex_);
  double total = 0.0;
  for (const auto& e : entries_) total += e.dollars;
  return total;
}

UsageTotals UsageLedger::totals() const {
  std::lock_guard lock(mutex_);
  UsageTotals t;
  for (const auto& e : entries_) {
    ++t.calls;
    t.prompt_tokens += e.prompt_tokens;
    t.reply_tokens += e.reply_tokens;
    t.dollars += e.dollars;
  }
  return t;
}

std::map<std::string, UsageTotals> UsageLedger::totals_by_tag() const {
  std::lock_guard lock(mutex_);
  std::map<std::string, UsageTotals> out;
  for (const auto& e : entries_) {
    auto& t = out[e.tag];
    ++t.calls;
    t.prompt_tokens += e.prompt_tokens;
    t.reply_tokens += e.reply_tokens;
    t.dollars += e.dollars;
  }
  return out;
}

double cost_per_10_history(double total_dollars, int users, int history_increment) {
  if (users < 1) throw Error(ErrorCode::validation, "users must be at least 1");
  if (history_increment < 1) throw Error(ErrorCode::validation, "history_increment must be positive");
  return total_dollars / users / (static_cast<double>(history_increment) / 10.0);
}

double ledger_cost_per_10_history(const UsageLedger& ledger, int users, int history_increment) {
  return cost_per_10_history(ledger.total_dollars(), users, history_increment);
}

std::string request_hash(const CompletionRequest& request) {
  nlohmann::json doc;
  doc["messages"] = nlohmann::json::array();
  for (const auto& m : request.bundle.messages) {
    doc["messages"].push_back({std::string(role_name(m.role)), m.content});
  }
  doc["temperature"] = request.temperature;
  doc["max_reply_tokens"] = request.max_reply_tokens;
  return hex64(fnv1a64(doc.dump()));
}

ReplayScript ReplayScript::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open replay file " + path.string());
  ReplayScript script;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      script.add(doc.at("request_hash").get<std::string>(), doc.at("reply").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::validation,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return script;
}

void ReplayScript::add(std::string hash, std::string reply) {
  if (const auto* existing = find(hash)) {
    if (*existing != reply) {
      throw Error(ErrorCode::validation, "replay hash " + hash + " maps to two different replies");
    }
    return;
  }
  index_.emplace(hash, order_.size());
  order_.emplace_back(std::move(hash), std::move(reply));
}

void ReplayScript::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& [hash, reply] : order_) {
    out << nlohmann::json{{"request_hash", hash}, {"reply", reply}}.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::storage_unavailable, "cannot write " + path.string());
}

const std::string* ReplayScript::find(const std::string& hash) const {
  const auto it = index_.find(hash);
  return it == index_.end() ? nullptr : &order_[it->second].second;
}

std::string format_mean_reply(double value) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  std::string out(buf.data(), res.ptr);
  if (out.find_first_of(".eE") == std::string::npos) out += ".0";
  return out;
}

StubPolicy StubPolicy::constant(double value) {
  StubPolicy p;
  p.kind_ = Kind::constant;
  p.value_ = value;
  return p;
}

StubPolicy StubPolicy::echo_mean_of_memory(double empty_fallback) {
  StubPolicy p;
  p.kind_ = Kind::echo_mean_of_memory;
  p.value_ = empty_fallback;
  return p;
}

StubPolicy StubPolicy::scripted(ReplayScript script) {
  StubPolicy p;
  p.kind_ = Kind::scripted;
  p.script_ = std::make_shared<const ReplayScript>(std::move(script));
  return p;
}

StubPolicy StubPolicy::genre_oracle(PreferenceMap preferences, double unknown_fallback) {
  StubPolicy p;
  p.kind_ = Kind::genre_oracle;
  PreferenceMap normalized;
  for (const auto& [user, genres] : preferences) {
    for (const auto& [genre, rating] : genres) normalized[user][normalize_genre(genre)] = rating;
  }
  p.preferences_ = std::make_shared<const PreferenceMap>(std::move(normalized));
  p.value_ = unknown_fallback;
  return p;
}

StubPolicy StubPolicy::parse(const std::string& spec) {
  const auto colon = spec.find(':');
  const auto kind = spec.substr(0, colon);
  const auto arg = colon == std::string::npos ? std::string{} : spec.substr(colon + 1);
  StubPolicy p;
  if (kind == "constant") {
    double value = 0;
    const auto res = std::from_chars(arg.data(), arg.data() + arg.size(), value);
    if (arg.empty() || res.ec != std::errc{} || res.ptr != arg.data() + arg.size()) {
      throw Error(ErrorCode::config_error, "constant stub needs a number, got '" + arg + "'");
    }
    if (value < 1.0 || value > 5.0) {
      throw Error(ErrorCode::config_error, "constant stub rating must be within 1 to 5, got " + arg);
    }
    p = constant(value);
  } else if (kind == "echo-mean" || kind == "echo_mean_of_memory") {
    p = echo_mean_of_memory();
  } else if (kind == "scripted") {
    p = scripted(ReplayScript::load(arg));
  } else if (kind == "genre-oracle" || kind == "genre_oracle") {
    std::ifstream in(arg);
    if (!in) throw Error(ErrorCode::missing_file, "cannot open preference map " + arg);
    try {
      p = genre_oracle(nlohmann::json::parse(in).get<PreferenceMap>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::config_error, "bad preference map " + arg + ": " + e.what());
    }
  } else {
    throw Error(ErrorCode::config_error, "unknown stub policy '" + spec + "'");
  }
  p.source_ = arg;
  return p;
}

std::string StubPolicy::describe() const {
  switch (kind_) {
    case Kind::constant: return "constant:" + format_number(value_);
    case Kind::echo_mean_of_memory: return "echo-mean";
    case Kind::scripted: return "scripted:" + source_;
    case Kind::genre_oracle: return "genre-oracle:" + source_;
  }
  return "stub";
}

std::string StubPolicy::reply(const CompletionRequest& request) const {
  switch (kind_) {
    case Kind::constant: return format_number(value_);
    case Kind::echo_mean_of_memory: {
      const auto& r = request.context.shown_ratings;
      if (r.empty()) return format_mean_reply(value_);
      return format_mean_reply(std::accumulate(r.begin(), r.end(), 0.0) /
                               static_cast<double>(r.size()));
    }
    case Kind::scripted: {
      const auto hash = request_hash(request);
      if (const auto* reply = script_->find(hash)) return *reply;
      throw Error(ErrorCode::replay_exhausted, "replay script has no reply for request " + hash);
    }
    case Kind::genre_oracle: {
      auto it = preferences_->find(request.context.user_id);
      if (it == preferences_->end()) it = preferences_->find("*");
      double sum = 0.0;
      int n = 0;
      if (it != preferences_->end()) {
        for (const auto& g : request.context.target_genres) {
          const auto pref = it->second.find(normalize_genre(g));
          if (pref == it->second.end()) continue;
          sum += pref->second;
          ++n;
        }
      }
      return format_mean_reply(n == 0 ? value_ : sum / n);
    }
  }
  return {};
}

CompletionResult StubBackend::complete(const CompletionRequest& request) {
  CompletionResult result;
  result.text = policy_.reply(request);
  result.prompt_tokens = static_cast<std::int64_t>(estimate_tokens(request.bundle.messages));
  result.reply_tokens = static_cast<std::int64_t>(estimate_tokens(result.text));
  result.provider = name();
  return result;
}

RemoteChatBackend::RemoteChatBackend(RemoteChatConfig config,
                                     std::shared_ptr<HttpTransport> transport, RetryPolicy retry)
    : config_(std::move(config)), transport_(std::move(transport)), retry_(std::move(retry)) {
  if (!transport_) throw Error(ErrorCode::config_error, "remote backend needs a transport");
}

CompletionResult RemoteChatBackend::complete(const CompletionRequest& request) {
  nlohmann::json body;
  body["model"] = config_.model;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : request.bundle.messages) {
    body["messages"].push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_reply_tokens;

  HttpRequest http;
  http.url = config_.url;
  http.timeout = config_.timeout;
  http.body = body.dump();
  if (!config_.api_key.empty()) http.headers.emplace_back("Authorization", "Bearer " + config_.api_key);

  const auto started = std::chrono::steady_clock::now();
  auto result = with_retries(retry_, "chat completion", [&] {
    const auto response = transport_->post(http);
    if (is_retryable_status(response.status)) {
      throw Error(ErrorCode::provider_unavailable,
                  "chat endpoint returned HTTP " + std::to_string(response.status));
    }
    if (response.status != 200) {
      throw Error(ErrorCode::validation, "chat endpoint returned HTTP " +
                                             std::to_string(response.status) + ": " + response.body);
    }
    CompletionResult r;
    try {
      const auto doc = nlohmann::json::parse(response.body);
      const auto& content = doc.at("choices").at(0).at("message").at("content");
      r.text = content.is_string() ? content.get<std::string>() : std::string{};
      if (const auto usage = doc.find("usage"); usage != doc.end() && usage->is_object()) {
        r.prompt_tokens = usage->value("prompt_tokens", std::int64_t{-1});
        r.reply_tokens = usage->value("completion_tokens", std::int64_t{-1});
      } else {
        r.prompt_tokens = r.reply_tokens = -1;
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::provider_unavailable,
                  std::string("unreadable chat response: ") + e.what());
    }
    if (r.text.empty()) throw Error(ErrorCode::provider_unavailable, "chat response had no text");
    return r;
  });
  if (result.prompt_tokens < 0) {
    result.prompt_tokens = static_cast<std::int64_t>(estimate_tokens(request.bundle.messages));
  }
  if (result.reply_tokens < 0) {
    result.reply_tokens = static_cast<std::int64_t>(estimate_tokens(result.text));
  }
  result.provider = name();
  result.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  return result;
}

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, PriceTable prices, int max_in_flight)
    : backend_(std::move(backend)),
      ledger_(prices),
      max_in_flight_(max_in_flight),
      slots_(std::clamp<std::ptrdiff_t>(max_in_flight, 1, kMaxInFlightLimit)) {
  if (!backend_) throw Error(ErrorCode::config_error, "gateway needs a backend");
  if (max_in_flight < 1 || max_in_flight > kMaxInFlightLimit) {
    throw Error(ErrorCode::config_error, "max_in_flight must be between 1 and " +
                                             std::to_string(kMaxInFlightLimit));
  }
}

CompletionResult Gateway::complete(const CompletionRequest& request) {
  if (request.bundle.messages.empty() || request.bundle.messages.front().role != Role::system) {
    throw Error(ErrorCode::validation, "prompt bundle must start with a system message");
  }
  if (request.temperature < 0.0) throw Error(ErrorCode::validation, "temperature must be >= 0");
  if (request.max_reply_tokens < 1) throw Error(ErrorCode::validation, "max_reply_tokens must be >= 1");

  struct Slot {
    std::counting_semaphore<kMaxInFlightLimit>& s;
    explicit Slot(std::counting_semaphore<kMaxInFlightLimit>& sem) : s(sem) { s.acquire(); }
    ~Slot() { s.release(); }
  } slot(slots_);

  const auto started = std::chrono::steady_clock::now();
  auto result = backend_->complete(request);
  if (result.latency_ms == 0) {
    result.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - started)
                            .count();
  }
  ledger_.record(request.tag, result.prompt_tokens, result.reply_tokens);
  return result;
}

}  // namespace memrec

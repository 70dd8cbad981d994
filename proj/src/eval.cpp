#include "memrec/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "memrec/error.hpp"
#include "memrec/text.hpp"

namespace memrec {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

double mae(const std::vector<double>& predictions, const std::vector<double>& truths) {
  if (predictions.size() != truths.size()) {
    throw Error(ErrorCode::length_mismatch, std::to_string(predictions.size()) + " predictions vs " +
                                                std::to_string(truths.size()) + " truths");
  }
  if (predictions.empty()) throw Error(ErrorCode::empty_input, "mae of no predictions");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) sum += std::abs(predictions[i] - truths[i]);
  return sum / static_cast<double>(predictions.size());
}

std::string_view protocol_name(Protocol protocol) {
  return protocol == Protocol::single_domain ? "single_domain" : "cross_domain";
}

std::string_view recommender_name(Recommender recommender) {
  return recommender == Recommender::map ? "map" : "baseline";
}

Protocol parse_protocol(std::string_view text) {
  const auto t = to_lower_ascii(trim(text));
  if (t == "single_domain" || t == "single") return Protocol::single_domain;
  if (t == "cross_domain" || t == "cross") return Protocol::cross_domain;
  throw Error(ErrorCode::validation, "unknown protocol: " + std::string(text));
}

Recommender parse_recommender(std::string_view text) {
  const auto t = to_lower_ascii(trim(text));
  if (t == "map") return Recommender::map;
  if (t == "baseline" || t == "vanilla") return Recommender::baseline;
  throw Error(ErrorCode::validation, "unknown recommender: " + std::string(text));
}

std::optional<double> EvalReport::mae_at(int history_size) const {
  for (const auto& s : by_size) {
    if (s.history_size == history_size) return s.mae;
  }
  return std::nullopt;
}

std::vector<InteractionRecord> shuffled_history(std::vector<InteractionRecord> history,
                                                std::uint64_t seed, const std::string& user_id) {
  // splitmix64 finalizer over the pair keeps per-user orders independent
  std::uint64_t z = seed ^ fnv1a64(user_id);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  std::mt19937_64 rng(z);
  for (std::size_t i = history.size(); i > 1; --i) {
    std::swap(history[i - 1], history[rng() % i]);
  }
  return history;
}

std::vector<SizeStats> stats_by_size(const std::vector<PredictionTrace>& traces) {
  struct Acc {
    double sum = 0.0;
    double clean_sum = 0.0;
    std::size_t n = 0;
    std::size_t imputed = 0;
  };
  std::map<int, Acc> acc;
  for (const auto& t : traces) {
    auto& a = acc[t.history_size];
    const double err = std::abs(t.predicted - t.truth);
    a.sum += err;
    ++a.n;
    if (t.imputed) {
      ++a.imputed;
    } else {
      a.clean_sum += err;
    }
  }
  std::vector<SizeStats> out;
  for (const auto& [size, a] : acc) {
    SizeStats s;
    s.history_size = size;
    s.traces = a.n;
    s.imputed = a.imputed;
    s.mae = a.sum / static_cast<double>(a.n);
    if (a.n > a.imputed) s.mae_excluding_imputed = a.clean_sum / static_cast<double>(a.n - a.imputed);
    out.push_back(s);
  }
  return out;
}

EvalHarness::EvalHarness(Gateway& gateway, PromptBuilder prompts)
    : gateway_(gateway), prompts_(std::move(prompts)) {}

ojson EvalHarness::describe(const ProtocolConfig& config,
                            const std::vector<PreparedUser>& users) const {
  ojson doc;
  doc["protocol"] = protocol_name(config.protocol);
  doc["recommender"] = recommender_name(config.recommender);
  if (config.recommender == Recommender::map) {
    doc["retrieval"] = {{"k", config.retrieval.k},
                        {"strategy", config.retrieval.strategy.describe()},
                        {"domain_filter", config.retrieval.domain_filter
                                              ? ojson(config.retrieval.domain_filter->name())
                                              : ojson(nullptr)},
                        {"min_score", config.retrieval.min_score ? ojson(*config.retrieval.min_score)
                                                                 : ojson(nullptr)}};
  }
  doc["history_range"] = {config.history_min, config.history_max};
  if (config.protocol == Protocol::cross_domain) doc["shuffle_seeds"] = config.shuffle_seeds;
  doc["user_limit"] = config.user_limit ? ojson(*config.user_limit) : ojson(nullptr);
  doc["temperature"] = config.temperature;
  doc["max_reply_tokens"] = config.max_reply_tokens;
  doc["audit_ids"] = config.audit_ids;
  doc["prices"] = {{"prompt_per_million", config.prices.prompt_per_million},
                   {"reply_per_million", config.prices.reply_per_million}};
  doc["provider"] = gateway_.provider_name();
  doc["templates"] = prompts_.templates().hashes();
  std::uint64_t data = 0xcbf29ce484222325ULL;
  for (const auto& u : users) data = fnv1a64(hex64(data) + to_json(u).dump());
  doc["data_fingerprint"] = hex64(data);
  doc["history_size_definition"] = "number of history records available to the prediction";
  return doc;
}

PredictionTrace EvalHarness::predict(const ProtocolConfig& config, const PromptBuilder& builder,
                                     const std::string& user_id,
                                     const std::vector<InteractionRecord>& history,
                                     const InteractionRecord& target, BaselineMode mode) {
  const auto item = target_from(target);
  CompletionRequest request;
  request.temperature = config.temperature;
  request.max_reply_tokens = config.max_reply_tokens;
  request.tag = "eval:" + std::string(recommender_name(config.recommender));
  request.context.user_id = user_id;
  request.context.target_genres = target.genres;

  PredictionTrace trace;
  trace.user_id = user_id;
  trace.history_size = static_cast<int>(history.size());
  trace.target_item_id = target.item_id;
  trace.truth = target.rating;

  if (config.recommender == Recommender::map) {
    const auto memory = retrieve_memory(history, item, config.retrieval);
    request.bundle = builder.build_recommendation_prompt(item, memory);
    for (const auto& m : memory) {
      trace.shown_record_ids.push_back(m.record.record_id);
      request.context.shown_ratings.push_back(m.record.rating);
    }
  } else {
    request.bundle = builder.build_baseline_messages(history, item, mode);
    for (const auto& h : history) {
      trace.shown_record_ids.push_back(h.record_id);
      request.context.shown_ratings.push_back(h.rating);
    }
  }
  if (config.audit_ids) trace.shown_record_ids = audited_record_ids(request.bundle);
  trace.prompt_token_estimate = request.bundle.token_estimate;

  auto result = gateway_.complete(request);
  trace.reply = result.text;
  trace.prompt_tokens = result.prompt_tokens;
  trace.reply_tokens = result.reply_tokens;
  try {
    trace.predicted = parse_rating_reply(result.text);
    return trace;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::unparsable_reply) throw;
  }

  trace.retried = true;
  request.bundle.messages.push_back({Role::assistant, result.text});
  request.bundle.messages.push_back({Role::user, std::string(kRatingRetryInstruction)});
  request.bundle.token_estimate = estimate_tokens(request.bundle.messages);
  result = gateway_.complete(request);
  trace.reply = result.text;
  trace.prompt_tokens += result.prompt_tokens;
  trace.reply_tokens += result.reply_tokens;
  try {
    trace.predicted = parse_rating_reply(result.text);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::unparsable_reply) throw;
    trace.predicted = 3.0;
    trace.imputed = true;
  }
  return trace;
}

std::vector<PredictionTrace> EvalHarness::evaluate_unit(const ProtocolConfig& config,
                                                        const PromptBuilder& builder,
                                                        const PreparedUser& user,
                                                        const Unit& unit) {
  std::vector<PredictionTrace> traces;
  const auto sizes = static_cast<std::size_t>(config.history_max);
  if (config.protocol == Protocol::single_domain) {
    for (int r = config.history_min; r <= config.history_max; ++r) {
      const std::vector<InteractionRecord> history(user.history.begin(), user.history.begin() + r);
      auto trace = predict(config, builder, user.user_id, history, user.history[r],
                           BaselineMode::single_domain);
      trace.iteration = r;
      traces.push_back(std::move(trace));
    }
    return traces;
  }
  std::vector<InteractionRecord> movies(user.history.begin(), user.history.begin() + sizes);
  if (unit.seed) movies = shuffled_history(std::move(movies), *unit.seed, user.user_id);
  for (int i = config.history_min; i <= config.history_max; ++i) {
    const std::vector<InteractionRecord> history(movies.begin(), movies.begin() + i);
    auto trace = predict(config, builder, user.user_id, history, *user.cross_target,
                         BaselineMode::cross_domain);
    trace.iteration = i;
    trace.pass = unit.pass;
    traces.push_back(std::move(trace));
  }
  return traces;
}

namespace {

void check_config(const ProtocolConfig& config, const std::vector<PreparedUser>& users) {
  if (config.history_min < 1 || config.history_max < config.history_min) {
    throw Error(ErrorCode::validation, "history range must satisfy 1 <= min <= max");
  }
  const auto max = static_cast<std::size_t>(config.history_max);
  for (const auto& u : users) {
    if (config.protocol == Protocol::single_domain && u.history.size() < max + 1) {
      throw Error(ErrorCode::validation, "user " + u.user_id + " has " +
                                             std::to_string(u.history.size()) +
                                             " records; single-domain needs " +
                                             std::to_string(max + 1));
    }
    if (config.protocol == Protocol::cross_domain) {
      if (u.history.size() < max) {
        throw Error(ErrorCode::validation, "user " + u.user_id + " has too few movie records");
      }
      if (!u.cross_target) {
        throw Error(ErrorCode::validation, "user " + u.user_id + " has no cross-domain target");
      }
    }
  }
}

std::string unit_key(const std::string& user_id, int pass) {
  return user_id + "\n" + std::to_string(pass);
}

std::map<std::string, std::vector<PredictionTrace>> load_checkpoint(const fs::path& path) {
  std::map<std::string, std::vector<PredictionTrace>> done;
  std::ifstream in(path, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    try {
      const auto doc = nlohmann::json::parse(line);
      std::vector<PredictionTrace> traces;
      for (const auto& t : doc.at("traces")) traces.push_back(trace_from_json(t));
      done[unit_key(doc.at("user_id").get<std::string>(), doc.at("pass").get<int>())] =
          std::move(traces);
    } catch (const std::exception&) {
      // a torn final line from an interrupted run; the unit is recomputed
    }
  }
  return done;
}

}  // namespace

EvalReport EvalHarness::run(const ProtocolConfig& config, const std::vector<PreparedUser>& users) {
  return config.protocol == Protocol::single_domain ? run_single_domain(config, users)
                                                    : run_cross_domain(config, users);
}

EvalReport EvalHarness::run_single_domain(ProtocolConfig config,
                                          const std::vector<PreparedUser>& all_users) {
  config.protocol = Protocol::single_domain;
  config.shuffle_seeds.clear();
  std::vector<PreparedUser> users(
      all_users.begin(),
      all_users.begin() + static_cast<std::ptrdiff_t>(std::min(
                              all_users.size(), config.user_limit.value_or(all_users.size()))));
  check_config(config, users);
  std::vector<Unit> units;
  for (std::size_t i = 0; i < users.size(); ++i) units.push_back({i, 0, std::nullopt});
  return assemble(config, users, std::move(units));
}

EvalReport EvalHarness::run_cross_domain(ProtocolConfig config,
                                         const std::vector<PreparedUser>& all_users) {
  config.protocol = Protocol::cross_domain;
  std::vector<PreparedUser> users(
      all_users.begin(),
      all_users.begin() + static_cast<std::ptrdiff_t>(std::min(
                              all_users.size(), config.user_limit.value_or(all_users.size()))));
  check_config(config, users);
  std::vector<Unit> units;
  for (std::size_t i = 0; i < users.size(); ++i) {
    units.push_back({i, 0, std::nullopt});
    for (std::size_t s = 0; s < config.shuffle_seeds.size(); ++s) {
      units.push_back({i, static_cast<int>(s + 1), config.shuffle_seeds[s]});
    }
  }
  return assemble(config, users, std::move(units));
}

EvalReport EvalHarness::assemble(const ProtocolConfig& config,
                                 const std::vector<PreparedUser>& users, std::vector<Unit> units) {
  const PromptBuilder builder(prompts_.templates(), PromptOptions{config.audit_ids});
  EvalReport report;
  report.protocol = config.protocol;
  report.recommender = config.recommender;
  report.config = describe(config, users);
  report.config_hash = hex64(fnv1a64(report.config.dump()));
  report.template_hashes = prompts_.templates().hashes();
  report.provider = gateway_.provider_name();
  report.users = users.size();

  std::map<std::string, std::vector<PredictionTrace>> done;
  std::ofstream checkpoint;
  std::mutex checkpoint_mutex;
  if (config.checkpoint_dir) {
    fs::create_directories(*config.checkpoint_dir);
    const auto path = *config.checkpoint_dir / (report.config_hash + ".jsonl");
    done = load_checkpoint(path);
    checkpoint.open(path, std::ios::binary | std::ios::app);
    if (!checkpoint) throw Error(ErrorCode::storage_unavailable, "cannot open " + path.string());
    // a torn tail must not swallow the next appended line
    if (fs::file_size(path) > 0) {
      std::ifstream tail(path, std::ios::binary);
      tail.seekg(-1, std::ios::end);
      if (tail.get() != '\n') checkpoint << '\n';
    }
  }

  std::vector<std::vector<PredictionTrace>> results(units.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    while (!failed) {
      const auto idx = next.fetch_add(1);
      if (idx >= units.size()) return;
      const auto& unit = units[idx];
      const auto& user = users[unit.user_index];
      if (const auto it = done.find(unit_key(user.user_id, unit.pass)); it != done.end()) {
        results[idx] = it->second;
        continue;
      }
      try {
        results[idx] = evaluate_unit(config, builder, user, unit);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        failed = true;
        return;
      }
      if (checkpoint.is_open()) {
        ojson line;
        line["user_id"] = user.user_id;
        line["pass"] = unit.pass;
        line["traces"] = ojson::array();
        for (const auto& t : results[idx]) line["traces"].push_back(to_json(t));
        std::lock_guard lock(checkpoint_mutex);
        checkpoint << line.dump() << '\n';
        checkpoint.flush();
      }
    }
  };
  const auto workers = std::max<std::size_t>(
      1, std::min<std::size_t>(units.size(), static_cast<std::size_t>(gateway_.max_in_flight())));
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::map<int, std::vector<PredictionTrace>> by_pass;
  for (auto& chunk : results) {
    for (auto& t : chunk) {
      report.ledger.calls += t.retried ? 2 : 1;
      report.ledger.prompt_tokens += t.prompt_tokens;
      report.ledger.reply_tokens += t.reply_tokens;
      by_pass[t.pass].push_back(t);
      report.traces.push_back(std::move(t));
    }
  }
  report.ledger.dollars = config.prices.cost(report.ledger.prompt_tokens, report.ledger.reply_tokens);

  for (const auto& [pass, traces] : by_pass) {
    PassSummary summary;
    summary.pass = pass;
    if (pass > 0) summary.seed = config.shuffle_seeds[static_cast<std::size_t>(pass - 1)];
    summary.by_size = stats_by_size(traces);
    report.passes.push_back(std::move(summary));
  }
  if (report.passes.size() == 1) {
    report.by_size = report.passes.front().by_size;
  } else if (!report.passes.empty()) {
    std::map<int, SizeStats> merged;
    std::map<int, std::pair<double, std::size_t>> clean;
    for (const auto& pass : report.passes) {
      for (const auto& s : pass.by_size) {
        auto& m = merged[s.history_size];
        m.history_size = s.history_size;
        m.mae += s.mae / static_cast<double>(report.passes.size());
        m.traces += s.traces;
        m.imputed += s.imputed;
        if (s.mae_excluding_imputed) {
          clean[s.history_size].first += *s.mae_excluding_imputed;
          ++clean[s.history_size].second;
        }
      }
    }
    for (auto& [size, s] : merged) {
      if (const auto it = clean.find(size); it != clean.end()) {
        s.mae_excluding_imputed = it->second.first / static_cast<double>(it->second.second);
      }
      report.by_size.push_back(s);
    }
  }

  const int increments =
      (config.history_max - config.history_min + 1) * static_cast<int>(std::max<std::size_t>(1, report.passes.size()));
  if (!users.empty()) {
    report.cost_per_10_history =
        cost_per_10_history(report.ledger.dollars, static_cast<int>(users.size()), increments);
  }
  return report;
}

namespace {

ojson optional_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson stats_json(const std::vector<SizeStats>& stats) {
  auto arr = ojson::array();
  for (const auto& s : stats) {
    arr.push_back({{"history_size", s.history_size},
                   {"mae", s.mae},
                   {"mae_excluding_imputed", optional_json(s.mae_excluding_imputed)},
                   {"traces", s.traces},
                   {"imputed", s.imputed}});
  }
  return arr;
}

std::vector<SizeStats> stats_from_json(const nlohmann::json& arr) {
  std::vector<SizeStats> out;
  for (const auto& d : arr) {
    SizeStats s;
    s.history_size = d.at("history_size").get<int>();
    s.mae = d.at("mae").get<double>();
    if (d.contains("mae_excluding_imputed") && !d["mae_excluding_imputed"].is_null()) {
      s.mae_excluding_imputed = d["mae_excluding_imputed"].get<double>();
    }
    s.traces = d.value("traces", std::size_t{0});
    s.imputed = d.value("imputed", std::size_t{0});
    out.push_back(s);
  }
  return out;
}

}  // namespace

ojson to_json(const PredictionTrace& t) {
  ojson doc;
  doc["user_id"] = t.user_id;
  doc["pass"] = t.pass;
  doc["iteration"] = t.iteration;
  doc["history_size"] = t.history_size;
  doc["target_item_id"] = t.target_item_id;
  doc["predicted"] = t.predicted;
  doc["truth"] = t.truth;
  doc["parse_flags"] = {{"retried", t.retried}, {"imputed", t.imputed}};
  doc["reply"] = t.reply;
  doc["tokens"] = {{"prompt", t.prompt_tokens},
                   {"reply", t.reply_tokens},
                   {"prompt_estimate", t.prompt_token_estimate}};
  doc["shown_record_ids"] = t.shown_record_ids;
  return doc;
}

PredictionTrace trace_from_json(const nlohmann::json& doc) {
  PredictionTrace t;
  t.user_id = doc.at("user_id").get<std::string>();
  t.pass = doc.value("pass", 0);
  t.iteration = doc.at("iteration").get<int>();
  t.history_size = doc.at("history_size").get<int>();
  t.target_item_id = doc.at("target_item_id").get<std::string>();
  t.predicted = doc.at("predicted").get<double>();
  t.truth = doc.at("truth").get<double>();
  if (doc.contains("parse_flags")) {
    t.retried = doc["parse_flags"].value("retried", false);
    t.imputed = doc["parse_flags"].value("imputed", false);
  }
  t.reply = doc.value("reply", std::string{});
  if (doc.contains("tokens")) {
    t.prompt_tokens = doc["tokens"].value("prompt", std::int64_t{0});
    t.reply_tokens = doc["tokens"].value("reply", std::int64_t{0});
    t.prompt_token_estimate = doc["tokens"].value("prompt_estimate", std::size_t{0});
  }
  if (doc.contains("shown_record_ids")) {
    t.shown_record_ids = doc["shown_record_ids"].get<std::vector<std::string>>();
  }
  return t;
}

ojson to_json(const EvalReport& r) {
  ojson doc;
  doc["schema"] = "memrec.eval_report/1";
  doc["protocol"] = protocol_name(r.protocol);
  doc["recommender"] = recommender_name(r.recommender);
  doc["config_hash"] = r.config_hash;
  doc["config"] = r.config;
  doc["template_hashes"] = r.template_hashes;
  doc["provider"] = r.provider;
  doc["users"] = r.users;
  doc["mae_by_history_size"] = stats_json(r.by_size);
  doc["passes"] = ojson::array();
  for (const auto& p : r.passes) {
    doc["passes"].push_back({{"pass", p.pass},
                             {"seed", p.seed ? ojson(*p.seed) : ojson(nullptr)},
                             {"mae_by_history_size", stats_json(p.by_size)}});
  }
  doc["ledger"] = {{"calls", r.ledger.calls},
                   {"prompt_tokens", r.ledger.prompt_tokens},
                   {"reply_tokens", r.ledger.reply_tokens},
                   {"dollars", r.ledger.dollars},
                   {"cost_per_10_history", r.cost_per_10_history}};
  doc["traces"] = ojson::array();
  for (const auto& t : r.traces) doc["traces"].push_back(to_json(t));
  return doc;
}

EvalReport report_from_json(const nlohmann::json& doc) {
  EvalReport r;
  try {
    r.protocol = parse_protocol(doc.at("protocol").get<std::string>());
    r.recommender = parse_recommender(doc.at("recommender").get<std::string>());
    r.config_hash = doc.value("config_hash", std::string{});
    if (doc.contains("config")) r.config = doc["config"];
    if (doc.contains("template_hashes")) {
      r.template_hashes = doc["template_hashes"].get<std::map<std::string, std::string>>();
    }
    r.provider = doc.value("provider", std::string{});
    r.users = doc.value("users", std::size_t{0});
    r.by_size = stats_from_json(doc.at("mae_by_history_size"));
    if (doc.contains("passes")) {
      for (const auto& p : doc["passes"]) {
        PassSummary s;
        s.pass = p.at("pass").get<int>();
        if (p.contains("seed") && !p["seed"].is_null()) s.seed = p["seed"].get<std::uint64_t>();
        s.by_size = stats_from_json(p.at("mae_by_history_size"));
        r.passes.push_back(std::move(s));
      }
    }
    if (doc.contains("ledger")) {
      const auto& l = doc["ledger"];
      r.ledger.calls = l.value("calls", std::int64_t{0});
      r.ledger.prompt_tokens = l.value("prompt_tokens", std::int64_t{0});
      r.ledger.reply_tokens = l.value("reply_tokens", std::int64_t{0});
      r.ledger.dollars = l.value("dollars", 0.0);
      r.cost_per_10_history = l.value("cost_per_10_history", 0.0);
    }
    if (doc.contains("traces")) {
      for (const auto& t : doc["traces"]) r.traces.push_back(trace_from_json(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, std::string("malformed report: ") + e.what());
  }
  return r;
}

void write_report(const fs::path& path, const EvalReport& report) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << to_json(report).dump(2) << '\n';
    if (!out) throw Error(ErrorCode::storage_unavailable, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

EvalReport read_report(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, path.string() + ": " + e.what());
  }
  return report_from_json(doc);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_traces_csv(const fs::path& path, const EvalReport& report) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "user_id,pass,iteration,history_size,target_item_id,predicted,truth,abs_error,retried,"
         "imputed,prompt_tokens,reply_tokens,prompt_estimate\n";
  for (const auto& t : report.traces) {
    out << csv_field(t.user_id) << ',' << t.pass << ',' << t.iteration << ',' << t.history_size
        << ',' << csv_field(t.target_item_id) << ',' << format_number(t.predicted) << ','
        << format_number(t.truth) << ',' << format_number(std::abs(t.predicted - t.truth)) << ','
        << (t.retried ? 1 : 0) << ',' << (t.imputed ? 1 : 0) << ',' << t.prompt_tokens << ','
        << t.reply_tokens << ',' << t.prompt_token_estimate << '\n';
  }
  if (!out) throw Error(ErrorCode::storage_unavailable, "cannot write " + path.string());
}

Comparison compare_reports(const EvalReport& base, const EvalReport& candidate) {
  if (base.protocol != candidate.protocol) {
    throw Error(ErrorCode::config_mismatch,
                "protocols differ: " + std::string(protocol_name(base.protocol)) + " vs " +
                    std::string(protocol_name(candidate.protocol)));
  }
  std::vector<int> a_sizes, b_sizes;
  for (const auto& s : base.by_size) a_sizes.push_back(s.history_size);
  for (const auto& s : candidate.by_size) b_sizes.push_back(s.history_size);
  if (a_sizes != b_sizes) throw Error(ErrorCode::config_mismatch, "history sizes differ");

  Comparison c;
  c.protocol = base.protocol;
  c.base_label = std::string(recommender_name(base.recommender));
  c.candidate_label = std::string(recommender_name(candidate.recommender));
  for (std::size_t i = 0; i < base.by_size.size(); ++i) {
    ComparisonRow row;
    row.history_size = base.by_size[i].history_size;
    row.base = base.by_size[i].mae;
    row.candidate = candidate.by_size[i].mae;
    row.delta = row.base - row.candidate;
    row.improvement_pct = row.base == 0.0 ? 0.0 : 100.0 * row.delta / row.base;
    c.rows.push_back(row);
  }
  return c;
}

std::string format_comparison(const Comparison& comparison, const std::vector<int>& sizes) {
  std::vector<const ComparisonRow*> rows;
  for (const auto& r : comparison.rows) {
    if (sizes.empty() || std::find(sizes.begin(), sizes.end(), r.history_size) != sizes.end()) {
      rows.push_back(&r);
    }
  }
  std::ostringstream out;
  out << std::fixed;
  const auto label = [&](const std::string& s) { out << std::left << std::setw(14) << s << std::right; };
  label("History size");
  for (const auto* r : rows) out << std::setw(10) << r->history_size;
  out << '\n';
  label(comparison.base_label);
  for (const auto* r : rows) out << std::setw(10) << std::setprecision(4) << r->base;
  out << '\n';
  label(comparison.candidate_label);
  for (const auto* r : rows) out << std::setw(10) << std::setprecision(4) << r->candidate;
  out << '\n';
  label("Improvement");
  for (const auto* r : rows) {
    std::ostringstream pct;
    pct << std::fixed << std::setprecision(2) << r->improvement_pct << '%';
    out << std::setw(10) << pct.str();
  }
  out << '\n';
  return out.str();
}

std::vector<double> moving_average3(const std::vector<double>& values) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto lo = i == 0 ? 0 : i - 1;
    const auto hi = std::min(values.size() - 1, i + 1);
    double sum = 0.0;
    for (auto j = lo; j <= hi; ++j) sum += values[j];
    out[i] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

PlotSeries series_of(const EvalReport& report) {
  PlotSeries s;
  s.label = std::string(recommender_name(report.recommender));
  for (const auto& b : report.by_size) s.points.emplace_back(b.history_size, b.mae);
  return s;
}

std::string render_mae_svg(const std::vector<PlotSeries>& series, const std::string& title) {
  constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  int x_min = 0, x_max = 1;
  double y_min = 0.0, y_max = 1.0;
  bool first = true;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (first) {
        x_min = x_max = x;
        y_min = y_max = y;
        first = false;
      }
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  if (x_max == x_min) ++x_max;
  const double pad = std::max(0.02, (y_max - y_min) * 0.1);
  y_min = std::max(0.0, y_min - pad);
  y_max += pad;
  const auto px = [&](double x) {
    return kLeft + (x - x_min) / (x_max - x_min) * (kWidth - kLeft - kRight);
  };
  const auto py = [&](double y) {
    return kHeight - kBottom - (y - y_min) / (y_max - y_min) * (kHeight - kTop - kBottom);
  };
  const auto escape = [](const std::string& s) {
    std::string out;
    for (const char c : s) {
      if (c == '<') out += "&lt;";
      else if (c == '>') out += "&gt;";
      else if (c == '&') out += "&amp;";
      else out += c;
    }
    return out;
  };

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(title) << "</text>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
      << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  for (int x = x_min; x <= x_max; ++x) {
    svg << "<text x=\"" << px(x) << "\" y=\"" << kHeight - kBottom + 16
        << "\" text-anchor=\"middle\">" << x << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double y = y_min + (y_max - y_min) * i / 5.0;
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">"
        << std::setprecision(3) << y << std::setprecision(2) << "</text>\n";
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << py(y) << "\" x2=\"" << kWidth - kRight
        << "\" y2=\"" << py(y) << "\" stroke=\"#eeeeee\"/>\n";
  }
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">history size</text>\n";
  svg << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << kHeight / 2 << ")\">MAE</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kColors[i % std::size(kColors)];
    std::vector<double> ys;
    for (const auto& p : s.points) ys.push_back(p.second);
    const auto smooth = moving_average3(ys);
    const auto polyline = [&](const std::vector<double>& values, double width, double opacity) {
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
          << "\" stroke-opacity=\"" << opacity << "\" points=\"";
      for (std::size_t j = 0; j < values.size(); ++j) {
        svg << (j ? " " : "") << px(s.points[j].first) << ',' << py(values[j]);
      }
      svg << "\"/>\n";
    };
    polyline(ys, 1.0, 0.45);
    polyline(smooth, 2.5, 1.0);
    const double ly = kTop + 8 + 18 * static_cast<double>(i);
    svg << "<line x1=\"" << kWidth - 170 << "\" y1=\"" << ly << "\" x2=\"" << kWidth - 145
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2.5\"/>\n";
    svg << "<text x=\"" << kWidth - 140 << "\" y=\"" << ly + 4 << "\">" << escape(s.label)
        << " (3-point average)</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace memrec

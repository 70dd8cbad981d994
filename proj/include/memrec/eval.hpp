#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memrec/datasets.hpp"
#include "memrec/gateway.hpp"
#include "memrec/prompting.hpp"
#include "memrec/retrieval.hpp"

namespace memrec {

// Mean of |p_i - t_i|. Throws length_mismatch or empty_input.
double mae(const std::vector<double>& predictions, const std::vector<double>& truths);

enum class Protocol { single_domain, cross_domain };
enum class Recommender { map, baseline };

std::string_view protocol_name(Protocol protocol);
std::string_view recommender_name(Recommender recommender);
Protocol parse_protocol(std::string_view text);
Recommender parse_recommender(std::string_view text);

struct ProtocolConfig {
  Protocol protocol = Protocol::single_domain;
  Recommender recommender = Recommender::map;
  RetrievalConfig retrieval;
  int history_min = 1;
  int history_max = 18;
  // Cross-domain only. Each seed adds one shuffled pass to the unshuffled one.
  std::vector<std::uint64_t> shuffle_seeds = {1};
  std::optional<std::size_t> user_limit;
  double temperature = 0.0;
  int max_reply_tokens = 16;
  bool audit_ids = false;
  PriceTable prices;
  // Directory of per-config checkpoint files; completed users are resumed.
  std::optional<std::filesystem::path> checkpoint_dir;
};

struct PredictionTrace {
  std::string user_id;
  int pass = 0;  // 0 is the unshuffled order
  int iteration = 0;
  int history_size = 0;  // records available to the prediction
  std::string target_item_id;
  double predicted = 0.0;
  double truth = 0.0;
  bool retried = false;
  bool imputed = false;
  std::string reply;
  std::int64_t prompt_tokens = 0;
  std::int64_t reply_tokens = 0;
  std::size_t prompt_token_estimate = 0;
  std::vector<std::string> shown_record_ids;

  friend bool operator==(const PredictionTrace&, const PredictionTrace&) = default;
};

struct SizeStats {
  int history_size = 0;
  double mae = 0.0;
  std::optional<double> mae_excluding_imputed;
  std::size_t traces = 0;
  std::size_t imputed = 0;
};

struct PassSummary {
  int pass = 0;
  std::optional<std::uint64_t> seed;
  std::vector<SizeStats> by_size;
};

struct EvalReport {
  Protocol protocol = Protocol::single_domain;
  Recommender recommender = Recommender::map;
  nlohmann::ordered_json config;
  std::string config_hash;
  std::map<std::string, std::string> template_hashes;
  std::string provider;
  std::size_t users = 0;
  // Cross-domain values average the per-pass MAEs; single-domain has one pass.
  std::vector<SizeStats> by_size;
  std::vector<PassSummary> passes;
  UsageTotals ledger;
  double cost_per_10_history = 0.0;
  std::vector<PredictionTrace> traces;

  std::optional<double> mae_at(int history_size) const;
};

class EvalHarness {
 public:
  EvalHarness(Gateway& gateway, PromptBuilder prompts);

  EvalReport run(const ProtocolConfig& config, const std::vector<PreparedUser>& users);
  EvalReport run_single_domain(ProtocolConfig config, const std::vector<PreparedUser>& users);
  EvalReport run_cross_domain(ProtocolConfig config, const std::vector<PreparedUser>& users);

  // Canonical description of everything that influences predictions.
  nlohmann::ordered_json describe(const ProtocolConfig& config,
                                  const std::vector<PreparedUser>& users) const;

 private:
  struct Unit {
    std::size_t user_index = 0;
    int pass = 0;
    std::optional<std::uint64_t> seed;
  };

  std::vector<PredictionTrace> evaluate_unit(const ProtocolConfig& config,
                                             const PromptBuilder& builder, const PreparedUser& user,
                                             const Unit& unit);
  PredictionTrace predict(const ProtocolConfig& config, const PromptBuilder& builder,
                          const std::string& user_id, const std::vector<InteractionRecord>& history,
                          const InteractionRecord& target, BaselineMode mode);
  EvalReport assemble(const ProtocolConfig& config, const std::vector<PreparedUser>& users,
                      std::vector<Unit> units);

  Gateway& gateway_;
  PromptBuilder prompts_;
};

// Order of one user's cross-domain history for a shuffled pass.
std::vector<InteractionRecord> shuffled_history(std::vector<InteractionRecord> history,
                                                std::uint64_t seed, const std::string& user_id);

// Per-size statistics over exactly the traces with that history size.
std::vector<SizeStats> stats_by_size(const std::vector<PredictionTrace>& traces);

nlohmann::ordered_json to_json(const PredictionTrace& trace);
PredictionTrace trace_from_json(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);
void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);
void write_traces_csv(const std::filesystem::path& path, const EvalReport& report);

struct ComparisonRow {
  int history_size = 0;
  double base = 0.0;
  double candidate = 0.0;
  double delta = 0.0;            // base - candidate
  double improvement_pct = 0.0;  // 100 * (base - candidate) / base
};

struct Comparison {
  Protocol protocol = Protocol::single_domain;
  std::string base_label;
  std::string candidate_label;
  std::vector<ComparisonRow> rows;
};

// Throws config_mismatch when protocols or history sizes differ.
Comparison compare_reports(const EvalReport& base, const EvalReport& candidate);

// Fixed-width table, one column per history size; `sizes` empty means all.
std::string format_comparison(const Comparison& comparison, const std::vector<int>& sizes = {});

// Centered window of three; each end point averages itself with its single
// neighbour.
std::vector<double> moving_average3(const std::vector<double>& values);

struct PlotSeries {
  std::string label;
  std::vector<std::pair<int, double>> points;
};

// MAE against history size: each series drawn raw (thin) and smoothed (thick).
std::string render_mae_svg(const std::vector<PlotSeries>& series, const std::string& title);
PlotSeries series_of(const EvalReport& report);

}  // namespace memrec

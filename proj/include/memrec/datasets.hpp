#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memrec/record.hpp"

namespace memrec {

enum class Source { movielens, amazon_movies, amazon_books };

std::string_view source_name(Source source);

struct RawInteraction {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::int64_t timestamp = 0;
  Source source = Source::movielens;
};

struct ItemCatalogEntry {
  std::string item_id;
  std::string title;
  GenreList genres;
  Domain domain;
};

using Catalog = std::map<std::string, ItemCatalogEntry>;

struct RejectedLine {
  std::string file;
  std::size_t line = 0;
  std::string reason;
  std::string text;
};

// Per-file accounting: every input line is either accepted or rejected for
// exactly one reason. Only the first few rejected lines are kept verbatim.
struct LoadReport {
  static constexpr std::size_t kSampleLimit = 50;

  std::size_t input_lines = 0;
  std::size_t accepted = 0;
  std::map<std::string, std::size_t> rejected_by_reason;
  std::vector<RejectedLine> samples;

  std::size_t rejected() const;
  void reject(RejectedLine line);
};

nlohmann::ordered_json to_json(const LoadReport& report);

struct LoadResult {
  std::vector<RawInteraction> interactions;
  Catalog catalog;
  LoadReport ratings_report;
  LoadReport catalog_report;
};

// The 19 genre flag columns of u.item, in file order.
const std::vector<std::string>& movielens_genres();

// <dir>/u.data (user \t item \t rating \t timestamp) and <dir>/u.item
// (pipe-separated, 5 leading fields then 19 genre flags, Latin-1 titles).
// Throws missing_file, or malformed_header when the first line of either
// file does not have the expected shape.
LoadResult load_movielens(const std::filesystem::path& dir);

// Ratings CSV "item,user,rating,timestamp" (an optional header line is
// skipped) joined with JSON-lines metadata carrying "asin", "title" and
// "category" (list) or "categories" (list of lists). Ratings whose item has
// no metadata or no categories are excluded and counted.
LoadResult load_amazon(const std::filesystem::path& ratings_path,
                       const std::filesystem::path& metadata_path, Domain domain);

struct PreparedUser {
  std::string user_id;
  std::vector<InteractionRecord> history;  // chronological
  std::optional<InteractionRecord> cross_target;

  friend bool operator==(const PreparedUser&, const PreparedUser&) = default;
};

struct SingleDomainRules {
  std::size_t min_count = 19;
  std::size_t cap = 19;
};

struct CrossDomainRules {
  std::size_t movie_min = 18;
  std::size_t movie_cap = 18;
};

// record_id "<item_id>@<timestamp>"; title and genres from the catalog.
InteractionRecord to_record(const RawInteraction& raw, const Catalog& catalog, const Domain& domain);

// Keeps users with >= min_count ratings, each trimmed to the chronologically
// earliest `cap` (ties by item id). Output ordered by user id.
std::vector<PreparedUser> prepare_single_domain(const std::vector<RawInteraction>& interactions,
                                                const Catalog& catalog,
                                                SingleDomainRules rules = {});

// Keeps users with >= movie_min movie ratings and at least one book rating.
// History is the earliest movie_cap movies; the target is the earliest book.
std::vector<PreparedUser> prepare_cross_domain(const LoadResult& movies, const LoadResult& books,
                                               CrossDomainRules rules = {});

nlohmann::ordered_json to_json(const PreparedUser& user);
PreparedUser prepared_user_from_json(const nlohmann::json& doc);

// One user document per line.
void write_prepared_users(const std::filesystem::path& path, const std::vector<PreparedUser>& users);
std::vector<PreparedUser> read_prepared_users(const std::filesystem::path& path);

struct PreparedSummary {
  std::size_t users = 0;
  std::size_t history_ratings = 0;
  std::size_t cross_targets = 0;
};

PreparedSummary summarize(const std::vector<PreparedUser>& users);

}  // namespace memrec

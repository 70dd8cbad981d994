#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace memrec {

enum class DomainKind { movie, book, other };

// Item category a record belongs to. `other` carries a free-text label.
class Domain {
 public:
  Domain() = default;

  static Domain movie() { return Domain(DomainKind::movie, {}); }
  static Domain book() { return Domain(DomainKind::book, {}); }
  static Domain other(std::string label);
  // "movie" and "book" (any case) map to their kinds, anything else to other.
  static Domain parse(std::string_view text);

  DomainKind kind() const { return kind_; }
  std::string name() const;

  friend bool operator==(const Domain&, const Domain&) = default;

 private:
  Domain(DomainKind kind, std::string label) : kind_(kind), label_(std::move(label)) {}

  DomainKind kind_ = DomainKind::movie;
  std::string label_;
};

using GenreList = std::vector<std::string>;

// Lowercased, trimmed, internal whitespace collapsed. Used as the comparison
// key for genre labels.
std::string normalize_genre(std::string_view label);

// Trims labels, drops empty ones and removes duplicates (by normalized key,
// first spelling wins). Order of first appearance is kept.
GenreList canonical_genres(const std::vector<std::string>& labels);

struct InteractionRecord {
  std::string record_id;
  std::string item_id;
  std::string title;
  Domain domain;
  GenreList genres;
  std::string description;
  double rating = 0.0;
  std::int64_t timestamp = 0;

  friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

// The item a prediction or recommendation is about.
struct TargetItem {
  std::string item_id;
  std::string title;
  Domain domain;
  GenreList genres;
  std::string description;

  friend bool operator==(const TargetItem&, const TargetItem&) = default;
};

TargetItem target_from(const InteractionRecord& record);

// Throws Error(validation) on the first broken invariant.
void validate(const InteractionRecord& record);
void validate(const TargetItem& target);

// On-disk field order: record_id, item_id, title, domain, genres,
// description, rating, timestamp.
nlohmann::ordered_json to_json(const InteractionRecord& record);
InteractionRecord record_from_json(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const TargetItem& target);

}  // namespace memrec

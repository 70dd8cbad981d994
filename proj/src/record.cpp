#include "memrec/record.hpp"

#include <cmath>
#include <set>

#include "memrec/error.hpp"
#include "memrec/text.hpp"

namespace memrec {

Domain Domain::other(std::string label) {
  auto clean = to_lower_ascii(collapse_whitespace(label));
  if (clean.empty()) throw Error(ErrorCode::validation, "domain label must not be empty");
  if (clean == "movie") return movie();
  if (clean == "book") return book();
  return Domain(DomainKind::other, std::move(clean));
}

Domain Domain::parse(std::string_view text) { return other(std::string(text)); }

std::string Domain::name() const {
  switch (kind_) {
    case DomainKind::movie: return "movie";
    case DomainKind::book: return "book";
    case DomainKind::other: return label_;
  }
  return label_;
}

std::string normalize_genre(std::string_view label) {
  return to_lower_ascii(collapse_whitespace(label));
}

GenreList canonical_genres(const std::vector<std::string>& labels) {
  GenreList out;
  std::set<std::string> seen;
  for (const auto& raw : labels) {
    auto label = collapse_whitespace(raw);
    if (label.empty()) continue;
    if (seen.insert(normalize_genre(label)).second) out.push_back(std::move(label));
  }
  return out;
}

TargetItem target_from(const InteractionRecord& record) {
  return TargetItem{record.item_id, record.title, record.domain, record.genres,
                    record.description};
}

namespace {

void validate_genres(const GenreList& genres) {
  std::set<std::string> seen;
  for (const auto& g : genres) {
    if (g.empty() || g != collapse_whitespace(g)) {
      throw Error(ErrorCode::validation, "genre label must be non-empty and trimmed: '" + g + "'");
    }
    if (!seen.insert(normalize_genre(g)).second) {
      throw Error(ErrorCode::validation, "duplicate genre label: '" + g + "'");
    }
  }
}

}  // namespace

void validate(const InteractionRecord& record) {
  if (record.record_id.empty()) throw Error(ErrorCode::validation, "record_id must not be empty");
  if (record.item_id.empty()) throw Error(ErrorCode::validation, "item_id must not be empty");
  if (!std::isfinite(record.rating) || record.rating < 1.0 || record.rating > 5.0) {
    throw Error(ErrorCode::validation,
                "rating must lie in [1, 5], got " + format_number(record.rating));
  }
  validate_genres(record.genres);
}

void validate(const TargetItem& target) {
  if (target.title.empty() && target.genres.empty() && target.description.empty()) {
    throw Error(ErrorCode::validation, "target needs a title, genres or description");
  }
  validate_genres(target.genres);
}

nlohmann::ordered_json to_json(const InteractionRecord& record) {
  nlohmann::ordered_json doc;
  doc["record_id"] = record.record_id;
  doc["item_id"] = record.item_id;
  doc["title"] = record.title;
  doc["domain"] = record.domain.name();
  doc["genres"] = record.genres;
  doc["description"] = record.description;
  doc["rating"] = record.rating;
  doc["timestamp"] = record.timestamp;
  return doc;
}

InteractionRecord record_from_json(const nlohmann::json& doc) {
  try {
    InteractionRecord r;
    r.record_id = doc.at("record_id").get<std::string>();
    r.item_id = doc.at("item_id").get<std::string>();
    r.title = doc.value("title", "");
    r.domain = Domain::parse(doc.value("domain", "movie"));
    r.genres = doc.value("genres", GenreList{});
    r.description = doc.value("description", "");
    r.rating = doc.at("rating").get<double>();
    r.timestamp = doc.value("timestamp", std::int64_t{0});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, std::string("malformed record document: ") + e.what());
  }
}

nlohmann::ordered_json to_json(const TargetItem& target) {
  nlohmann::ordered_json doc;
  doc["item_id"] = target.item_id;
  doc["title"] = target.title;
  doc["domain"] = target.domain.name();
  doc["genres"] = target.genres;
  doc["description"] = target.description;
  return doc;
}

}  // namespace memrec

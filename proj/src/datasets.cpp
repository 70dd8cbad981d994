#include "memrec/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "memrec/error.hpp"
#include "memrec/text.hpp"

namespace memrec {

namespace fs = std::filesystem;

namespace {

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open " + path.string());
  return in;
}

bool parse_int(std::string_view s, std::int64_t& out) {
  s = std::string_view(s).substr(0, s.size());
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return !s.empty() && res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

bool parse_real(std::string_view s, double& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return !s.empty() && res.ec == std::errc{} && res.ptr == s.data() + s.size() && std::isfinite(out);
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool chronological(const RawInteraction& a, const RawInteraction& b) {
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  return id_less(a.item_id, b.item_id);
}

// Groups by user, sorts chronologically and drops repeated (item, timestamp).
std::map<std::string, std::vector<RawInteraction>, decltype(&id_less)> group_by_user(
    const std::vector<RawInteraction>& interactions) {
  std::map<std::string, std::vector<RawInteraction>, decltype(&id_less)> by_user(&id_less);
  for (const auto& r : interactions) by_user[r.user_id].push_back(r);
  for (auto& [_, rows] : by_user) {
    std::stable_sort(rows.begin(), rows.end(), chronological);
    rows.erase(std::unique(rows.begin(), rows.end(),
                           [](const RawInteraction& a, const RawInteraction& b) {
                             return a.item_id == b.item_id && a.timestamp == b.timestamp;
                           }),
               rows.end());
  }
  return by_user;
}

}  // namespace

std::string_view source_name(Source source) {
  switch (source) {
    case Source::movielens: return "movielens";
    case Source::amazon_movies: return "amazon_movies";
    case Source::amazon_books: return "amazon_books";
  }
  return "movielens";
}

std::size_t LoadReport::rejected() const {
  std::size_t total = 0;
  for (const auto& [_, n] : rejected_by_reason) total += n;
  return total;
}

void LoadReport::reject(RejectedLine line) {
  ++rejected_by_reason[line.reason];
  if (samples.size() < kSampleLimit) samples.push_back(std::move(line));
}

nlohmann::ordered_json to_json(const LoadReport& report) {
  nlohmann::ordered_json doc;
  doc["input_lines"] = report.input_lines;
  doc["accepted"] = report.accepted;
  doc["rejected"] = report.rejected();
  doc["rejected_by_reason"] = report.rejected_by_reason;
  doc["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : report.samples) {
    doc["samples"].push_back(
        {{"file", s.file}, {"line", s.line}, {"reason", s.reason}, {"text", s.text}});
  }
  return doc;
}

const std::vector<std::string>& movielens_genres() {
  static const std::vector<std::string> genres = {
      "unknown", "Action",   "Adventure", "Animation", "Children's", "Comedy",  "Crime",
      "Documentary", "Drama", "Fantasy",  "Film-Noir", "Horror",     "Musical", "Mystery",
      "Romance", "Sci-Fi",   "Thriller",  "War",       "Western"};
  return genres;
}

LoadResult load_movielens(const fs::path& dir) {
  static constexpr std::size_t kItemFields = 5 + 19;
  LoadResult result;
  const auto item_path = dir / "u.item";
  const auto data_path = dir / "u.data";
  auto items = open_input(item_path);
  auto ratings = open_input(data_path);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(items, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto& report = result.catalog_report;
    ++report.input_lines;
    const auto fields = split(line, '|');
    if (fields.size() != kItemFields) {
      if (line_no == 1) {
        throw Error(ErrorCode::malformed_header,
                    item_path.string() + ": expected 24 pipe-separated fields, got " +
                        std::to_string(fields.size()));
      }
      report.reject({item_path.string(), line_no, "wrong field count", line});
      continue;
    }
    ItemCatalogEntry entry;
    entry.item_id = trim(fields[0]);
    entry.title = ensure_utf8(trim(fields[1]));
    entry.domain = Domain::movie();
    bool flags_ok = true;
    std::vector<std::string> labels;
    for (std::size_t g = 0; g < 19; ++g) {
      const auto& flag = fields[5 + g];
      if (flag == "1") {
        labels.push_back(movielens_genres()[g]);
      } else if (flag != "0") {
        flags_ok = false;
      }
    }
    if (entry.item_id.empty() || !flags_ok) {
      report.reject({item_path.string(), line_no, "bad item id or genre flag", line});
      continue;
    }
    if (result.catalog.count(entry.item_id) > 0) {
      report.reject({item_path.string(), line_no, "duplicate item id", line});
      continue;
    }
    entry.genres = canonical_genres(labels);
    result.catalog.emplace(entry.item_id, std::move(entry));
    ++report.accepted;
  }

  line_no = 0;
  while (std::getline(ratings, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto& report = result.ratings_report;
    ++report.input_lines;
    const auto fields = split(line, '\t');
    if (fields.size() != 4) {
      if (line_no == 1) {
        throw Error(ErrorCode::malformed_header,
                    data_path.string() + ": expected 4 tab-separated fields, got " +
                        std::to_string(fields.size()));
      }
      report.reject({data_path.string(), line_no, "wrong field count", line});
      continue;
    }
    RawInteraction r;
    r.user_id = trim(fields[0]);
    r.item_id = trim(fields[1]);
    r.source = Source::movielens;
    if (r.user_id.empty() || r.item_id.empty()) {
      report.reject({data_path.string(), line_no, "missing id", line});
      continue;
    }
    if (!parse_real(trim(fields[2]), r.rating)) {
      report.reject({data_path.string(), line_no, "unparsable rating", line});
      continue;
    }
    if (r.rating < 1.0 || r.rating > 5.0) {
      report.reject({data_path.string(), line_no, "rating out of range", line});
      continue;
    }
    if (!parse_int(trim(fields[3]), r.timestamp)) {
      report.reject({data_path.string(), line_no, "unparsable timestamp", line});
      continue;
    }
    if (result.catalog.count(r.item_id) == 0) {
      report.reject({data_path.string(), line_no, "unknown item", line});
      continue;
    }
    result.interactions.push_back(std::move(r));
    ++report.accepted;
  }
  return result;
}

LoadResult load_amazon(const fs::path& ratings_path, const fs::path& metadata_path, Domain domain) {
  LoadResult result;
  auto meta = open_input(metadata_path);
  auto ratings = open_input(ratings_path);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(meta, line)) {
    ++line_no;
    line = strip_cr(line);
    if (trim(line).empty()) continue;
    auto& report = result.catalog_report;
    ++report.input_lines;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      report.reject({metadata_path.string(), line_no, "unparsable JSON", line.substr(0, 200)});
      continue;
    }
    if (!doc.is_object() || !doc.contains("asin") || !doc["asin"].is_string()) {
      report.reject({metadata_path.string(), line_no, "missing asin", line.substr(0, 200)});
      continue;
    }
    std::vector<std::string> labels;
    const auto collect = [&](const nlohmann::json& node, const auto& self) -> void {
      if (node.is_string()) {
        labels.push_back(to_lower_ascii(collapse_whitespace(node.get<std::string>())));
      } else if (node.is_array()) {
        for (const auto& child : node) self(child, self);
      }
    };
    if (doc.contains("category")) collect(doc["category"], collect);
    if (doc.contains("categories")) collect(doc["categories"], collect);
    ItemCatalogEntry entry;
    entry.item_id = doc["asin"].get<std::string>();
    entry.title = doc.contains("title") && doc["title"].is_string()
                      ? ensure_utf8(trim(doc["title"].get<std::string>()))
                      : std::string{};
    entry.genres = canonical_genres(labels);
    entry.domain = domain;
    if (result.catalog.count(entry.item_id) > 0) {
      report.reject({metadata_path.string(), line_no, "duplicate asin", entry.item_id});
      continue;
    }
    result.catalog.emplace(entry.item_id, std::move(entry));
    ++report.accepted;
  }

  const auto source = domain.kind() == DomainKind::book ? Source::amazon_books : Source::amazon_movies;
  line_no = 0;
  while (std::getline(ratings, line)) {
    ++line_no;
    line = strip_cr(line);
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    double probe = 0;
    if (line_no == 1 && fields.size() == 4 && !parse_real(trim(fields[2]), probe)) continue;  // header
    auto& report = result.ratings_report;
    ++report.input_lines;
    if (fields.size() != 4) {
      report.reject({ratings_path.string(), line_no, "wrong field count", line});
      continue;
    }
    RawInteraction r;
    r.item_id = trim(fields[0]);
    r.user_id = trim(fields[1]);
    r.source = source;
    if (r.user_id.empty() || r.item_id.empty()) {
      report.reject({ratings_path.string(), line_no, "missing id", line});
      continue;
    }
    if (!parse_real(trim(fields[2]), r.rating)) {
      report.reject({ratings_path.string(), line_no, "unparsable rating", line});
      continue;
    }
    if (r.rating < 1.0 || r.rating > 5.0) {
      report.reject({ratings_path.string(), line_no, "rating out of range", line});
      continue;
    }
    if (!parse_int(trim(fields[3]), r.timestamp)) {
      report.reject({ratings_path.string(), line_no, "unparsable timestamp", line});
      continue;
    }
    const auto item = result.catalog.find(r.item_id);
    if (item == result.catalog.end()) {
      report.reject({ratings_path.string(), line_no, "no metadata", line});
      continue;
    }
    if (item->second.genres.empty()) {
      report.reject({ratings_path.string(), line_no, "no categories", line});
      continue;
    }
    result.interactions.push_back(std::move(r));
    ++report.accepted;
  }
  return result;
}

InteractionRecord to_record(const RawInteraction& raw, const Catalog& catalog, const Domain& domain) {
  InteractionRecord rec;
  rec.record_id = raw.item_id + "@" + std::to_string(raw.timestamp);
  rec.item_id = raw.item_id;
  rec.domain = domain;
  rec.rating = raw.rating;
  rec.timestamp = raw.timestamp;
  if (const auto it = catalog.find(raw.item_id); it != catalog.end()) {
    rec.title = it->second.title;
    rec.genres = it->second.genres;
  }
  if (rec.title.empty()) rec.title = "item " + raw.item_id;
  return rec;
}

std::vector<PreparedUser> prepare_single_domain(const std::vector<RawInteraction>& interactions,
                                                const Catalog& catalog, SingleDomainRules rules) {
  std::vector<PreparedUser> out;
  for (const auto& [user, rows] : group_by_user(interactions)) {
    if (rows.size() < rules.min_count) continue;
    PreparedUser p;
    p.user_id = user;
    const auto keep = std::min(rules.cap, rows.size());
    for (std::size_t i = 0; i < keep; ++i) {
      p.history.push_back(to_record(rows[i], catalog, Domain::movie()));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PreparedUser> prepare_cross_domain(const LoadResult& movies, const LoadResult& books,
                                               CrossDomainRules rules) {
  const auto movie_rows = group_by_user(movies.interactions);
  const auto book_rows = group_by_user(books.interactions);
  std::vector<PreparedUser> out;
  for (const auto& [user, rows] : movie_rows) {
    if (rows.size() < rules.movie_min) continue;
    const auto b = book_rows.find(user);
    if (b == book_rows.end() || b->second.empty()) continue;
    PreparedUser p;
    p.user_id = user;
    const auto keep = std::min(rules.movie_cap, rows.size());
    for (std::size_t i = 0; i < keep; ++i) {
      p.history.push_back(to_record(rows[i], movies.catalog, Domain::movie()));
    }
    p.cross_target = to_record(b->second.front(), books.catalog, Domain::book());
    out.push_back(std::move(p));
  }
  return out;
}

nlohmann::ordered_json to_json(const PreparedUser& user) {
  nlohmann::ordered_json doc;
  doc["user_id"] = user.user_id;
  doc["history"] = nlohmann::ordered_json::array();
  for (const auto& r : user.history) doc["history"].push_back(to_json(r));
  doc["cross_target"] =
      user.cross_target ? to_json(*user.cross_target) : nlohmann::ordered_json(nullptr);
  return doc;
}

PreparedUser prepared_user_from_json(const nlohmann::json& doc) {
  PreparedUser p;
  try {
    p.user_id = doc.at("user_id").get<std::string>();
    for (const auto& r : doc.at("history")) p.history.push_back(record_from_json(r));
    if (doc.contains("cross_target") && !doc["cross_target"].is_null()) {
      p.cross_target = record_from_json(doc["cross_target"]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, std::string("malformed prepared user: ") + e.what());
  }
  return p;
}

void write_prepared_users(const fs::path& path, const std::vector<PreparedUser>& users) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& u : users) out << to_json(u).dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::storage_unavailable, "cannot write " + path.string());
}

std::vector<PreparedUser> read_prepared_users(const fs::path& path) {
  auto in = open_input(path);
  std::vector<PreparedUser> users;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      users.push_back(prepared_user_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::validation,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return users;
}

PreparedSummary summarize(const std::vector<PreparedUser>& users) {
  PreparedSummary s;
  s.users = users.size();
  for (const auto& u : users) {
    s.history_ratings += u.history.size();
    if (u.cross_target) ++s.cross_targets;
  }
  return s;
}

}  // namespace memrec

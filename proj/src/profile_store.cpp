#include "memrec/profile_store.hpp"

#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <utility>

#include "memrec/error.hpp"
#include "memrec/text.hpp"

namespace memrec {

namespace fs = std::filesystem;

struct ProfileStore::Entry {
  mutable std::shared_mutex mutex;
  UserProfile profile;
  std::set<std::pair<std::string, std::int64_t>> keys;
  std::set<std::string> record_ids;

  void index(const InteractionRecord& r) {
    keys.emplace(r.item_id, r.timestamp);
    record_ids.insert(r.record_id);
  }
};

nlohmann::ordered_json profile_document(const UserProfile& profile) {
  nlohmann::ordered_json doc;
  doc["user_id"] = profile.user_id;
  doc["revision"] = profile.revision;
  doc["records"] = nlohmann::ordered_json::array();
  for (const auto& r : profile.records) doc["records"].push_back(to_json(r));
  return doc;
}

UserProfile profile_from_document(const nlohmann::json& doc) {
  UserProfile p;
  try {
    p.user_id = doc.at("user_id").get<std::string>();
    p.revision = doc.at("revision").get<std::uint64_t>();
    for (const auto& r : doc.at("records")) p.records.push_back(record_from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, std::string("malformed profile document: ") + e.what());
  }
  return p;
}

std::string encode_user_file_stem(const std::string& user_id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (std::size_t i = 0; i < user_id.size(); ++i) {
    const auto c = static_cast<unsigned char>(user_id[i]);
    const bool plain = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                       (c >= '0' && c <= '9') || c == '_' || c == '-' || (c == '.' && i > 0);
    if (plain) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

ProfileStore::ProfileStore() = default;

ProfileStore::ProfileStore(fs::path directory) : directory_(std::move(directory)) {
  std::error_code ec;
  fs::create_directories(*directory_, ec);
  if (ec) {
    throw Error(ErrorCode::storage_unavailable,
                "cannot create profile directory " + directory_->string() + ": " + ec.message());
  }
  load_all();
}

ProfileStore::~ProfileStore() = default;

std::shared_ptr<ProfileStore::Entry> ProfileStore::find(const std::string& user_id) const {
  std::shared_lock lock(users_mutex_);
  const auto it = users_.find(user_id);
  return it == users_.end() ? nullptr : it->second;
}

std::shared_ptr<ProfileStore::Entry> ProfileStore::find_or_create(const std::string& user_id) {
  if (auto existing = find(user_id)) return existing;
  if (user_id.empty()) throw Error(ErrorCode::validation, "user_id must not be empty");
  std::unique_lock lock(users_mutex_);
  auto& slot = users_[user_id];
  if (!slot) {
    slot = std::make_shared<Entry>();
    slot->profile.user_id = user_id;
    if (directory_) {
      std::ofstream index(*directory_ / "index", std::ios::app | std::ios::binary);
      index << user_id << '\n';
      index.flush();
      if (!index) {
        users_.erase(user_id);
        throw Error(ErrorCode::storage_unavailable, "cannot update profile index");
      }
    }
  }
  return slot;
}

void ProfileStore::create_profile(const std::string& user_id) { find_or_create(user_id); }

namespace {

void write_meta(const fs::path& meta_path, std::uint64_t revision) {
  const auto tmp = fs::path(meta_path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    out << "revision " << revision << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::storage_unavailable, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, meta_path, ec);
  if (ec) throw Error(ErrorCode::storage_unavailable, "cannot replace " + meta_path.string());
}

std::uint64_t read_meta(const fs::path& meta_path) {
  std::ifstream in(meta_path);
  std::string word;
  std::uint64_t revision = 0;
  if (in >> word >> revision && word == "revision") return revision;
  return 0;
}

}  // namespace

std::uint64_t ProfileStore::append_record(const std::string& user_id,
                                          const InteractionRecord& record) {
  validate(record);
  auto entry = find_or_create(user_id);
  std::unique_lock lock(entry->mutex);
  if (entry->keys.count({record.item_id, record.timestamp}) > 0) {
    throw Error(ErrorCode::duplicate_record, "item " + record.item_id + " at timestamp " +
                                                 std::to_string(record.timestamp) +
                                                 " already stored for user " + user_id);
  }
  if (entry->record_ids.count(record.record_id) > 0) {
    throw Error(ErrorCode::duplicate_record, "record_id " + record.record_id + " already used");
  }
  const auto next_revision = entry->profile.revision + 1;
  if (directory_) {
    const auto stem = encode_user_file_stem(user_id);
    std::ofstream out(*directory_ / (stem + ".ndrec"), std::ios::app | std::ios::binary);
    out << to_json(record).dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::storage_unavailable, "cannot append record for " + user_id);
    write_meta(*directory_ / (stem + ".meta"), next_revision);
  }
  entry->profile.records.push_back(record);
  entry->index(record);
  entry->profile.revision = next_revision;
  return next_revision;
}

std::vector<InteractionRecord> ProfileStore::read_profile(
    const std::string& user_id, const std::optional<Domain>& domain_filter) const {
  auto entry = find(user_id);
  if (!entry) return {};
  std::shared_lock lock(entry->mutex);
  if (!domain_filter) return entry->profile.records;
  std::vector<InteractionRecord> out;
  for (const auto& r : entry->profile.records) {
    if (r.domain == *domain_filter) out.push_back(r);
  }
  return out;
}

bool ProfileStore::contains(const std::string& user_id) const { return find(user_id) != nullptr; }

std::uint64_t ProfileStore::revision(const std::string& user_id) const {
  auto entry = find(user_id);
  if (!entry) return 0;
  std::shared_lock lock(entry->mutex);
  return entry->profile.revision;
}

std::vector<std::string> ProfileStore::users() const {
  std::shared_lock lock(users_mutex_);
  std::vector<std::string> out;
  out.reserve(users_.size());
  for (const auto& [id, _] : users_) out.push_back(id);
  return out;
}

UserProfile ProfileStore::profile(const std::string& user_id) const {
  auto entry = find(user_id);
  if (!entry) throw Error(ErrorCode::unknown_user, "unknown user " + user_id);
  std::shared_lock lock(entry->mutex);
  return entry->profile;
}

nlohmann::ordered_json ProfileStore::snapshot_profile(const std::string& user_id) const {
  return profile_document(profile(user_id));
}

void ProfileStore::restore_profile(const UserProfile& profile) {
  auto fresh = std::make_shared<Entry>();
  for (const auto& r : profile.records) {
    validate(r);
    if (fresh->keys.count({r.item_id, r.timestamp}) > 0 || fresh->record_ids.count(r.record_id) > 0) {
      throw Error(ErrorCode::duplicate_record, "snapshot for " + profile.user_id +
                                                   " repeats record " + r.record_id);
    }
    fresh->index(r);
  }
  fresh->profile = profile;
  auto entry = find_or_create(profile.user_id);
  std::unique_lock lock(entry->mutex);
  entry->profile = fresh->profile;
  entry->keys = std::move(fresh->keys);
  entry->record_ids = std::move(fresh->record_ids);
  if (directory_) rewrite_user_files(*entry);
}

void ProfileStore::rewrite_user_files(const Entry& entry) const {
  const auto stem = encode_user_file_stem(entry.profile.user_id);
  const auto path = *directory_ / (stem + ".ndrec");
  const auto tmp = fs::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    for (const auto& r : entry.profile.records) out << to_json(r).dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::storage_unavailable, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::storage_unavailable, "cannot replace " + path.string());
  write_meta(*directory_ / (stem + ".meta"), entry.profile.revision);
}

void ProfileStore::load_all() {
  std::ifstream index(*directory_ / "index", std::ios::binary);
  std::string user_id;
  while (std::getline(index, user_id)) {
    if (user_id.empty() || users_.count(user_id) > 0) continue;
    auto entry = std::make_shared<Entry>();
    entry->profile.user_id = user_id;
    const auto stem = encode_user_file_stem(user_id);
    const auto path = *directory_ / (stem + ".ndrec");

    std::string content;
    if (std::ifstream in(path, std::ios::binary); in) {
      std::ostringstream buf;
      buf << in.rdbuf();
      content = buf.str();
    }
    std::size_t complete = content.rfind('\n');
    complete = complete == std::string::npos ? 0 : complete + 1;
    if (complete != content.size()) {
      // Torn final write: drop the partial line.
      std::error_code ec;
      fs::resize_file(path, complete, ec);
      content.resize(complete);
    }
    std::size_t line_no = 0;
    for (const auto& line : split(content, '\n')) {
      ++line_no;
      if (line.empty()) continue;
      InteractionRecord r;
      try {
        r = record_from_json(nlohmann::json::parse(line));
      } catch (const std::exception& e) {
        throw Error(ErrorCode::storage_unavailable, path.string() + ":" +
                                                        std::to_string(line_no) + ": " + e.what());
      }
      entry->profile.records.push_back(r);
      entry->index(r);
    }
    const auto meta_revision = read_meta(*directory_ / (stem + ".meta"));
    entry->profile.revision = std::max<std::uint64_t>(meta_revision, entry->profile.records.size());
    if (meta_revision != entry->profile.revision && !entry->profile.records.empty()) {
      write_meta(*directory_ / (stem + ".meta"), entry->profile.revision);
    }
    users_.emplace(user_id, std::move(entry));
  }
}

}  // namespace memrec

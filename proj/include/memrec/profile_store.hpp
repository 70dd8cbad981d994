#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memrec/record.hpp"

namespace memrec {

struct UserProfile {
  std::string user_id;
  std::vector<InteractionRecord> records;  // insertion order
  std::uint64_t revision = 0;

  friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

nlohmann::ordered_json profile_document(const UserProfile& profile);
UserProfile profile_from_document(const nlohmann::json& doc);

// Append-only per-user memory tables.
//
// Without a directory the store lives in memory. With one it keeps
//   <dir>/index                 one user id per line, in creation order
//   <dir>/<user>.ndrec          one JSON record per line (see to_json)
//   <dir>/<user>.meta           "revision <n>"
// User ids are percent-encoded when turned into file names. A trailing
// partial line left by a crash is discarded on open.
//
// Thread safety: any number of readers, one writer per user; writes for
// different users proceed in parallel.
class ProfileStore {
 public:
  ProfileStore();
  explicit ProfileStore(std::filesystem::path directory);
  ~ProfileStore();

  ProfileStore(const ProfileStore&) = delete;
  ProfileStore& operator=(const ProfileStore&) = delete;

  // Registers an empty profile; no-op when the user already exists.
  void create_profile(const std::string& user_id);

  // Returns the new revision. Throws duplicate_record when (item_id,
  // timestamp) or record_id is already present, validation on a bad record,
  // storage_unavailable when the file write fails.
  std::uint64_t append_record(const std::string& user_id, const InteractionRecord& record);

  // Unknown users read as empty.
  std::vector<InteractionRecord> read_profile(
      const std::string& user_id, const std::optional<Domain>& domain_filter = std::nullopt) const;

  bool contains(const std::string& user_id) const;
  std::uint64_t revision(const std::string& user_id) const;
  std::vector<std::string> users() const;

  // Throws unknown_user.
  UserProfile profile(const std::string& user_id) const;
  nlohmann::ordered_json snapshot_profile(const std::string& user_id) const;

  // Replaces (or creates) a profile from a snapshot document.
  void restore_profile(const UserProfile& profile);

  const std::optional<std::filesystem::path>& directory() const { return directory_; }

 private:
  struct Entry;

  std::shared_ptr<Entry> find(const std::string& user_id) const;
  std::shared_ptr<Entry> find_or_create(const std::string& user_id);
  void load_all();
  void rewrite_user_files(const Entry& entry) const;

  std::optional<std::filesystem::path> directory_;
  mutable std::shared_mutex users_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> users_;
};

std::string encode_user_file_stem(const std::string& user_id);

}  // namespace memrec

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "memrec/profile_store.hpp"
#include "memrec/session.hpp"

namespace memrec {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path reports_dir = "var/reports";
  std::optional<std::filesystem::path> static_dir;
};

// JSON API over a session engine and a read-only reports directory.
//
//   POST /api/session/{user_id}/message            {"text": "..."} -> session event
//   GET  /api/profile/{user_id}                    -> {"user_id", "revision", "records"}
//   GET  /api/profile/{user_id}/memory-preview?title=&genres=&k=
//                                                  -> ranked memory, no model call
//   GET  /api/reports                              -> report summaries
//   GET  /api/reports/{id}                         -> full report
//
// Errors are {"error": {"code", "message"}} with status 400 (validation),
// 404 (user_not_found, report_not_found, not_found) or 503
// (provider_unavailable).
class Service {
 public:
  Service(SessionEngine& engine, ProfileStore& store, ServiceOptions options);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Returns the bound port. Throws storage_unavailable when binding fails.
  int bind();
  // Blocks until stop(). Calls bind() first if needed.
  void run();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace memrec

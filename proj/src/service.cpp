#include "memrec/service.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <regex>

#include <httplib.h>

#include "memrec/error.hpp"
#include "memrec/retrieval.hpp"
#include "memrec/text.hpp"

namespace memrec {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void send_json(httplib::Response& res, int status, const ojson& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code,
                const std::string& message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

void send_exception(httplib::Response& res, const Error& e) {
  switch (e.code()) {
    case ErrorCode::validation:
    case ErrorCode::empty_query:
    case ErrorCode::empty_text:
      return send_error(res, 400, "validation_error", e.what());
    case ErrorCode::unknown_user:
      return send_error(res, 404, "user_not_found", e.what());
    case ErrorCode::provider_unavailable:
      return send_error(res, 503, "provider_unavailable", e.what());
    default:
      return send_error(res, 500, error_code_name(e.code()), e.what());
  }
}

bool valid_report_id(const std::string& id) {
  static const std::regex pattern(R"([A-Za-z0-9][A-Za-z0-9._-]*)");
  return std::regex_match(id, pattern);
}

std::optional<nlohmann::json> read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    nlohmann::json doc;
    in >> doc;
    return doc;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

}  // namespace

struct Service::Impl {
  SessionEngine& engine;
  ProfileStore& store;
  ServiceOptions options;
  httplib::Server server;
  int port = -1;
  std::atomic<bool> running{false};

  Impl(SessionEngine& e, ProfileStore& s, ServiceOptions o)
      : engine(e), store(s), options(std::move(o)) {
    routes();
  }

  void routes() {
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                    std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        send_exception(res, e);
      } catch (const std::exception& e) {
        send_error(res, 500, "internal_error", e.what());
      }
    });
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (res.status == 404 && res.body.empty()) {
        send_error(res, 404, "not_found", "no route for " + req.method + " " + req.path);
      }
    });

    server.Post(R"(/api/session/([^/]+)/message)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  post_message(req.matches[1], req, res);
                });
    server.Get(R"(/api/profile/([^/]+)/memory-preview)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 memory_preview(req.matches[1], req, res);
               });
    server.Get(R"(/api/profile/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      get_profile(req.matches[1], res);
    });
    server.Get("/api/reports", [this](const httplib::Request&, httplib::Response& res) {
      list_reports(res);
    });
    server.Get(R"(/api/reports/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      get_report(req.matches[1], res);
    });
    if (options.static_dir) server.set_mount_point("/", options.static_dir->string());
  }

  void post_message(const std::string& user_id, const httplib::Request& req,
                    httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return send_error(res, 400, "validation_error", "body must be a JSON object");
    }
    if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
      return send_error(res, 400, "validation_error", "body must carry a string field \"text\"");
    }
    const auto text = body["text"].get<std::string>();
    if (trim(text).empty()) return send_error(res, 400, "validation_error", "text must not be empty");
    send_json(res, 200, to_json(engine.handle_query(user_id, text)));
  }

  void get_profile(const std::string& user_id, httplib::Response& res) {
    if (!store.contains(user_id)) {
      return send_error(res, 404, "user_not_found", "no profile for user " + user_id);
    }
    send_json(res, 200, store.snapshot_profile(user_id));
  }

  void memory_preview(const std::string& user_id, const httplib::Request& req,
                      httplib::Response& res) {
    if (!store.contains(user_id)) {
      return send_error(res, 404, "user_not_found", "no profile for user " + user_id);
    }
    TargetItem target;
    target.item_id = "preview";
    target.title = trim(req.get_param_value("title"));
    for (const auto& g : split(req.get_param_value("genres"), ',')) {
      if (!trim(g).empty()) target.genres.push_back(trim(g));
    }
    target.genres = canonical_genres(target.genres);
    if (target.title.empty() && target.genres.empty()) {
      return send_error(res, 400, "validation_error", "give a title or at least one genre");
    }
    if (req.has_param("domain")) target.domain = Domain::parse(req.get_param_value("domain"));
    auto config = engine.retrieval();
    if (req.has_param("k")) {
      const auto raw = trim(req.get_param_value("k"));
      std::size_t k = 0;
      const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), k);
      if (raw.empty() || ec != std::errc{} || ptr != raw.data() + raw.size() || k > 1000) {
        return send_error(res, 400, "validation_error", "k must be an integer from 0 to 1000");
      }
      config.k = k;
    }
    ojson doc;
    doc["user_id"] = user_id;
    doc["target"] = to_json(target);
    doc["k"] = config.k;
    doc["strategy"] = config.strategy.describe();
    doc["revision"] = store.revision(user_id);
    doc["memory"] = ojson::array();
    for (const auto& m : retrieve_memory(store.read_profile(user_id), target, config)) {
      doc["memory"].push_back(to_json(m));
    }
    send_json(res, 200, doc);
  }

  void list_reports(httplib::Response& res) {
    std::vector<std::string> ids;
    std::error_code ec;
    if (fs::is_directory(options.reports_dir, ec)) {
      for (const auto& entry : fs::directory_iterator(options.reports_dir, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") {
          ids.push_back(entry.path().stem().string());
        }
      }
    }
    std::sort(ids.begin(), ids.end());
    ojson doc;
    doc["reports"] = ojson::array();
    for (const auto& id : ids) {
      const auto report = read_json_file(options.reports_dir / (id + ".json"));
      if (!report || !report->is_object()) continue;
      ojson summary;
      summary["id"] = id;
      for (const char* key : {"protocol", "recommender", "users", "config_hash", "provider",
                              "mae_by_history_size", "ledger"}) {
        if (report->contains(key)) summary[key] = (*report)[key];
      }
      doc["reports"].push_back(std::move(summary));
    }
    send_json(res, 200, doc);
  }

  void get_report(const std::string& id, httplib::Response& res) {
    const auto path = options.reports_dir / (id + ".json");
    const auto report = valid_report_id(id) ? read_json_file(path) : std::nullopt;
    if (!report) return send_error(res, 404, "report_not_found", "no report with id " + id);
    send_json(res, 200, *report);
  }
};

Service::Service(SessionEngine& engine, ProfileStore& store, ServiceOptions options)
    : impl_(std::make_unique<Impl>(engine, store, std::move(options))) {}

Service::~Service() { stop(); }

int Service::bind() {
  if (impl_->port >= 0) return impl_->port;
  if (impl_->options.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(impl_->options.host);
  } else if (impl_->server.bind_to_port(impl_->options.host, impl_->options.port)) {
    impl_->port = impl_->options.port;
  }
  if (impl_->port < 0) {
    throw Error(ErrorCode::storage_unavailable, "cannot bind " + impl_->options.host + ":" +
                                                    std::to_string(impl_->options.port));
  }
  return impl_->port;
}

void Service::run() {
  bind();
  impl_->running = true;
  impl_->server.listen_after_bind();
  impl_->running = false;
}

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool Service::running() const { return impl_->server.is_running(); }

}  // namespace memrec

#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "memrec/error.hpp"
#include "memrec/eval.hpp"
#include "memrec/service.hpp"
#include "support.hpp"

using namespace memrec;
using memrec::testing::TempDir;

namespace {

class DownBackend final : public ChatBackend {
 public:
  CompletionResult complete(const CompletionRequest&) override {
    throw Error(ErrorCode::provider_unavailable, "upstream down");
  }
  std::string name() const override { return "down"; }
};

SessionConfig fixed_clock() {
  SessionConfig c;
  c.clock = [t = std::int64_t{1'000}]() mutable { return t++; };
  return c;
}

// A service on a free loopback port, running on its own thread.
struct Running {
  explicit Running(std::shared_ptr<ChatBackend> backend, std::filesystem::path reports = {})
      : gateway(std::move(backend)),
        engine(store, gateway, PromptBuilder(), fixed_clock()),
        service(engine, store, ServiceOptions{"127.0.0.1", 0, std::move(reports), std::nullopt}) {
    port = service.bind();
    thread = std::thread([this] { service.run(); });
    while (!service.running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }
  ~Running() {
    service.stop();
    thread.join();
  }

  nlohmann::json post(const std::string& user, const std::string& text, int expect = 200) {
    const auto res = client->Post("/api/session/" + user + "/message",
                                  nlohmann::json{{"text", text}}.dump(), "application/json");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, expect) << res->body;
    return nlohmann::json::parse(res->body);
  }

  nlohmann::json get(const std::string& path, int expect = 200) {
    const auto res = client->Get(path);
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, expect) << path << " " << res->body;
    return nlohmann::json::parse(res->body);
  }

  ProfileStore store;
  Gateway gateway;
  SessionEngine engine;
  Service service;
  int port = 0;
  std::thread thread;
  std::unique_ptr<httplib::Client> client;
};

std::shared_ptr<ChatBackend> stub() {
  return std::make_shared<StubBackend>(StubPolicy::constant(3));
}

}  // namespace

TEST(Api, RatingMessageGrowsProfile) {
  Running s(stub());
  s.post("u1", "I rate Heat 5/5");
  const auto before = s.get("/api/profile/u1");
  const auto event = s.post("u1", "I rate Dune 4/5");
  EXPECT_EQ(event["classified_type"], "B");
  EXPECT_EQ(event["stored_record"]["title"], "Dune");
  const auto after = s.get("/api/profile/u1");
  EXPECT_EQ(after["records"].size(), before["records"].size() + 1);
  EXPECT_EQ(after["revision"], before["revision"].get<int>() + 1);
}

TEST(Api, MemoryPreview) {
  Running s(stub());
  s.post("u1", "I rate \"Heat\" (Crime, Thriller) 5/5");
  s.post("u1", "I rate \"Up\" (Animation) 3/5");
  const auto zero = s.get("/api/profile/u1/memory-preview?genres=Crime&k=0");
  EXPECT_TRUE(zero["memory"].empty());
  const auto ranked = s.get("/api/profile/u1/memory-preview?genres=Thriller,Crime&k=5");
  ASSERT_EQ(ranked["memory"].size(), 2u);
  EXPECT_EQ(ranked["memory"][0]["record"]["title"], "Heat");
  EXPECT_EQ(ranked["memory"][0]["score"], 2.0);
  EXPECT_EQ(ranked["k"], 5);
  EXPECT_EQ(s.get("/api/profile/u1/memory-preview?title=Heat")["k"], 5);
}

TEST(Api, PreviewIsReadOnlyAndFree) {
  Running s(stub());
  s.post("u1", "I rate \"Heat\" (Crime) 5/5");
  const auto calls = s.gateway.ledger().totals().calls;
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(s.get("/api/profile/u1/memory-preview?genres=Crime&k=" + std::to_string(i))["revision"], 1);
  }
  EXPECT_EQ(s.store.revision("u1"), 1u);
  EXPECT_EQ(s.gateway.ledger().totals().calls, calls);
}

TEST(Api, ValidationAndNotFound) {
  Running s(stub());
  s.post("u1", "I rate Heat 5/5");
  EXPECT_EQ(s.get("/api/profile/u1/memory-preview?k=3", 400)["error"]["code"], "validation_error");
  EXPECT_EQ(s.get("/api/profile/u1/memory-preview?genres=Drama&k=-1", 400)["error"]["code"],
            "validation_error");
  EXPECT_EQ(s.get("/api/profile/ghost/memory-preview?genres=Drama", 404)["error"]["code"],
            "user_not_found");
  EXPECT_EQ(s.get("/api/profile/ghost", 404)["error"]["code"], "user_not_found");
  EXPECT_EQ(s.get("/api/reports/nope", 404)["error"]["code"], "report_not_found");
  EXPECT_EQ(s.get("/api/reports/.hidden", 404)["error"]["code"], "report_not_found");
  EXPECT_EQ(s.get("/api/elsewhere", 404)["error"]["code"], "not_found");
  auto res = s.client->Post("/api/session/u1/message", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  res = s.client->Post("/api/session/u1/message", R"({"text": "  "})", "application/json");
  EXPECT_EQ(res->status, 400);
  res = s.client->Post("/api/session/u1/message", R"({"message": "hi"})", "application/json");
  EXPECT_EQ(res->status, 400);
}

TEST(Api, GatewayOutageIs503) {
  Running s(std::make_shared<DownBackend>());
  const auto body = s.post("u1", "Recommend me a thriller", 503);
  EXPECT_EQ(body["error"]["code"], "provider_unavailable");
  EXPECT_EQ(s.store.revision("u1"), 0u);
}

TEST(Api, ReportsListingAndFetch) {
  TempDir dir;
  Gateway gw(stub());
  PreparedUser user;
  user.user_id = "1";
  for (int i = 0; i < 19; ++i) {
    InteractionRecord r;
    r.record_id = r.item_id = "i" + std::to_string(i);
    r.title = "T" + std::to_string(i);
    r.genres = {"Drama"};
    r.rating = 3;
    r.timestamp = i;
    user.history.push_back(r);
  }
  const auto report = EvalHarness(gw, PromptBuilder()).run(ProtocolConfig{}, {user});
  write_report(dir / "single-map-abc.json", report);
  memrec::testing::spit(dir / "notes.txt", "ignored");
  Running s(stub(), dir.path());
  const auto list = s.get("/api/reports");
  ASSERT_EQ(list["reports"].size(), 1u);
  EXPECT_EQ(list["reports"][0]["id"], "single-map-abc");
  EXPECT_EQ(list["reports"][0]["recommender"], "map");
  const auto full = s.get("/api/reports/single-map-abc");
  EXPECT_EQ(full["traces"].size(), 18u);
  EXPECT_TRUE(full.contains("mae_by_history_size"));
}

TEST(Api, MatchesEngineDirectly) {
  const std::vector<std::string> script = {
      "I rate Heat 4/5", "Recommend me a thriller", "I rate \"Up\" (Animation) 3 out of 5",
      "Tell me a joke",  "I rate Heat 4/5",          "I watched Dune and I'd give it 5 stars"};
  Running s(stub());
  for (const auto& q : script) s.client->Post("/api/session/u1/message", nlohmann::json{{"text", q}}.dump(),
                                              "application/json");

  ProfileStore store;
  Gateway gw(stub());
  SessionEngine engine(store, gw, PromptBuilder(), fixed_clock());
  for (const auto& q : script) engine.handle_query("u1", q);

  EXPECT_EQ(s.get("/api/profile/u1"), nlohmann::json::parse(store.snapshot_profile("u1").dump()));
  EXPECT_EQ(s.store.profile("u1"), store.profile("u1"));
}

TEST(Api, ConcurrentUsers) {
  Running s(stub());
  std::vector<std::thread> threads;
  for (int u = 0; u < 4; ++u) {
    threads.emplace_back([&, u] {
      httplib::Client c("127.0.0.1", s.port);
      for (int i = 0; i < 8; ++i) {
        c.Post("/api/session/user" + std::to_string(u) + "/message",
               nlohmann::json{{"text", "I rate \"Film " + std::to_string(i) + "\" 4/5"}}.dump(),
               "application/json");
      }
    });
  }
  for (auto& t : threads) t.join();
  for (int u = 0; u < 4; ++u) EXPECT_EQ(s.store.revision("user" + std::to_string(u)), 8u);
}

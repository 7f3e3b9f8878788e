#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "ipsc/http_service.hpp"
#include "ipsc/service.hpp"
#include "support.hpp"

using namespace ipsc;
using namespace ipsc::testing;

namespace {

Json op(const std::string& name, Json fields = Json::object()) {
  fields["op"] = name;
  return fields;
}

Json seeds_body(std::uint64_t ipsc_id, std::uint64_t dfc_id) {
  return seeds_to_json({{CellId{ipsc_id}, Label::iPSC}, {CellId{dfc_id}, Label::DfC}});
}

struct Fixture {
  Workspace ws;
  std::string id;
  std::string token;

  Fixture() {
    id = ws.add_sequence(event_sequence());
    token = ws.open_session(id).token;
  }
  std::uint64_t rev() const { return ws.summary(id).revision; }
  Json run(const Json& o) { return ws.mutate(id, token, rev(), o); }
};

}  // namespace

TEST(Workspace, RegistersAndSummarizes) {
  Workspace ws;
  EXPECT_EQ(ws.add_sequence(event_sequence()), "t");
  EXPECT_THROW(ws.add_sequence(event_sequence()), Error);
  const auto all = ws.list();
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].frames, 3u);
  EXPECT_EQ(all[0].cells, 8u);
  EXPECT_FALSE(all[0].tracked);
  EXPECT_THROW(ws.summary("nope"), NotFoundError);
  EXPECT_THROW(ws.set_detections("nope", SequenceManifest{}), NotFoundError);
}

TEST(Workspace, WriterLockAndTokens) {
  Fixture fx;
  EXPECT_TRUE(fx.ws.summary(fx.id).locked);
  EXPECT_THROW(fx.ws.open_session(fx.id), LockHeld);
  EXPECT_THROW(fx.ws.mutate(fx.id, "bogus", 0, op("start_tracking")), SessionError);
  EXPECT_THROW(fx.ws.mutate(fx.id, "", 0, op("start_tracking")), SessionError);

  const SessionInfo second = fx.ws.open_session(fx.id, true);
  EXPECT_THROW(fx.ws.mutate(fx.id, fx.token, 0, op("start_tracking")), Error);
  EXPECT_NO_THROW(fx.ws.mutate(fx.id, second.token, 0, op("start_tracking")));
  fx.ws.close_session(second.token);
  EXPECT_FALSE(fx.ws.summary(fx.id).locked);
  EXPECT_THROW(fx.ws.close_session(second.token), NotFoundError);
  EXPECT_NO_THROW(fx.ws.open_session(fx.id));
}

TEST(Workspace, StaleRevisionIsRejectedWithTheCurrentOne) {
  Fixture fx;
  fx.run(op("start_tracking"));
  try {
    fx.ws.mutate(fx.id, fx.token, 0, op("reject_proposal", {{"id", "fusion-3-4"}}));
    FAIL() << "expected RevisionConflict";
  } catch (const RevisionConflict& e) {
    EXPECT_EQ(e.current(), 1u);
  }
  EXPECT_EQ(fx.rev(), 1u);
}

TEST(Workspace, ConcurrentWritersOnTheSameRevisionSerialize) {
  Fixture fx;
  fx.run(op("start_tracking"));
  const std::uint64_t r = fx.rev();
  std::atomic<int> ok{0}, stale{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&] {
      try {
        fx.ws.mutate(fx.id, fx.token, r, op("start_tracking"));
        ++ok;
      } catch (const RevisionConflict&) {
        ++stale;
      }
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(ok, 1);
  EXPECT_EQ(stale, 7);
  EXPECT_EQ(fx.rev(), r + 1);
  EXPECT_EQ(fx.ws.log(fx.id).size(), 2u);
}

TEST(Workspace, ProposalsEditsAndPropagation) {
  Fixture fx;
  const Json started = fx.run(op("start_tracking"));
  EXPECT_EQ(started["proposals"], 2);

  const Json accepted = fx.run(op("accept_proposal", {{"id", "division-2-2"}}));
  EXPECT_EQ(accepted["edges"], 2);
  SequenceState s = fx.ws.snapshot(fx.id);
  EXPECT_EQ(s.tracker->forest.edges.at({CellId{2}, CellId{4}}), EdgeKind::Division);
  EXPECT_EQ(s.tracker->forest.edges.at({CellId{2}, CellId{5}}), EdgeKind::Division);
  EXPECT_EQ(s.tracker->proposals.size(), 1u);
  EXPECT_EQ(s.tracker->forest.revision, s.revision);
  EXPECT_THROW(fx.run(op("accept_proposal", {{"id", "division-2-2"}})), NotFoundError);

  fx.run(op("accept_proposal", {{"id", "fusion-3-4"}}));
  const std::uint64_t before = fx.rev();
  const Json bad = edit_to_json(edit::RemoveEdge{CellId{2}, CellId{4}});
  EXPECT_THROW(fx.run(op("apply_edit", {{"edit", bad}})), EditRejected);
  EXPECT_EQ(fx.rev(), before);

  EXPECT_THROW(fx.ws.propagate(fx.id), Error);  // no seeds yet
  Json seeds = seeds_body(7, 8);
  EXPECT_THROW(fx.run(op("set_seeds", seeds_body(3, 8))), Error);  // 3 is not on the final frame
  fx.run(op("set_seeds", seeds));
  const std::uint64_t r = fx.rev();
  const Json p = fx.ws.propagate(fx.id);
  EXPECT_EQ(fx.rev(), r);
  ASSERT_TRUE(p["ok"].get<bool>());
  std::map<std::uint64_t, std::string> labels;
  for (const auto& l : p["labels"]) labels[l["id"].get<std::uint64_t>()] = l["label"].get<std::string>();
  EXPECT_EQ(labels.at(1), "iPSC");
  EXPECT_EQ(labels.at(2), "DfC");
  EXPECT_EQ(labels.at(4), "DfC");
  EXPECT_EQ(labels.at(6), "unlabeled");
  EXPECT_EQ(p["uncategorizable"], Json::array({6}));
}

TEST(Workspace, ConflictingSeedsAreReportedNotApplied) {
  // 1 divides into 2 and 3, which continue as 4 and 5.
  Workspace ws;
  const std::string id = ws.add_sequence(make_sequence(
      {rect_cell(1, 1, 100, 100, 24, 24), rect_cell(2, 2, 100, 100, 12, 24), rect_cell(3, 2, 112, 100, 12, 24),
       rect_cell(4, 3, 100, 101, 12, 24), rect_cell(5, 3, 112, 101, 12, 24)},
      {1, 2, 3}));
  const std::string token = ws.open_session(id).token;
  ws.mutate(id, token, 0, op("start_tracking", {{"mode", "batch"}}));
  ws.mutate(id, token, 1, op("set_seeds", seeds_body(4, 5)));
  const Json p = ws.propagate(id);
  EXPECT_FALSE(p["ok"].get<bool>());
  ASSERT_EQ(p["conflicts"].size(), 1u);
  EXPECT_EQ(p["conflicts"][0]["node"], 1);
  EXPECT_EQ(p["conflicts"][0]["seeds"], Json::array({4, 5}));
  EXPECT_EQ(p["revision"], 2);
  EXPECT_EQ(ws.summary(id).revision, 2u);
}

TEST(Workspace, ReplayingTheLogRebuildsTheState) {
  Fixture fx;
  fx.run(op("start_tracking"));
  fx.run(op("accept_proposal", {{"id", "division-2-2"}}));
  fx.run(op("reject_proposal", {{"id", "fusion-3-4"}}));
  fx.run(op("apply_edit", {{"edit", edit_to_json(edit::SplitTrack{CellId{7}})}}));
  fx.run(op("resume", {{"frame", 2}}));
  fx.run(op("set_seeds", seeds_body(7, 8)));
  const SequenceState live = fx.ws.snapshot(fx.id);
  const SequenceState replayed = replay_log(event_sequence(), fx.ws.log(fx.id));
  EXPECT_EQ(replayed.revision, live.revision);
  EXPECT_EQ(replayed.seeds, live.seeds);
  EXPECT_EQ(replayed.tracker->forest.edges, live.tracker->forest.edges);
  EXPECT_TRUE(same_lineage(replayed.tracker->forest, live.tracker->forest));
  EXPECT_EQ(replayed.tracker->events, live.tracker->events);
  EXPECT_EQ(replayed.tracker->proposals.size(), live.tracker->proposals.size());

  auto broken = fx.ws.log(fx.id);
  broken[2]["revision"] = 99;
  EXPECT_THROW(replay_log(event_sequence(), broken), Error);
}

TEST(Workspace, MetricsNeedDetections) {
  Fixture fx;
  EXPECT_THROW(fx.ws.metrics(fx.id, EvalConfig{}), NotFoundError);
  SequenceManifest gt = event_sequence();
  for (auto& c : gt.cells) c.label = c.id.value % 2 ? Label::iPSC : Label::DfC;
  Workspace ws;
  const std::string id = ws.add_sequence(gt);
  SequenceManifest det = gt;
  det.provenance = Provenance::Detector;
  for (auto& c : det.cells) c.confidence = 0.9;
  ws.set_detections(id, det);
  const Json m = ws.metrics(id, EvalConfig{});
  EXPECT_EQ(m["pooled"]["counts"]["TP"], 4);
  EXPECT_EQ(m["pooled"]["auc"], 1.0);
}

// ---- HTTP -----------------------------------------------------------------

class HttpTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ws_.add_sequence(event_sequence());
    service_ = std::make_unique<HttpService>(ws_);
    port_ = service_->bind("127.0.0.1", 0);
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { service_->listen(); });
    service_->wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    service_->stop();
    thread_.join();
  }

  struct Reply {
    int status = 0;
    Json body;
  };

  Reply call(const std::string& method, const std::string& path, const Json& body = nullptr,
             const std::string& token = "") {
    httplib::Headers h;
    if (!token.empty()) h.emplace("X-Session-Token", token);
    const std::string text = body.is_null() ? "" : body.dump();
    httplib::Result r = method == "GET"    ? client_->Get(path, h)
                        : method == "PUT"  ? client_->Put(path, h, text, "application/json")
                        : method == "DELETE" ? client_->Delete(path, h)
                                             : client_->Post(path, h, text, "application/json");
    if (!r) return {};
    Reply out{r->status, nullptr};
    if (r->get_header_value("Content-Type") == "application/json") out.body = Json::parse(r->body);
    return out;
  }

  std::string open() {
    const Reply r = call("POST", "/api/v1/sequences/t/sessions", Json::object());
    return r.body["token"];
  }

  Workspace ws_;
  std::unique_ptr<HttpService> service_;
  std::thread thread_;
  int port_ = 0;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(HttpTest, ReadEndpoints) {
  Reply r = call("GET", "/api/v1/sequences");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["sequences"][0]["id"], "t");
  r = call("GET", "/api/v1/sequences/t");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["frame_list"], Json::array({1, 2, 3}));
  r = call("GET", "/api/v1/sequences/t/frames/2");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["cells"].size(), 4u);
  EXPECT_EQ(call("GET", "/api/v1/sequences/t/frames/9").status, 404);
  EXPECT_EQ(call("GET", "/api/v1/sequences/zz").status, 404);
  EXPECT_EQ(call("GET", "/api/v1/sequences/t/forest").status, 404);
  EXPECT_EQ(call("GET", "/api/v1/sequences/t/frames/1/image").status, 404);
  r = call("GET", "/api/v1/sequences/t/events");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["revision"], 0);
}

TEST_F(HttpTest, MutationStatusCodes) {
  // 401 without a token, 400 without a revision.
  Reply r = call("POST", "/api/v1/sequences/t/tracking", {{"revision", 0}});
  EXPECT_EQ(r.status, 401);
  EXPECT_EQ(r.body["revision"], 0);
  const std::string token = open();
  EXPECT_EQ(call("POST", "/api/v1/sequences/t/tracking", Json::object(), token).status, 400);
  EXPECT_EQ(call("POST", "/api/v1/sequences/t/tracking", {{"revision", 0}, {"mode", "fast"}}, token).status, 400);

  r = call("POST", "/api/v1/sequences/t/tracking", {{"revision", 0}}, token);
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["revision"], 1);

  // 409 with the current revision for a stale write and for a second writer.
  r = call("POST", "/api/v1/sequences/t/proposals/division-2-2/accept", {{"revision", 0}}, token);
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(r.body["kind"], "stale_revision");
  EXPECT_EQ(r.body["revision"], 1);
  r = call("POST", "/api/v1/sequences/t/sessions", Json::object());
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(r.body["kind"], "locked");
  EXPECT_EQ(r.body["revision"], 1);

  // 404 for an unknown proposal.
  EXPECT_EQ(call("POST", "/api/v1/sequences/t/proposals/nope/accept", {{"revision", 1}}, token).status, 404);

  // Accepting the division adds Division edges.
  r = call("POST", "/api/v1/sequences/t/proposals/division-2-2/accept", {{"revision", 1}}, token);
  ASSERT_EQ(r.status, 200);
  r = call("GET", "/api/v1/sequences/t/forest");
  ASSERT_EQ(r.status, 200);
  int division_edges = 0;
  for (const auto& rec : r.body["records"])
    if (rec["type"] == "edge" && rec["kind"] == "division") {
      EXPECT_EQ(rec["earlier"], 2);
      ++division_edges;
    }
  EXPECT_EQ(division_edges, 2);
  EXPECT_EQ(call("GET", "/api/v1/sequences/t/proposals").body["proposals"].size(), 1u);

  // 422 names the violated invariant.
  r = call("POST", "/api/v1/sequences/t/edits",
           {{"revision", 2}, {"edit", edit_to_json(edit::RemoveEdge{CellId{2}, CellId{4}})}}, token);
  EXPECT_EQ(r.status, 422);
  ASSERT_FALSE(r.body["violations"].empty());
  EXPECT_EQ(r.body["violations"][0]["kind"], "division_arity");
  EXPECT_EQ(r.body["revision"], 2);
}

TEST_F(HttpTest, SeedsPropagateAndLog) {
  const std::string token = open();
  ASSERT_EQ(call("POST", "/api/v1/sequences/t/tracking", {{"revision", 0}, {"mode", "batch"}}, token).status, 200);
  Json body = seeds_body(7, 8);
  body["revision"] = 1;
  Reply r = call("PUT", "/api/v1/sequences/t/seeds", body, token);
  ASSERT_EQ(r.status, 200);
  r = call("GET", "/api/v1/sequences/t/seeds");
  EXPECT_EQ(r.body["seeds"].size(), 2u);

  r = call("POST", "/api/v1/sequences/t/propagate");
  ASSERT_EQ(r.status, 200);
  EXPECT_TRUE(r.body["ok"].get<bool>());
  EXPECT_EQ(r.body["revision"], 2);

  r = call("GET", "/api/v1/sequences/t/log");
  ASSERT_EQ(r.status, 200);
  ASSERT_EQ(r.body["log"].size(), 2u);
  EXPECT_EQ(r.body["log"][0]["op"]["op"], "start_tracking");
  std::vector<Json> log(r.body["log"].begin(), r.body["log"].end());
  const SequenceState replayed = replay_log(event_sequence(), log);
  EXPECT_EQ(replayed.tracker->forest.edges, ws_.snapshot("t").tracker->forest.edges);

  EXPECT_EQ(call("DELETE", "/api/v1/sessions/" + token).status, 200);
  EXPECT_EQ(call("DELETE", "/api/v1/sessions/" + token).status, 404);
  r = call("PUT", "/api/v1/sequences/t/seeds", body, token);
  EXPECT_EQ(r.status, 401);
}

TEST_F(HttpTest, MalformedJsonIs400) {
  const std::string token = open();
  httplib::Headers h{{"X-Session-Token", token}};
  auto r = client_->Post("/api/v1/sequences/t/tracking", h, "{oops", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(Json::parse(r->body)["revision"], 0);
}

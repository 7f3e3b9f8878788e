#include "ipsc/http_service.hpp"

#include <fstream>
#include <sstream>

#include <httplib.h>

#include "ipsc/config.hpp"

namespace ipsc {

namespace {

constexpr const char* kJson = "application/json";
constexpr const char* kTokenHeader = "X-Session-Token";

struct HttpError : Error {
  HttpError(int status, const std::string& what) : Error(what), status(status) {}
  int status;
};

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  Json j;
  try {
    j = Json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw HttpError(400, std::string("request body is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
  return j;
}

std::uint64_t expected_revision(const Json& body) {
  auto it = body.find("revision");
  if (it == body.end() || !it->is_number_unsigned())
    throw HttpError(400, "mutating requests need the expected 'revision'");
  return it->get<std::uint64_t>();
}

void send(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

Json summary_json(const SequenceSummary& s) {
  return {{"id", s.id},         {"frames", s.frames},        {"cells", s.cells},
          {"revision", s.revision}, {"tracked", s.tracked}, {"has_detections", s.has_detections},
          {"locked", s.locked}};
}

}  // namespace

struct HttpService::Impl {
  Workspace& ws;
  HttpOptions options;
  httplib::Server server;

  Impl(Workspace& w, HttpOptions o) : ws(w), options(std::move(o)) { routes(); }

  // Runs a handler and maps exceptions onto the status-code contract.
  template <class Fn>
  void guarded(httplib::Response& res, const std::string& sequence, Fn&& fn) {
    Json err;
    int status = 500;
    try {
      fn();
      return;
    } catch (const HttpError& e) {
      status = e.status;
      err["error"] = e.what();
    } catch (const RevisionConflict& e) {
      status = 409;
      err["error"] = e.what();
      err["kind"] = "stale_revision";
    } catch (const LockHeld& e) {
      status = 409;
      err["error"] = e.what();
      err["kind"] = "locked";
    } catch (const SessionError& e) {
      status = 401;
      err["error"] = e.what();
    } catch (const EditRejected& e) {
      status = 422;
      err["error"] = e.what();
      Json vs = Json::array();
      for (const Violation& v : e.violations()) {
        Json nodes = Json::array();
        for (CellId id : v.nodes) nodes.push_back(id.value);
        vs.push_back({{"kind", to_string(v.kind)}, {"nodes", nodes}, {"message", v.message}});
      }
      err["violations"] = vs;
    } catch (const NotFoundError& e) {
      status = 404;
      err["error"] = e.what();
    } catch (const Error& e) {
      status = 400;
      err["error"] = e.what();
    } catch (const std::exception& e) {
      err["error"] = e.what();
    }
    if (!sequence.empty()) {
      try {
        err["revision"] = ws.summary(sequence).revision;
      } catch (const Error&) {
      }
    }
    send(res, status, err);
  }

  void mutation(const httplib::Request& req, httplib::Response& res, const std::string& id, Json op) {
    guarded(res, id, [&] {
      const Json body = parse_body(req);
      const std::uint64_t rev = expected_revision(body);
      for (auto it = body.begin(); it != body.end(); ++it)
        if (it.key() != "revision" && it.key() != "op") op[it.key()] = it.value();
      send(res, 200, ws.mutate(id, req.get_header_value(kTokenHeader), rev, op));
    });
  }

  void routes() {
    const std::string seq = "/api/v1/sequences/([^/]+)";

    server.Get("/api/v1/sequences", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, "", [&] {
        Json arr = Json::array();
        for (const auto& s : ws.list()) arr.push_back(summary_json(s));
        send(res, 200, {{"sequences", arr}});
      });
    });

    server.Get(seq, [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      guarded(res, id, [&] {
        const SequenceState s = ws.snapshot(id);
        Json j = summary_json(ws.summary(id));
        j["frame_size"] = {s.sequence.frame_size.width, s.sequence.frame_size.height};
        j["frame_list"] = s.sequence.frames;
        j["revision"] = s.revision;
        send(res, 200, j);
      });
    });

    server.Get(seq + "/frames/(-?[0-9]+)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      guarded(res, id, [&] {
        const FrameIndex f = std::stoll(req.matches[2]);
        const SequenceState s = ws.snapshot(id);
        const auto& frames = s.sequence.frames;
        if (std::find(frames.begin(), frames.end(), f) == frames.end())
          throw NotFoundError("unknown frame " + std::to_string(f));
        Json cells = Json::array();
        if (s.tracker) {
          for (const auto& [cid, c] : s.tracker->forest.nodes)
            if (c.frame == f) cells.push_back(cell_to_json(c));
        } else {
          for (const CellInstance& c : s.sequence.cells_in(f)) cells.push_back(cell_to_json(c));
        }
        Json j{{"revision", s.revision}, {"frame", f}, {"cells", cells}};
        if (auto it = s.sequence.frame_images.find(f); it != s.sequence.frame_images.end()) j["image"] = it->second;
        send(res, 200, j);
      });
    });

    server.Get(seq + "/frames/(-?[0-9]+)/image", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      guarded(res, id, [&] {
        const FrameIndex f = std::stoll(req.matches[2]);
        const SequenceState s = ws.snapshot(id);
        auto it = s.sequence.frame_images.find(f);
        if (!options.image_root || it == s.sequence.frame_images.end())
          throw NotFoundError("no image for frame " + std::to_string(f));
        std::ifstream in(*options.image_root / it->second, std::ios::binary);
        if (!in) throw NotFoundError("image file for frame " + std::to_string(f) + " is missing");
        std::ostringstream data;
        data << in.rdbuf();
        res.status = 200;
        res.set_content(data.str(), "image/x-portable-graymap");
      });
    });

    server.Get(seq + "/forest", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      guarded(res, id, [&] {
        const SequenceState s = ws.snapshot(id);
        if (!s.tracker) throw NotFoundError("sequence '" + id + "' has no forest yet");
        send(res, 200, {{"revision", s.revision}, {"records", forest_records(s.tracker->forest)}});
      });
    });

    server.Get(seq + "/events", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      guarded(res, id, [&] {
        const SequenceState s = ws.snapshot(id);
        Json arr = Json::array();
        if (s.tracker)
          for (const TrackEvent& e : s.tracker->events) arr.push_back(event_to_json(e));
        send(res, 200, {{"revision", s.revision}, {"events", arr}});
      });
    });

    server.Get(seq + "/proposals", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      guarded(res, id, [&] {
        const SequenceState s = ws.snapshot(id);
        Json arr = Json::array();
        if (s.tracker)
          for (const EventProposal& p : s.tracker->proposals) arr.push_back(proposal_to_json(p));
        send(res, 200, {{"revision", s.revision}, {"proposals", arr}});
      });
    });

    server.Get(seq + "/seeds", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      guarded(res, id, [&] {
        const SequenceState s = ws.snapshot(id);
        Json j = seeds_to_json(s.seeds);
        j["revision"] = s.revision;
        send(res, 200, j);
      });
    });

    server.Get(seq + "/log", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      guarded(res, id, [&] {
        const auto rev = ws.summary(id).revision;
        send(res, 200, {{"revision", rev}, {"log", ws.log(id)}});
      });
    });

    auto propagate = [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      guarded(res, id, [&] { send(res, 200, ws.propagate(id)); });
    };
    server.Get(seq + "/propagate", propagate);
    server.Post(seq + "/propagate", propagate);

    server.Get(seq + "/metrics", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      guarded(res, id, [&] { send(res, 200, ws.metrics(id, options.eval)); });
    });

    server.Post(seq + "/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      guarded(res, id, [&] {
        const Json body = parse_body(req);
        const bool take_over = body.value("take_over", false);
        const SessionInfo s = ws.open_session(id, take_over);
        send(res, 200, {{"token", s.token}, {"sequence", s.sequence}, {"revision", s.revision}});
      });
    });

    server.Delete("/api/v1/sessions/([^/]+)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, "", [&] {
        ws.close_session(req.matches[1]);
        send(res, 200, {{"closed", true}});
      });
    });

    server.Post(seq + "/tracking", [this](const httplib::Request& req, httplib::Response& res) {
      mutation(req, res, req.matches[1], {{"op", "start_tracking"}});
    });
    server.Post(seq + "/proposals/([^/]+)/(accept|reject)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  const std::string op = std::string(req.matches[3]) + "_proposal";
                  mutation(req, res, req.matches[1], {{"op", op}, {"id", std::string(req.matches[2])}});
                });
    server.Post(seq + "/edits", [this](const httplib::Request& req, httplib::Response& res) {
      mutation(req, res, req.matches[1], {{"op", "apply_edit"}});
    });
    server.Post(seq + "/resume", [this](const httplib::Request& req, httplib::Response& res) {
      mutation(req, res, req.matches[1], {{"op", "resume"}});
    });
    server.Put(seq + "/seeds", [this](const httplib::Request& req, httplib::Response& res) {
      mutation(req, res, req.matches[1], {{"op", "set_seeds"}});
    });
  }
};

HttpService::HttpService(Workspace& workspace, HttpOptions options)
    : impl_(std::make_unique<Impl>(workspace, std::move(options))) {}

HttpService::~HttpService() = default;

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpService::listen() { return impl_->server.listen_after_bind(); }

void HttpService::stop() { impl_->server.stop(); }

void HttpService::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace ipsc

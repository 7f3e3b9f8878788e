#pragma once

// HTTP binding of the Workspace under /api/v1/.
//
// Status codes: 200 ok, 400 malformed request, 401 missing or foreign
// session token, 404 unknown sequence/frame/proposal/instance, 409 stale
// revision or writer lock held elsewhere (body carries the current
// revision), 422 edit rejected (body names the violated invariants).
// Every body is JSON and carries the sequence revision where one applies.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "ipsc/service.hpp"

namespace ipsc {

struct HttpOptions {
  /// Directory that frame image paths of the manifests are relative to.
  std::optional<std::filesystem::path> image_root;
  EvalConfig eval;
};

class HttpService {
 public:
  HttpService(Workspace& workspace, HttpOptions options = {});
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Call after bind().
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ipsc

#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "flowedit/guidance.hpp"

namespace flowedit::testing {

/// Minimal guidance server for the newline-delimited JSON protocol on
/// 127.0.0.1, backed by a toy-embed scorer (score = 1 - cos).
class FakeSidecar {
 public:
  enum class Mode { Normal, WrongId, Garbage, HangUp };

  explicit FakeSidecar(Mode mode = Mode::Normal, std::uint64_t seed = 3, int embed_dim = 32);
  ~FakeSidecar();
  FakeSidecar(const FakeSidecar&) = delete;
  FakeSidecar& operator=(const FakeSidecar&) = delete;

  int port() const { return port_; }
  std::string address() const { return "127.0.0.1:" + std::to_string(port_); }
  int requests_seen() const { return requests_.load(); }

  // Response line for one request line (also used by the stdio fixture).
  std::string respond(const std::string& line);

 private:
  void serve();

  Mode mode_;
  ToyEmbedScorer scorer_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stop_{false};
  std::atomic<int> requests_{0};
  std::thread thread_;
};

}  // namespace flowedit::testing

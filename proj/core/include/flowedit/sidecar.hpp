#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowedit/guidance.hpp"

namespace flowedit {

/// Line-oriented duplex channel to a guidance sidecar.
class SidecarTransport {
 public:
  virtual ~SidecarTransport() = default;
  // Sends one line (without the trailing newline) and returns the next
  // response line. Throws TransportError.
  virtual std::string roundtrip(const std::string& line) = 0;
};

/// TCP connection to host:port.
std::unique_ptr<SidecarTransport> connect_tcp(const std::string& host, int port);
/// Child process started with /bin/sh -c `command`, spoken to over stdin/stdout.
std::unique_ptr<SidecarTransport> spawn_stdio(const std::string& command);
/// "host:port", or "stdio:<command>".
std::unique_ptr<SidecarTransport> open_sidecar(std::string_view address);

std::string base64_encode_floats(std::span<const float> values);
// Throws TransportError on malformed input.
std::vector<float> base64_decode_floats(std::string_view text);

/// Client for the newline-delimited JSON protocol. Requests carry
/// increasing ids and responses must echo them.
class SidecarClient {
 public:
  explicit SidecarClient(std::unique_ptr<SidecarTransport> transport);

  struct ScoreGrad {
    float score = 0.0f;  // 1 - cos(image, prompt)
    std::vector<float> grad;
  };

  ScoreGrad score_grad(const Image& image, std::string_view prompt);
  std::vector<float> embed_text(std::string_view prompt);
  std::vector<float> identity_embed(const Image& image);

  std::int64_t last_id() const { return next_id_ - 1; }

 private:
  std::unique_ptr<SidecarTransport> transport_;
  std::int64_t next_id_ = 1;
};

/// Scorer backed by a sidecar. Loss is score - 1, i.e. -cos, matching the
/// in-process scorers' sign convention; the gradient is unchanged.
class SidecarScorer final : public GuidanceScorer {
 public:
  explicit SidecarScorer(std::unique_ptr<SidecarTransport> transport);

  std::string_view kind() const override { return "sidecar"; }
  ScoreResult score_with_gradient(const Image& image, std::string_view prompt) override;
  std::vector<float> text_embedding(std::string_view prompt) override;

  SidecarClient& client() { return client_; }

 private:
  SidecarClient client_;
};

}  // namespace flowedit

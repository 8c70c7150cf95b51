#include "flowedit/sidecar.hpp"

#include <netdb.h>
#include <openssl/evp.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>

#include "json.hpp"

#include "flowedit/errors.hpp"

namespace flowedit {

namespace {

using nlohmann::json;

void write_all(int fd, std::string_view data, const char* what, bool socket) {
  while (!data.empty()) {
    const ssize_t n = socket ? ::send(fd, data.data(), data.size(), MSG_NOSIGNAL) : ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string(what) + ": write failed: " + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

class LineReader {
 public:
  explicit LineReader(const char* what) : what_(what) {}

  std::string read_line(int fd) {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      char chunk[65536];
      const ssize_t n = ::read(fd, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string(what_) + ": read failed: " + std::strerror(errno));
      }
      if (n == 0) throw TransportError(std::string(what_) + ": sidecar closed the connection");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  const char* what_;
  std::string buffer_;
};

class TcpTransport final : public SidecarTransport {
 public:
  TcpTransport(const std::string& host, int port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
      throw TransportError("sidecar: cannot resolve '" + host + "': " + ::gai_strerror(rc));
    }
    for (addrinfo* p = res; p != nullptr; p = p->ai_next) {
      fd_ = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
      if (fd_ < 0) continue;
      if (::connect(fd_, p->ai_addr, p->ai_addrlen) == 0) break;
      ::close(fd_);
      fd_ = -1;
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw TransportError("sidecar: cannot connect to " + host + ":" + service);
  }
  ~TcpTransport() override {
    if (fd_ >= 0) ::close(fd_);
  }
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  std::string roundtrip(const std::string& line) override {
    write_all(fd_, line + "\n", "sidecar", true);
    return reader_.read_line(fd_);
  }

 private:
  int fd_ = -1;
  LineReader reader_{"sidecar"};
};

class StdioTransport final : public SidecarTransport {
 public:
  explicit StdioTransport(const std::string& command) {
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) {
      throw TransportError(std::string("sidecar: pipe failed: ") + std::strerror(errno));
    }
    pid_ = ::fork();
    if (pid_ < 0) throw TransportError(std::string("sidecar: fork failed: ") + std::strerror(errno));
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    ::signal(SIGPIPE, SIG_IGN);
  }
  ~StdioTransport() override {
    ::close(write_fd_);
    ::close(read_fd_);
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
  StdioTransport(const StdioTransport&) = delete;
  StdioTransport& operator=(const StdioTransport&) = delete;

  std::string roundtrip(const std::string& line) override {
    write_all(write_fd_, line + "\n", "sidecar (stdio)", false);
    return reader_.read_line(read_fd_);
  }

 private:
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  LineReader reader_{"sidecar (stdio)"};
};

json image_payload(const Image& image) {
  return {{"h", image.height}, {"w", image.width}, {"rgb_f32_b64", base64_encode_floats(image.pixels)}};
}

}  // namespace

std::unique_ptr<SidecarTransport> connect_tcp(const std::string& host, int port) {
  return std::make_unique<TcpTransport>(host, port);
}

std::unique_ptr<SidecarTransport> spawn_stdio(const std::string& command) {
  return std::make_unique<StdioTransport>(command);
}

std::unique_ptr<SidecarTransport> open_sidecar(std::string_view address) {
  constexpr std::string_view kStdio = "stdio:";
  if (address.starts_with(kStdio)) {
    std::string command(address.substr(kStdio.size()));
    if (command.empty()) throw TransportError("sidecar: empty stdio command");
    return spawn_stdio(command);
  }
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == address.size()) {
    throw TransportError("sidecar: address '" + std::string(address) + "' is not host:port or stdio:<command>");
  }
  int port = 0;
  for (char c : address.substr(colon + 1)) {
    if (c < '0' || c > '9' || port > 65535) throw TransportError("sidecar: bad port in '" + std::string(address) + "'");
    port = port * 10 + (c - '0');
  }
  std::string host(address.substr(0, colon));
  if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  return connect_tcp(host, port);
}

std::string base64_encode_floats(std::span<const float> values) {
  std::vector<unsigned char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<float> base64_decode_floats(std::string_view text) {
  if (text.size() % 4 != 0) throw TransportError("sidecar: base64 length is not a multiple of 4");
  std::vector<unsigned char> bytes(text.size() / 4 * 3);
  const int n = EVP_DecodeBlock(bytes.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw TransportError("sidecar: malformed base64 payload");
  std::size_t len = static_cast<std::size_t>(n);
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
  if (len % 4 != 0) throw TransportError("sidecar: base64 payload is not a whole number of float32 values");
  std::vector<float> values(len / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
  return values;
}

SidecarClient::SidecarClient(std::unique_ptr<SidecarTransport> transport) : transport_(std::move(transport)) {
  if (!transport_) throw TransportError("sidecar: no transport");
}

namespace {

json exchange(SidecarTransport& transport, std::int64_t id, json request) {
  request["id"] = id;
  const std::string line = transport.roundtrip(request.dump());
  json response;
  try {
    response = json::parse(line);
  } catch (const json::parse_error& e) {
    throw TransportError(std::string("sidecar: malformed response: ") + e.what());
  }
  if (!response.is_object() || !response.contains("id") || !response.contains("ok")) {
    throw TransportError("sidecar: response lacks id/ok fields");
  }
  if (!response["id"].is_number_integer() || response["id"].get<std::int64_t>() != id) {
    throw TransportError("sidecar: response id " + response["id"].dump() + " does not match request id " +
                         std::to_string(id));
  }
  if (!response["ok"].get<bool>()) {
    throw GuidanceError("sidecar: " + response.value("error", std::string("request failed")));
  }
  return response;
}

std::vector<float> embedding_field(const json& response) {
  if (!response.contains("embedding") || !response["embedding"].is_array()) {
    throw TransportError("sidecar: response lacks an embedding");
  }
  return response["embedding"].get<std::vector<float>>();
}

}  // namespace

SidecarClient::ScoreGrad SidecarClient::score_grad(const Image& image, std::string_view prompt) {
  if (prompt.empty()) throw GuidanceError("guidance: empty prompt");
  json r = exchange(*transport_, next_id_++,
                    {{"op", "score_grad"}, {"prompt", std::string(prompt)}, {"image", image_payload(image)}});
  if (!r.contains("score") || !r["score"].is_number() || !r.contains("grad_f32_b64")) {
    throw TransportError("sidecar: score_grad response lacks score or gradient");
  }
  ScoreGrad out{r["score"].get<float>(), base64_decode_floats(r["grad_f32_b64"].get<std::string>())};
  if (out.grad.size() != image.pixels.size()) {
    throw TransportError("sidecar: gradient has " + std::to_string(out.grad.size()) + " values, expected " +
                         std::to_string(image.pixels.size()));
  }
  return out;
}

std::vector<float> SidecarClient::embed_text(std::string_view prompt) {
  if (prompt.empty()) throw GuidanceError("guidance: empty prompt");
  return embedding_field(exchange(*transport_, next_id_++, {{"op", "embed_text"}, {"prompt", std::string(prompt)}}));
}

std::vector<float> SidecarClient::identity_embed(const Image& image) {
  return embedding_field(
      exchange(*transport_, next_id_++, {{"op", "identity_embed"}, {"image", image_payload(image)}}));
}

SidecarScorer::SidecarScorer(std::unique_ptr<SidecarTransport> transport) : client_(std::move(transport)) {}

ScoreResult SidecarScorer::score_with_gradient(const Image& image, std::string_view prompt) {
  auto r = client_.score_grad(image, prompt);
  return {r.score - 1.0f, std::move(r.grad)};
}

std::vector<float> SidecarScorer::text_embedding(std::string_view prompt) { return client_.embed_text(prompt); }

}  // namespace flowedit

#include "ctxsiem/errors.hpp"
#include "ctxsiem/log.hpp"
#include "ctxsiem/pipeline.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace ctxsiem {

LineListener::LineListener(Pipeline& pipeline) : pipeline_(pipeline) {}

LineListener::~LineListener() { stop(); }

int LineListener::start(const std::string& host, int port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw ConfigError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw ConfigError("ingest listener needs an IPv4 address, got '" + host + "'");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw ConfigError("cannot listen on " + host + ":" + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  running_ = true;
  thread_ = std::thread([this] { serve(); });
  return ntohs(addr.sin_port);
}

void LineListener::stop() {
  if (!running_.exchange(false)) return;
  // shutdown() wakes the blocking accept().
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (thread_.joinable()) thread_.join();
  std::lock_guard lock(conn_mu_);
  for (auto& t : connections_)
    if (t.joinable()) t.join();
  connections_.clear();
}

void LineListener::serve() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) return;
      if (errno == EINTR) continue;
      log_warn(std::string("ingest accept: ") + std::strerror(errno));
      continue;
    }
    std::lock_guard lock(conn_mu_);
    connections_.emplace_back([this, fd] { handle(fd); });
  }
}

void LineListener::handle(int fd) {
  // Connections end when the client closes; stop() does not cut them short.
  std::string buffer;
  char chunk[4096];
  for (;;) {
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t start = 0;
    for (std::size_t nl; (nl = buffer.find('\n', start)) != std::string::npos; start = nl + 1) {
      std::string line = buffer.substr(start, nl - start);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) pipeline_.ingest_line(line);
    }
    buffer.erase(0, start);
  }
  if (!buffer.empty()) pipeline_.ingest_line(buffer);
  ::close(fd);
}

}  // namespace ctxsiem

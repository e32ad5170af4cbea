#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include "segfield/error.hpp"
#include "segfield/segmenter.hpp"

namespace segfield {
namespace {

[[noreturn]] void transport_error(const std::string& what) {
  throw Error(Errc::transport, what);
}

int remaining_ms(Clock::time_point deadline) {
  const auto left =
      std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

void wait_for(int fd, short events, Clock::time_point deadline, const char* what) {
  for (;;) {
    pollfd p{fd, events, 0};
    const int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc > 0) return;
    if (rc == 0) transport_error(std::string("timed out ") + what);
    if (errno != EINTR) transport_error(std::string("poll failed ") + what + ": " + std::strerror(errno));
  }
}

void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

class FdChannel final : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd, pid_t child = -1)
      : read_fd_(read_fd), write_fd_(write_fd), child_(child) {
    set_nonblocking(read_fd_);
    if (write_fd_ != read_fd_) set_nonblocking(write_fd_);
  }

  ~FdChannel() override {
    if (write_fd_ != read_fd_) ::close(write_fd_);
    ::close(read_fd_);
    if (child_ > 0) {
      ::kill(child_, SIGTERM);
      ::waitpid(child_, nullptr, 0);
    }
  }

  void send_line(const std::string& line, Clock::time_point deadline) override {
    const std::string payload = line + "\n";
    std::size_t sent = 0;
    while (sent < payload.size()) {
      wait_for(write_fd_, POLLOUT, deadline, "sending to the bridge");
      const ssize_t n = write_some(payload.data() + sent, payload.size() - sent);
      if (n < 0) {
        if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
        transport_error(std::string("bridge write failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::string receive_line(Clock::time_point deadline) override {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      wait_for(read_fd_, POLLIN, deadline, "waiting for the bridge reply");
      char chunk[65536];
      const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
      if (n == 0) transport_error("bridge closed the connection");
      if (n < 0) {
        if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
        transport_error(std::string("bridge read failed: ") + std::strerror(errno));
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  ssize_t write_some(const char* data, std::size_t size) {
    if (child_ < 0 && write_fd_ == read_fd_) return ::send(write_fd_, data, size, MSG_NOSIGNAL);
    return ::write(write_fd_, data, size);
  }

  int read_fd_;
  int write_fd_;
  pid_t child_;
  std::string buffer_;
};

void connect_with_deadline(int fd, const sockaddr* addr, socklen_t len, Clock::time_point deadline,
                           const std::string& endpoint) {
  set_nonblocking(fd);
  if (::connect(fd, addr, len) == 0) return;
  if (errno != EINPROGRESS && errno != EAGAIN) {
    const std::string why = std::strerror(errno);
    ::close(fd);
    transport_error("cannot connect to " + endpoint + ": " + why);
  }
  try {
    wait_for(fd, POLLOUT, deadline, ("connecting to " + endpoint).c_str());
  } catch (...) {
    ::close(fd);
    throw;
  }
  int err = 0;
  socklen_t err_len = sizeof(err);
  ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &err_len);
  if (err != 0) {
    ::close(fd);
    transport_error("cannot connect to " + endpoint + ": " + std::strerror(err));
  }
}

std::unique_ptr<LineChannel> open_tcp(const std::string& hostport, Clock::time_point deadline,
                                      const std::string& endpoint) {
  const auto colon = hostport.rfind(':');
  if (colon == std::string::npos) transport_error("tcp endpoint needs host:port: " + endpoint);
  const std::string host = hostport.substr(0, colon);
  const std::string port = hostport.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &result) != 0 || !result) {
    transport_error("cannot resolve " + endpoint);
  }
  std::string last_error = "no addresses";
  for (addrinfo* ai = result; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    try {
      connect_with_deadline(fd, ai->ai_addr, ai->ai_addrlen, deadline, endpoint);
      ::freeaddrinfo(result);
      return std::make_unique<FdChannel>(fd, fd);
    } catch (const Error& e) {
      last_error = e.what();
    }
  }
  ::freeaddrinfo(result);
  transport_error(last_error);
}

std::unique_ptr<LineChannel> open_unix(const std::string& path, Clock::time_point deadline,
                                       const std::string& endpoint) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) transport_error("unix socket path too long");
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0) transport_error("cannot create socket");
  connect_with_deadline(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr), deadline,
                        endpoint);
  return std::make_unique<FdChannel>(fd, fd);
}

std::unique_ptr<LineChannel> open_process(const std::string& command) {
  int to_child[2];
  int from_child[2];
  if (::pipe(to_child) != 0) transport_error("pipe failed");
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    transport_error("pipe failed");
  }
  std::signal(SIGPIPE, SIG_IGN);
  const pid_t pid = ::fork();
  if (pid < 0) transport_error("fork failed");
  if (pid == 0) {
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
  return std::make_unique<FdChannel>(from_child[0], to_child[1], pid);
}

}  // namespace

std::unique_ptr<LineChannel> open_channel(const std::string& endpoint,
                                          Clock::time_point deadline) {
  if (endpoint.rfind("tcp://", 0) == 0) return open_tcp(endpoint.substr(6), deadline, endpoint);
  if (endpoint.rfind("unix:", 0) == 0) {
    std::string path = endpoint.substr(5);
    if (path.rfind("//", 0) == 0) path = path.substr(2);
    return open_unix(path, deadline, endpoint);
  }
  if (endpoint.rfind("exec:", 0) == 0) return open_process(endpoint.substr(5));
  throw Error(Errc::invalid_argument,
              "unknown bridge endpoint '" + endpoint + "' (tcp://, unix:, exec:)");
}

}  // namespace segfield

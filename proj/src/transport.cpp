#include "edgetree/transport.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <poll.h>
#include <sys/file.h>
#include <sys/wait.h>
#include <termios.h>
#include <unistd.h>

#include "edgetree/error.hpp"

namespace edgetree {

namespace {

speed_t baud_constant(unsigned baud) {
  switch (baud) {
    case 9600:
      return B9600;
    case 19200:
      return B19200;
    case 38400:
      return B38400;
    case 57600:
      return B57600;
    case 115200:
      return B115200;
    case 230400:
      return B230400;
    case 460800:
      return B460800;
    case 921600:
      return B921600;
    default:
      throw TransportError("unsupported baud rate " + std::to_string(baud));
  }
}

void ignore_sigpipe() {
  static const bool done = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

}  // namespace

void write_all(int fd, std::string_view data, std::string_view what) {
  while (!data.empty()) {
    const auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN) {
        pollfd p{fd, POLLOUT, 0};
        ::poll(&p, 1, 1000);
        continue;
      }
      throw TransportError("write to " + std::string(what) + " failed: " + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string FdLineReader::read_line(std::chrono::milliseconds timeout, std::string_view what) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw TransportError("timed out waiting for a response from " + std::string(what));
    pollfd p{fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, static_cast<int>(left.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw TransportError("poll on " + std::string(what) + " failed: " + std::strerror(errno));
    }
    if (ready == 0) continue;
    char buf[1024];
    const auto n = ::read(fd_, buf, sizeof buf);
    if (n > 0) {
      buffer_.append(buf, static_cast<std::size_t>(n));
    } else if (n == 0 || (errno != EINTR && errno != EAGAIN)) {
      throw TransportError(std::string(what) + " closed the connection");
    }
  }
}

HostProcessTransport::HostProcessTransport(std::vector<std::string> argv) : argv_(std::move(argv)) {
  if (argv_.empty()) throw TransportError("empty command for host transport");
  ignore_sigpipe();
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw TransportError("pipe failed");
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw TransportError("pipe failed");
  }
  std::vector<char*> args;
  for (const auto& a : argv_) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  pid_ = ::fork();
  if (pid_ < 0) throw TransportError("fork failed");
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  reader_ = FdLineReader(from_child_);
}

HostProcessTransport::~HostProcessTransport() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    // Closing stdin ends the harness loop; do not wait forever on a wedged one.
    for (int i = 0; i < 200; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
      ::usleep(10'000);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
  }
}

void HostProcessTransport::send_line(std::string_view line) {
  std::string framed(line);
  framed += '\n';
  write_all(to_child_, framed, describe());
}

std::string HostProcessTransport::read_line(std::chrono::milliseconds timeout) {
  return reader_.read_line(timeout, describe());
}

std::string HostProcessTransport::describe() const { return "host process '" + argv_.front() + "'"; }

SerialTransport::SerialTransport(std::filesystem::path port, unsigned baud) : port_(std::move(port)), baud_(baud) {
  const speed_t speed = baud_constant(baud_);
  fd_ = ::open(port_.c_str(), O_RDWR | O_NOCTTY | O_CLOEXEC);
  if (fd_ < 0) throw TransportError("cannot open " + port_.string() + ": " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    throw TransportError(port_.string() + " is in use by another process");
  }
  termios tio{};
  if (::tcgetattr(fd_, &tio) != 0) {
    ::close(fd_);
    throw TransportError(port_.string() + " is not a terminal device");
  }
  ::cfmakeraw(&tio);
  tio.c_cflag &= ~(PARENB | CSTOPB | CSIZE);
  tio.c_cflag |= CS8 | CLOCAL | CREAD;
  tio.c_cc[VMIN] = 0;
  tio.c_cc[VTIME] = 0;
  ::cfsetispeed(&tio, speed);
  ::cfsetospeed(&tio, speed);
  if (::tcsetattr(fd_, TCSANOW, &tio) != 0) {
    ::close(fd_);
    throw TransportError("cannot configure " + port_.string());
  }
  ::tcflush(fd_, TCIOFLUSH);
  reader_ = FdLineReader(fd_);
}

SerialTransport::~SerialTransport() {
  if (fd_ >= 0) ::close(fd_);
}

void SerialTransport::send_line(std::string_view line) {
  std::string framed(line);
  framed += '\n';
  write_all(fd_, framed, describe());
  ::tcdrain(fd_);
}

std::string SerialTransport::read_line(std::chrono::milliseconds timeout) {
  return reader_.read_line(timeout, describe());
}

std::string SerialTransport::describe() const {
  return "serial port " + port_.string() + " @" + std::to_string(baud_);
}

}  // namespace edgetree

#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <string_view>
#include <sys/types.h>
#include <vector>

namespace edgetree {

// Newline-delimited request/response channel to a running predictor.
class LineTransport {
 public:
  virtual ~LineTransport() = default;

  // `line` must not contain '\n'; the terminator is appended.
  virtual void send_line(std::string_view line) = 0;
  // Next line without its terminator. Throws TransportError on timeout/EOF.
  virtual std::string read_line(std::chrono::milliseconds timeout) = 0;
  virtual std::string describe() const = 0;
};

// Buffered line reader over a file descriptor the caller owns.
class FdLineReader {
 public:
  explicit FdLineReader(int fd) : fd_(fd) {}
  std::string read_line(std::chrono::milliseconds timeout, std::string_view what);

 private:
  int fd_;
  std::string buffer_;
};

// Spawns a host-compiled harness and talks to it over stdin/stdout.
class HostProcessTransport final : public LineTransport {
 public:
  explicit HostProcessTransport(std::vector<std::string> argv);
  ~HostProcessTransport() override;
  HostProcessTransport(const HostProcessTransport&) = delete;
  HostProcessTransport& operator=(const HostProcessTransport&) = delete;

  void send_line(std::string_view line) override;
  std::string read_line(std::chrono::milliseconds timeout) override;
  std::string describe() const override;

 private:
  std::vector<std::string> argv_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  FdLineReader reader_{-1};
};

// Serial port in raw 8N1 mode at a fixed baud rate.
class SerialTransport final : public LineTransport {
 public:
  explicit SerialTransport(std::filesystem::path port, unsigned baud = 115200);
  ~SerialTransport() override;
  SerialTransport(const SerialTransport&) = delete;
  SerialTransport& operator=(const SerialTransport&) = delete;

  void send_line(std::string_view line) override;
  std::string read_line(std::chrono::milliseconds timeout) override;
  std::string describe() const override;

 private:
  std::filesystem::path port_;
  unsigned baud_;
  int fd_ = -1;
  FdLineReader reader_{-1};
};

void write_all(int fd, std::string_view data, std::string_view what);

}  // namespace edgetree

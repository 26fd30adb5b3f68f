#pragma once

// Line-delimited JSON worker protocol for external simulators (POSIX only).
//   request (child stdin):   {"id": k, "xi": [x_1, ..., x_d]}
//   reply   (child stdout):  {"id": k, "y": [y_1, ..., y_m]}
// Replies may arrive in any order. After the last request the child's stdin is closed.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mgpc/error.hpp"

namespace mgpc {

struct ExecAdapter {
  std::string command;             // resolved through PATH
  std::vector<std::string> args;
  double timeout_seconds = 60.0;   // longest wait for the next reply
  int workers = 1;                 // children run concurrently, each on its own id range
};

namespace detail {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }
  int get() const noexcept { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

struct Child {
  pid_t pid = -1;
  Fd in, out;

  Child() = default;
  Child(Child&& o) noexcept
      : pid(std::exchange(o.pid, -1)), in(std::move(o.in)), out(std::move(o.out)) {}
  ~Child() { kill_and_reap(); }

  void kill_and_reap() {
    if (pid > 0) {
      ::kill(pid, SIGKILL);
      int st = 0;
      while (::waitpid(pid, &st, 0) < 0 && errno == EINTR) {
      }
      pid = -1;
    }
  }

  /// Wait for exit until `deadline`; returns the raw wait status or kills on expiry.
  bool wait_until(std::chrono::steady_clock::time_point deadline, int& status) {
    for (;;) {
      const pid_t r = ::waitpid(pid, &status, WNOHANG);
      if (r == pid) {
        pid = -1;
        return true;
      }
      if (r < 0 && errno != EINTR) {
        pid = -1;
        status = 0;
        return true;
      }
      if (std::chrono::steady_clock::now() >= deadline) return false;
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }
};

inline Child spawn(const ExecAdapter& a) {
  int to_child[2], from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw AdapterError(std::string("pipe: ") + std::strerror(errno));
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw AdapterError(std::string("pipe: ") + std::strerror(errno));
  }
  std::vector<std::string> argv_s{a.command};
  argv_s.insert(argv_s.end(), a.args.begin(), a.args.end());
  std::vector<char*> argv;
  for (auto& s : argv_s) argv.push_back(s.data());
  argv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
    throw AdapterError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::execvp(argv[0], argv.data());
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  Child c;
  c.pid = pid;
  c.in = Fd(to_child[1]);
  c.out = Fd(from_child[0]);
  ::fcntl(c.in.get(), F_SETFL, ::fcntl(c.in.get(), F_GETFL) | O_NONBLOCK);
  ::fcntl(c.out.get(), F_SETFL, ::fcntl(c.out.get(), F_GETFL) | O_NONBLOCK);
  return c;
}

inline std::string describe_status(int status) {
  if (WIFEXITED(status)) return "exited with status " + std::to_string(WEXITSTATUS(status));
  if (WIFSIGNALED(status)) return "killed by signal " + std::to_string(WTERMSIG(status));
  return "ended abnormally";
}

/// Evaluate rows [first, last) of `x` in one child; replies land in rows of `y`.
inline void run_child(const ExecAdapter& a, const Eigen::MatrixXd& x, Eigen::Index first,
                      Eigen::Index last, Eigen::MatrixXd& y, std::vector<char>& done) {
  using clock = std::chrono::steady_clock;
  const auto patience = std::chrono::duration_cast<clock::duration>(
      std::chrono::duration<double>(a.timeout_seconds));

  std::string pending;
  for (Eigen::Index i = first; i < last; ++i) {
    nlohmann::json req{{"id", long(i)}, {"xi", std::vector<double>(x.row(i).begin(), x.row(i).end())}};
    pending += req.dump();
    pending += '\n';
  }
  std::size_t written = 0;

  Child c = spawn(a);
  if (first == last) c.in.reset();
  std::string buffer;
  Eigen::Index remaining = last - first;
  auto deadline = clock::now() + patience;

  auto first_missing = [&] {
    for (Eigen::Index i = first; i < last; ++i)
      if (!done[std::size_t(i)]) return long(i);
    return long(last);
  };

  auto handle_line = [&](const std::string& line) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) return;
    nlohmann::json msg;
    try {
      msg = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("malformed reply line: " + line.substr(0, 200));
    }
    if (!msg.is_object() || !msg.contains("id") || !msg["id"].is_number_integer() ||
        !msg.contains("y") || !msg["y"].is_array())
      throw ProtocolError("reply must be an object with integer 'id' and array 'y': " +
                          line.substr(0, 200));
    const long id = msg["id"].get<long>();
    if (id < first || id >= last) throw ProtocolError("reply for unknown id " + std::to_string(id));
    if (done[std::size_t(id)]) throw ProtocolError("duplicate reply for id " + std::to_string(id));
    const auto& arr = msg["y"];
    if (Eigen::Index(arr.size()) != y.cols())
      throw ProtocolError("reply for id " + std::to_string(id) + " has " + std::to_string(arr.size()) +
                          " outputs, expected " + std::to_string(y.cols()));
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      if (!arr[std::size_t(j)].is_number())
        throw ProtocolError("non-numeric output in reply for id " + std::to_string(id));
      y(id, j) = arr[std::size_t(j)].get<double>();
    }
    done[std::size_t(id)] = 1;
    --remaining;
    deadline = clock::now() + patience;
  };

  bool out_open = true;
  while (out_open && remaining > 0) {
    pollfd fds[2];
    nfds_t n = 0;
    fds[n++] = {c.out.get(), POLLIN, 0};
    const bool writing = c.in.get() >= 0;
    if (writing) fds[n++] = {c.in.get(), POLLOUT, 0};
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
    if (left.count() <= 0) throw Timeout(first_missing());
    const int rc = ::poll(fds, n, int(std::min<long long>(left.count() + 1, 1000)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw AdapterError(std::string("poll: ") + std::strerror(errno));
    }
    if (writing && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t w = ::write(c.in.get(), pending.data() + written, pending.size() - written);
      if (w > 0) written += std::size_t(w);
      else if (w < 0 && errno != EAGAIN && errno != EINTR) c.in.reset();  // child stopped reading
      if (written == pending.size()) c.in.reset();
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      char chunk[65536];
      const ssize_t r = ::read(c.out.get(), chunk, sizeof chunk);
      if (r > 0) {
        buffer.append(chunk, std::size_t(r));
        std::size_t pos;
        while ((pos = buffer.find('\n')) != std::string::npos) {
          const std::string line = buffer.substr(0, pos);
          buffer.erase(0, pos + 1);
          handle_line(line);
        }
      } else if (r == 0) {
        out_open = false;
      } else if (errno != EAGAIN && errno != EINTR) {
        throw AdapterError(std::string("read: ") + std::strerror(errno));
      }
    }
  }
  if (!buffer.empty() && remaining > 0) handle_line(buffer);

  c.in.reset();
  int status = 0;
  if (!c.wait_until(clock::now() + patience, status)) {
    c.kill_and_reap();
    if (remaining > 0) throw Timeout(first_missing());
    return;  // all replies in hand; a lingering child is not an error
  }
  if (!(WIFEXITED(status) && WEXITSTATUS(status) == 0))
    throw ChildFailed("simulator '" + a.command + "' " + describe_status(status), status);
  if (remaining > 0) throw Timeout(first_missing());
}

}  // namespace detail

/// Evaluate each row of `physical` through external children; returns rows x n_outputs.
inline Eigen::MatrixXd exec_eval(const ExecAdapter& a, const Eigen::MatrixXd& physical,
                                 std::size_t n_outputs) {
  if (a.command.empty()) throw InvalidParameter("command", "must be non-empty");
  if (!(a.timeout_seconds > 0.0)) throw InvalidParameter("timeout", "must be positive");
  if (a.workers < 1) throw InvalidParameter("workers", "must be at least 1");
  if (n_outputs < 1) throw InvalidParameter("outputs", "at least one output is required");
  detail::ignore_sigpipe();

  const Eigen::Index M = physical.rows();
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(M, Eigen::Index(n_outputs), std::nan(""));
  std::vector<char> done(std::size_t(M), 0);
  const Eigen::Index workers = std::max<Eigen::Index>(1, std::min<Eigen::Index>(a.workers, M));
  if (workers == 1) {
    detail::run_child(a, physical, 0, M, y, done);
    return y;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (Eigen::Index k = 0; k < workers; ++k) {
    const Eigen::Index lo = M * k / workers, hi = M * (k + 1) / workers;
    pool.emplace_back([&, k, lo, hi] {
      try {
        detail::run_child(a, physical, lo, hi, y, done);
      } catch (...) {
        errors[std::size_t(k)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return y;
}

}  // namespace mgpc

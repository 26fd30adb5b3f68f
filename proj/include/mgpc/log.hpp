#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace mgpc::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

using Sink = std::function<void(Level, std::string_view)>;

namespace detail {
struct State {
  std::mutex mu;
  Level threshold = Level::warn;
  Sink sink;
};
inline State& state() {
  static State s;
  return s;
}
inline const char* tag(Level l) {
  switch (l) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
    default: return "";
  }
}
}  // namespace detail

inline void set_level(Level l) {
  std::lock_guard lock(detail::state().mu);
  detail::state().threshold = l;
}

/// Replace the output sink; an empty sink restores stderr.
inline void set_sink(Sink sink) {
  std::lock_guard lock(detail::state().mu);
  detail::state().sink = std::move(sink);
}

inline void write(Level l, std::string_view msg) {
  auto& s = detail::state();
  std::lock_guard lock(s.mu);
  if (l < s.threshold) return;
  if (s.sink) {
    s.sink(l, msg);
  } else {
    std::cerr << "[mgpc:" << detail::tag(l) << "] " << msg << '\n';
  }
}

inline void debug(std::string_view m) { write(Level::debug, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void warn(std::string_view m) { write(Level::warn, m); }

}  // namespace mgpc::log

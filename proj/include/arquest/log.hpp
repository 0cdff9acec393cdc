#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace arquest::log {

using Sink = std::function<void(std::string_view level, std::string_view message)>;

inline Sink& sink() {
  static Sink s = [](std::string_view level, std::string_view message) {
    std::cerr << "[arquest " << level << "] " << message << '\n';
  };
  return s;
}

inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

inline void set_sink(Sink s) {
  std::lock_guard lock(sink_mutex());
  sink() = std::move(s);
}

inline void emit(std::string_view level, std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(level, message);
}

inline void warn(std::string_view message) { emit("warn", message); }
inline void info(std::string_view message) { emit("info", message); }

}  // namespace arquest::log

#include "trident/log.hpp"

#include <iostream>
#include <mutex>

namespace trident::log {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

void default_sink(Level level, std::string_view message) {
  if (level == Level::warning)
    std::cerr << "warning: " << message << '\n';
  else if (level == Level::error)
    std::cerr << "error: " << message << '\n';
}

Sink& current() {
  static Sink s = default_sink;
  return s;
}

}  // namespace

Sink set_sink(Sink sink) {
  std::lock_guard lock(sink_mutex());
  Sink previous = std::move(current());
  current() = sink ? std::move(sink) : Sink(default_sink);
  return previous;
}

void write(Level level, std::string_view message) {
  std::lock_guard lock(sink_mutex());
  current()(level, message);
}

}  // namespace trident::log

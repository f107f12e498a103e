#include "rlff/log.hpp"

#include <iostream>
#include <mutex>

namespace rlff::log {

namespace {

std::mutex g_mutex;
std::ostream* g_sink = &std::cerr;
Level g_level = Level::Info;

const char* tag(Level l)
{
  switch (l) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
  }
  return "?";
}

} // namespace

void set_sink(std::ostream* os)
{
  std::lock_guard lock(g_mutex);
  g_sink = os;
}

void set_level(Level level)
{
  std::lock_guard lock(g_mutex);
  g_level = level;
}

void write(Level level, std::string_view msg)
{
  std::lock_guard lock(g_mutex);
  if (g_sink == nullptr || level < g_level) {
    return;
  }
  *g_sink << "[rlff " << tag(level) << "] " << msg << '\n';
}

void json_line(std::string_view json)
{
  std::lock_guard lock(g_mutex);
  if (g_sink != nullptr) {
    *g_sink << json << '\n';
  }
}

} // namespace rlff::log

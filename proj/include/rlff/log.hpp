#pragma once

#include <iosfwd>
#include <string_view>

namespace rlff::log {

enum class Level
{
  Debug,
  Info,
  Warn,
  Error,
};

/// Redirects log output (default std::cerr). Pass nullptr to silence.
void set_sink(std::ostream* os);
void set_level(Level level);

void write(Level level, std::string_view msg);

/// Writes one pre-serialized JSON object per line, bypassing the level filter.
void json_line(std::string_view json);

inline void debug(std::string_view m) { write(Level::Debug, m); }
inline void info(std::string_view m) { write(Level::Info, m); }
inline void warn(std::string_view m) { write(Level::Warn, m); }
inline void error(std::string_view m) { write(Level::Error, m); }

} // namespace rlff::log

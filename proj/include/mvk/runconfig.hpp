#pragma once

#include <map>
#include <string>
#include <string_view>

#include "mvk/core.hpp"

namespace mvk {

// Declarative "key = value" text format shared by dataset manifests and run
// configs. '#' starts a comment; blank lines are skipped; keys may not
// repeat.
std::map<std::string, std::string> read_kv_file(const std::string& path);

// Resolves a possibly relative path against the directory of a config file.
std::string resolve_path(const std::string& base_dir, const std::string& path);

// Structured logging: one JSON object per event on stderr.
void log_event(std::string_view event, json fields = json::object());

}  // namespace mvk

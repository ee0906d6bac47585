#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace factorrisk::cli {

/// Built-in defaults for every configurable key.
nlohmann::json default_config();

/// Applies `key.path=value` overrides; the value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Entry point; returns the process exit code. Errors go to stderr as JSON.
int run(int argc, char** argv);

}  // namespace factorrisk::cli

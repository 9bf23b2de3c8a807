// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "adds/errors.hpp"

namespace adds {

/// Which side of the day/night pair a sample or branch belongs to.
enum class Domain { day, night };

inline const char* to_string(Domain d) { return d == Domain::day ? "day" : "night"; }

inline Domain domain_from_string(const std::string& s) {
  if (s == "day") return Domain::day;
  if (s == "night") return Domain::night;
  throw ConfigError("unknown domain tag: " + s);
}

}  // namespace adds

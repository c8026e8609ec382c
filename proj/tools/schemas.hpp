#pragma once

#include <string_view>

namespace bangbang::cli {

/// Contents of schemas/*.json, embedded at configure time.
std::string_view experiment_schema_text();
std::string_view result_schema_text();

}  // namespace bangbang::cli

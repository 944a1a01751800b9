#pragma once

#include <json.hpp>

namespace emr {
// nlohmann::json keeps keys sorted, which gives byte-stable output.
using Json = nlohmann::json;
}  // namespace emr

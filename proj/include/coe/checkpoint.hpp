#pragma once

#include <map>
#include <string>

#include "coe/common.hpp"

namespace coe {

// Named-matrix checkpoint: params.json maps names to shape plus row-major
// values, exact through a 64-bit round-trip.
using ParamMap = std::map<std::string, Matrix>;

void save_params(const std::string& path, const ParamMap& params);
ParamMap load_params(const std::string& path);

}  // namespace coe

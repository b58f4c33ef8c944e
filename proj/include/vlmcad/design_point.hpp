#pragma once

#include <map>
#include <string>

namespace vlmcad {

// Sizing parameters by name, in the units declared by ParamRanges
// (um for widths, nm or um for lengths, pF for capacitors, V for biases).
using DesignPoint = std::map<std::string, double>;

}  // namespace vlmcad

#pragma once

#include <string>

#include "ddrmpc/solver.hpp"

namespace ddrmpc {

// Serializes a program to LP text (CPLEX LP file dialect). Variables are
// named x0..x{n-1}; the quadratic objective uses the bracketed [...]/2
// section; every variable gets an explicit Bounds line since the format
// defaults to x >= 0. Constraint names eq<i>/in<i> preserve block order.
std::string write_lp(const ProgramDescription& prog);

// Parses the dialect produced by write_lp (plus free-form whitespace and
// backslash comments). Throws std::invalid_argument with a line reference
// on malformed input.
ProgramDescription parse_lp(const std::string& text);

}  // namespace ddrmpc

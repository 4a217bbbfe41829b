#pragma once

#include "config.hpp"

#include <iosfwd>
#include <string>

namespace modred::cli {

int tomo_simulate(const Config& cfg);
int tomo_reconstruct(const Config& cfg);
int eit_simulate(const Config& cfg);
int eit_reconstruct(const Config& cfg);
int bae_sample(const Config& cfg);
int spotlight_basis(const Config& cfg);

/// Invariant suite; one PASS/FAIL line per check. Returns 0 when all pass.
int run_checks(std::ostream& out);

}  // namespace modred::cli

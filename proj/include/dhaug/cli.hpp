#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dhaug {

/// Entry point of the `dhaug` tool. args excludes the program name.
/// Returns 0 on success, 1 on a usage error, 2 on a data error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Oracle cross-checks; with a dataset path also checks every synthetic
/// record for validity and 2D/3D consistency. Returns 0 when all pass, else 2.
int run_selftest(std::ostream& out, const std::string& dataset = "");

}  // namespace dhaug

#pragma once

namespace helab {

// Routes subcommands to the module pipelines. Exit codes: 0 success,
// 1 validation error, 2 numerical failure (report still written).
int parse_and_dispatch(int argc, const char* const* argv);

}  // namespace helab

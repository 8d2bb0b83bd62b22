#pragma once

#include <iosfwd>
#include <string>

#include "emem/retrieval.hpp"

namespace emem {

// Entry point of the `emem` tool. Output JSON goes to `out` (or --out),
// failures to `err` as one JSON line; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Query vectors from a JSON file ({"heads","dim","data"} or one array per
// head) or from the keys of the last record of a stream file.
QueryVectors load_query(const std::string& path);

}  // namespace emem

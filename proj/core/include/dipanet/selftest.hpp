#pragma once
#include <ostream>

namespace dipanet {

// Runs the library invariant suite at small sizes, one line per invariant.
// Stops at the first failure, printing its name; returns true iff all pass.
// Output contains no timing, so repeated runs print identical text.
bool run_selftest(std::ostream& os);

} // namespace dipanet

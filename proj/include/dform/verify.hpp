// Named check batteries behind `verify <suite>` and the acceptance run.
#ifndef DFORM_VERIFY_HPP
#define DFORM_VERIFY_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace dform {

struct CheckResult {
  std::string name;
  bool pass = false;
  double measured = 0;
  double bound = 0;
};

// suite in {algebra, norms, potentials, bvp, decomposition, parametrix, all}
std::vector<CheckResult> runVerifySuite(const std::string& suite, uint64_t seed);

bool knownSuite(const std::string& suite);

}  // namespace dform

#endif

#pragma once

#include <string>
#include <vector>

namespace capsnet {

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick oracle and invariant checks (a few seconds): tensor-op and routing
/// gradients against finite differences, dynamic routing against a
/// straight-line reference, normalization invariants, spread loss, the
/// dead-capsule boundary and the zero-gradient optimizer step.
std::vector<SelftestCheck> run_selftest();

}  // namespace capsnet

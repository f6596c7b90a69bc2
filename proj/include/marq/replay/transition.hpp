#pragma once

#include <vector>

namespace marq::replay {

/// One experience tuple <s, a, r, s', done> owned by a single agent.
struct Transition {
  int agent_id = 0;
  std::vector<double> obs;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_obs;
  bool done = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

}  // namespace marq::replay

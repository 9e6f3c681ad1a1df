#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "maxval/softmax.hpp"

namespace maxval {

// One observation for the policy-value problem. Action labels are 1-based.
struct Observation {
  Vec x;
  int a = 1;
  double y = 0.0;
};

// One observation for the IV bounds problem; a, v, y are all binary.
struct IvObservation {
  Vec x;
  int a = 0;
  int v = 0;
  int y = 0;
};

struct Dataset {
  std::vector<Observation> rows;
  int n_actions = 0;
  double bound = std::numeric_limits<double>::infinity();  // declared |Y| bound B

  std::size_t size() const { return rows.size(); }

  // Throws SchemaError on hard violations (labels outside [1, N]); returns
  // human-readable warnings for soft ones (|y| > B).
  std::vector<std::string> validate() const;
};

struct IvDataset {
  std::vector<IvObservation> rows;

  std::size_t size() const { return rows.size(); }
  std::vector<std::string> validate() const;
};

}  // namespace maxval

#include "maxval/dataset.hpp"

#include <cmath>
#include <sstream>

#include "maxval/errors.hpp"

namespace maxval {

std::vector<std::string> Dataset::validate() const {
  std::vector<std::string> warnings;
  if (n_actions < 2) throw SchemaError("dataset needs at least 2 actions");
  std::size_t bound_violations = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Observation& z = rows[i];
    if (z.a < 1 || z.a > n_actions) {
      std::ostringstream msg;
      msg << "row " << (i + 1) << ": action label " << z.a << " outside [1, "
          << n_actions << "]";
      throw SchemaError(msg.str());
    }
    if (!std::isfinite(z.y)) {
      std::ostringstream msg;
      msg << "row " << (i + 1) << ": non-finite outcome";
      throw SchemaError(msg.str());
    }
    if (std::abs(z.y) > bound) ++bound_violations;
  }
  if (bound_violations > 0) {
    std::ostringstream msg;
    msg << bound_violations << " outcome(s) exceed the declared bound B=" << bound;
    warnings.push_back(msg.str());
  }
  return warnings;
}

std::vector<std::string> IvDataset::validate() const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const IvObservation& z = rows[i];
    const bool ok = (z.a == 0 || z.a == 1) && (z.v == 0 || z.v == 1) &&
                    (z.y == 0 || z.y == 1);
    if (!ok) {
      std::ostringstream msg;
      msg << "row " << (i + 1) << ": a, v, y must all be 0 or 1";
      throw SchemaError(msg.str());
    }
  }
  return {};
}

}  // namespace maxval

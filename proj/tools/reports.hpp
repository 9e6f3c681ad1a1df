#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include "json.hpp"
#include "maxval/estimator.hpp"
#include "maxval/simlab.hpp"

namespace maxval::cli {

// Metadata every report carries so a run can be reproduced from its output.
struct RunMeta {
  std::string command;
  std::uint64_t seed = 0;
  CrossFitConfig cfg;
};

nlohmann::json learner_to_json(const LearnerSpec& spec);
nlohmann::json meta_to_json(const RunMeta& meta);
nlohmann::json report_to_json(const EstimateReport& report, const RunMeta& meta);
nlohmann::json mc_report_to_json(const McReport& report, const RunMeta& meta);

// Flat curve file: one "beta,value" row per grid point.
void write_curve_csv(std::ostream& out, std::span<const double> betas,
                     std::span<const double> values, const std::string& value_name);

// Minimal log-log polyline plot in SVG.
void write_curve_svg(std::ostream& out, std::span<const double> betas,
                     std::span<const double> values, const std::string& title);

}  // namespace maxval::cli

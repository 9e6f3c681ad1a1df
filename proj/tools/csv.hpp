#pragma once

#include <iosfwd>
#include <string>

#include "maxval/dataset.hpp"

namespace maxval::cli {

// CSV schemas (UTF-8, comma separated, decimal point, mandatory header):
//   policy : x1,...,xd,a,y   with a a 1-based integer action label
//   iv     : x1,...,xd,a,v,y with a, v, y all in {0, 1}
// N is inferred as the maximum observed action label. Parse failures cite
// the 1-based line number.
Dataset ingest_csv_policy(std::istream& in);
Dataset ingest_csv_policy(const std::string& path);
IvDataset ingest_csv_iv(std::istream& in);
IvDataset ingest_csv_iv(const std::string& path);

void write_csv(const Dataset& data, std::ostream& out);
void write_csv(const IvDataset& data, std::ostream& out);

}  // namespace maxval::cli

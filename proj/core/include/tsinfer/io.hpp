#pragma once

#include <string>

#include "tsinfer/network.hpp"

namespace tsinfer {

// Grouped-network file pair:
//  - edges CSV with header group_id,src,dst (one directed edge per row);
//  - attributes CSV with header group_id,node_id,<outcome>,<covariates...>.
// Node order within a group follows the attributes file; edge endpoints must
// be declared there.  Parsing is strict: every violation throws SchemaError
// naming the file and line.
struct NetworkCsvOptions {
  std::string outcome_column = "outcome";
};

SchoolNetwork read_network_csv(const std::string& edges_path,
                               const std::string& attrs_path,
                               const NetworkCsvOptions& options = {});

void write_network_csv(const SchoolNetwork& net, const std::string& edges_path,
                       const std::string& attrs_path);

}  // namespace tsinfer

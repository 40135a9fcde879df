#include "tsinfer/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "tsinfer/errors.hpp"

namespace tsinfer {

namespace {

std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

struct CsvReader {
  std::ifstream in;
  std::string path;
  long line_no = 0;

  explicit CsvReader(const std::string& p) : in(p), path(p) {
    if (!in) {
      throw SchemaError(fmt::format("{}: cannot open file", path));
    }
  }

  // Next non-empty line split on commas, or empty vector at end of file.
  std::vector<std::string> next() {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      return split_csv(line);
    }
    return {};
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw SchemaError(fmt::format("{}:{}: {}", path, line_no, what));
  }
};

double parse_number(const CsvReader& reader, const std::string& field,
                    const std::string& column) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    reader.fail(fmt::format("column '{}': '{}' is not a number", column, field));
  }
  return value;
}

struct RawGroup {
  std::vector<std::string> node_ids;
  std::map<std::string, Eigen::Index> node_index;
  std::vector<double> outcome;
  std::vector<std::vector<double>> rows;  // covariates per node
  std::vector<std::pair<Eigen::Index, Eigen::Index>> edges;
};

}  // namespace

SchoolNetwork read_network_csv(const std::string& edges_path,
                               const std::string& attrs_path,
                               const NetworkCsvOptions& options) {
  std::vector<std::string> group_order;
  std::map<std::string, RawGroup> raw;

  CsvReader attrs(attrs_path);
  const std::vector<std::string> attr_header = attrs.next();
  if (attr_header.size() < 3 || attr_header[0] != "group_id" ||
      attr_header[1] != "node_id") {
    attrs.fail("expected header group_id,node_id,<outcome>,<covariates...>");
  }
  if (attr_header[2] != options.outcome_column) {
    attrs.fail(fmt::format("expected outcome column '{}' third, found '{}'",
                           options.outcome_column, attr_header[2]));
  }
  const std::size_t n_fields = attr_header.size();
  const std::size_t n_cov = n_fields - 3;

  while (true) {
    const std::vector<std::string> row = attrs.next();
    if (row.empty()) break;
    if (row.size() != n_fields) {
      attrs.fail(fmt::format("expected {} fields, found {}", n_fields,
                             row.size()));
    }
    auto [it, inserted] = raw.try_emplace(row[0]);
    if (inserted) group_order.push_back(row[0]);
    RawGroup& group = it->second;
    if (!group.node_index
             .emplace(row[1], static_cast<Eigen::Index>(group.node_ids.size()))
             .second) {
      attrs.fail(fmt::format("duplicate node '{}' in group '{}'", row[1],
                             row[0]));
    }
    group.node_ids.push_back(row[1]);
    group.outcome.push_back(parse_number(attrs, row[2], attr_header[2]));
    std::vector<double> covariates(n_cov);
    for (std::size_t j = 0; j < n_cov; ++j) {
      covariates[j] = parse_number(attrs, row[3 + j], attr_header[3 + j]);
    }
    group.rows.push_back(std::move(covariates));
  }
  if (raw.empty()) {
    attrs.fail("no attribute rows");
  }

  CsvReader edges(edges_path);
  const std::vector<std::string> edge_header = edges.next();
  if (edge_header != std::vector<std::string>{"group_id", "src", "dst"}) {
    edges.fail("expected header group_id,src,dst");
  }
  while (true) {
    const std::vector<std::string> row = edges.next();
    if (row.empty()) break;
    if (row.size() != 3) {
      edges.fail(fmt::format("expected 3 fields, found {}", row.size()));
    }
    const auto group_it = raw.find(row[0]);
    if (group_it == raw.end()) {
      edges.fail(fmt::format("group '{}' has no attribute rows", row[0]));
    }
    RawGroup& group = group_it->second;
    const auto src = group.node_index.find(row[1]);
    const auto dst = group.node_index.find(row[2]);
    if (src == group.node_index.end()) {
      edges.fail(fmt::format("unknown node '{}' in group '{}'", row[1],
                             row[0]));
    }
    if (dst == group.node_index.end()) {
      edges.fail(fmt::format("unknown node '{}' in group '{}'", row[2],
                             row[0]));
    }
    if (src->second == dst->second) {
      edges.fail(fmt::format("self-edge on node '{}' in group '{}'", row[1],
                             row[0]));
    }
    group.edges.emplace_back(src->second, dst->second);
  }

  std::vector<NetworkGroup> groups;
  groups.reserve(group_order.size());
  for (const std::string& id : group_order) {
    const RawGroup& src = raw.at(id);
    NetworkGroup group;
    group.id = id;
    const Eigen::Index m = static_cast<Eigen::Index>(src.node_ids.size());
    group.y.resize(m);
    group.x.resize(m, static_cast<Eigen::Index>(n_cov));
    for (Eigen::Index i = 0; i < m; ++i) {
      group.y[i] = src.outcome[static_cast<std::size_t>(i)];
      for (std::size_t j = 0; j < n_cov; ++j) {
        group.x(i, static_cast<Eigen::Index>(j)) =
            src.rows[static_cast<std::size_t>(i)][j];
      }
    }
    group.adjacency = Eigen::MatrixXd::Zero(m, m);
    for (const auto& [from, to] : src.edges) {
      group.adjacency(from, to) = 1.0;  // repeated declarations are idempotent
    }
    groups.push_back(std::move(group));
  }
  return make_network(std::move(groups));
}

void write_network_csv(const SchoolNetwork& net, const std::string& edges_path,
                       const std::string& attrs_path) {
  std::ofstream attrs(attrs_path);
  if (!attrs) {
    throw Error(fmt::format("cannot open '{}' for writing", attrs_path));
  }
  attrs << "group_id,node_id,outcome";
  for (Eigen::Index j = 0; j < net.covariates(); ++j) {
    attrs << fmt::format(",x{}", j + 1);
  }
  attrs << '\n';
  for (const NetworkGroup& group : net.groups) {
    for (Eigen::Index i = 0; i < group.y.size(); ++i) {
      attrs << fmt::format("{},n{},{:.17g}", group.id, i, group.y[i]);
      for (Eigen::Index j = 0; j < group.x.cols(); ++j) {
        attrs << fmt::format(",{:.17g}", group.x(i, j));
      }
      attrs << '\n';
    }
  }
  if (!attrs.flush()) {
    throw Error(fmt::format("failed writing '{}'", attrs_path));
  }

  std::ofstream edges(edges_path);
  if (!edges) {
    throw Error(fmt::format("cannot open '{}' for writing", edges_path));
  }
  edges << "group_id,src,dst\n";
  for (const NetworkGroup& group : net.groups) {
    for (Eigen::Index i = 0; i < group.adjacency.rows(); ++i) {
      for (Eigen::Index j = 0; j < group.adjacency.cols(); ++j) {
        if (group.adjacency(i, j) != 0.0) {
          edges << fmt::format("{},n{},n{}\n", group.id, i, j);
        }
      }
    }
  }
  if (!edges.flush()) {
    throw Error(fmt::format("failed writing '{}'", edges_path));
  }
}

}  // namespace tsinfer

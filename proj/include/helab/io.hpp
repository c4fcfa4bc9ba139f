#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "helab/bundle.hpp"
#include "helab/flow.hpp"

namespace helab {

using Json = nlohmann::ordered_json;

Json grid_to_json(const Grid& g);
std::unique_ptr<Grid> grid_from_json(const Json& j);

// Self-describing field container: grid metadata, rank, per-axis transition
// data, then row-major site data (column-major within a site, re/im pairs).
struct FieldContainer {
  std::unique_ptr<Grid> grid;
  std::unique_ptr<BundleSpec> spec;
  MetricField metric;
  std::string kind;  // "metric" or "endo"
};

void save_metric(const std::string& path, const MetricField& H);
FieldContainer load_metric(const std::string& path);

Json flow_report_to_json(const FlowReport& rep, bool include_timing);
void write_series_csv(const std::string& path, const FlowReport& rep);
void write_report(const std::string& path, const Json& report);

extern const char* kVersion;

}  // namespace helab

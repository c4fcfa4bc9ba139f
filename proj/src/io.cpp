#include "helab/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace helab {

const char* kVersion = "helab 0.1.0";

Json grid_to_json(const Grid& g) {
  Json axes = Json::array();
  for (const auto& a : g.axes()) {
    axes.push_back(Json{{"name", a.name},
                        {"length", a.length},
                        {"points", a.points},
                        {"rule", to_string(a.rule)},
                        {"origin", a.origin}});
  }
  Json pairs = Json::array();
  for (const auto& p : g.pairs())
    pairs.push_back(Json{{"name", p.name}, {"re_axis", p.re_axis}, {"im_axis", p.im_axis}});
  return Json{{"axes", axes}, {"pairs", pairs}, {"reduced_volume", g.reduced_volume()}};
}

std::unique_ptr<Grid> grid_from_json(const Json& j) {
  std::vector<Axis> axes;
  for (const auto& a : j.at("axes")) {
    axes.push_back(Axis{a.at("name").get<std::string>(), a.at("length").get<double>(),
                        a.at("points").get<int>(),
                        axis_rule_from_string(a.at("rule").get<std::string>()),
                        a.at("origin").get<double>()});
  }
  std::vector<ComplexPair> pairs;
  for (const auto& p : j.at("pairs"))
    pairs.push_back(ComplexPair{p.at("name").get<std::string>(), p.at("re_axis").get<int>(),
                                p.at("im_axis").get<int>()});
  return std::make_unique<Grid>(std::move(axes), std::move(pairs),
                                j.at("reduced_volume").get<double>());
}

namespace {

Json matrix_field_data(const MatrixField& f) {
  Json arr = Json::array();
  for (const Cplx& z : f.raw()) {
    arr.push_back(z.real());
    arr.push_back(z.imag());
  }
  return arr;
}

MatrixField matrix_field_from(const Grid& g, int rank, const Json& arr) {
  MatrixField f(g, rank);
  const size_t n = f.raw().size();
  if (arr.size() != 2 * n) throw IoError("field container: data size mismatch");
  for (size_t i = 0; i < n; ++i)
    f.raw()[i] = Cplx(arr[2 * i].get<double>(), arr[2 * i + 1].get<double>());
  return f;
}

}  // namespace

void save_metric(const std::string& path, const MetricField& H) {
  Json j;
  j["format"] = "helab-field";
  j["version"] = 1;
  j["kind"] = "metric";
  j["grid"] = grid_to_json(H.grid());
  j["rank"] = H.rank();
  Json twists = Json::object();
  for (int k = 0; k < H.grid().dim(); ++k) {
    if (!H.spec->has_twist(k)) continue;
    twists[std::to_string(k)] = matrix_field_data(H.spec->twist(k).T);
  }
  j["twists"] = twists;
  j["data"] = matrix_field_data(H.m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(0) << "\n";
}

FieldContainer load_metric(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  Json j = Json::parse(in);
  if (j.at("format").get<std::string>() != "helab-field")
    throw IoError(path + ": not a field container");
  FieldContainer c;
  c.kind = j.at("kind").get<std::string>();
  c.grid = grid_from_json(j.at("grid"));
  int rank = j.at("rank").get<int>();
  c.spec = std::make_unique<BundleSpec>(*c.grid, rank);
  for (auto& [key, val] : j.at("twists").items())
    c.spec->set_twist(std::stoi(key), matrix_field_from(*c.grid, rank, val));
  c.metric = MetricField(*c.spec, matrix_field_from(*c.grid, rank, j.at("data")));
  return c;
}

Json flow_report_to_json(const FlowReport& rep, bool include_timing) {
  Json j;
  j["steps"] = rep.steps;
  j["converged"] = rep.converged;
  j["no_stationary_point_reached"] = rep.no_stationary;
  j["initial_res_sup"] = rep.initial_res_sup;
  j["final_res_sup"] = rep.final_res_sup;
  j["he_residual_final"] = rep.final_res_sup;
  j["recorded"] = rep.times.size();
  if (!rep.M_h0.empty()) j["M_final"] = rep.M_h0.back();
  if (!rep.det_drift.empty()) j["det_drift_final"] = rep.det_drift.back();
  if (!rep.s_sup.empty()) j["s_sup_final"] = rep.s_sup.back();
  if (include_timing) j["wall_seconds"] = rep.wall_seconds;
  return j;
}

void write_series_csv(const std::string& path, const FlowReport& rep) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "t,res_sup,res_l2,M_h0,det_drift,F_sup,s_sup\n";
  out << std::setprecision(17);
  for (size_t k = 0; k < rep.times.size(); ++k) {
    out << rep.times[k] << ',' << rep.res_sup[k] << ',' << rep.res_l2[k] << ',' << rep.M_h0[k]
        << ',' << rep.det_drift[k] << ',' << rep.F_sup[k] << ',' << rep.s_sup[k] << "\n";
  }
}

void write_report(const std::string& path, const Json& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << report.dump(2) << "\n";
}

}  // namespace helab

#include "conds/io.hpp"

#include "conds/fields.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace conds {

std::string format_double(double v) {
  char buf[40];
  int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf, static_cast<size_t>(len));
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("file-not-found", "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("json-parse", path + ": " + e.what());
  }
}

void save_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("file-not-writable", "cannot write " + path);
  out << j.dump(2) << "\n";
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) {
    // trim whitespace
    size_t a = cur.find_first_not_of(" \t\r");
    size_t b = cur.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : cur.substr(a, b - a + 1));
  }
  return out;
}

double parse_num(const std::string& tok, const std::string& path, int row) {
  try {
    size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    std::ostringstream os;
    os << path << " row " << row << ": cannot parse number '" << tok << "'";
    throw ValidationError("csv-parse", os.str());
  }
}

bool blank_line(const std::string& s) {
  return s.find_first_not_of(" \t\r") == std::string::npos;
}

Trajectory finish_rows(std::vector<std::vector<double>>& rows, int n, bool has_v,
                       const std::string& path, int first_row) {
  Trajectory tr;
  const int N = static_cast<int>(rows.size());
  if (N < 2) {
    std::ostringstream os;
    os << path << " row " << first_row << ": trajectory needs at least 2 samples";
    throw ValidationError("degenerate-demo", os.str());
  }
  tr.times.resize(N);
  tr.points.resize(n, N);
  if (has_v) tr.velocities.resize(n, N);
  for (int i = 0; i < N; ++i) {
    tr.times[i] = rows[i][0];
    for (int d = 0; d < n; ++d) tr.points(d, i) = rows[i][1 + d];
    if (has_v) {
      for (int d = 0; d < n; ++d) tr.velocities(d, i) = rows[i][1 + n + d];
    }
    if (i > 0 && !(tr.times[i] > tr.times[i - 1])) {
      std::ostringstream os;
      os << path << " row " << first_row + i << ": times not strictly increasing";
      throw ValidationError("bad-times", os.str());
    }
  }
  rows.clear();
  return tr;
}

}  // namespace

void write_demo_csv(const std::string& csv_path, const std::string& sidecar_path,
                    const DemoSet& demos, const std::string& units) {
  demos.validate();
  const int n = demos.dim();
  std::ofstream out(csv_path);
  if (!out) throw ValidationError("file-not-writable", "cannot write " + csv_path);
  bool has_v = true;
  for (const auto& tr : demos.trajectories) {
    if (tr.velocities.size() == 0) has_v = false;
  }
  out << "t";
  for (int d = 1; d <= n; ++d) out << ",x" << d;
  if (has_v) {
    for (int d = 1; d <= n; ++d) out << ",v" << d;
  }
  out << "\n";
  bool first = true;
  for (const auto& tr : demos.trajectories) {
    if (!first) out << "\n";
    first = false;
    for (int i = 0; i < tr.points.cols(); ++i) {
      out << format_double(tr.times[i]);
      for (int d = 0; d < n; ++d) out << "," << format_double(tr.points(d, i));
      if (has_v) {
        for (int d = 0; d < n; ++d) out << "," << format_double(tr.velocities(d, i));
      }
      out << "\n";
    }
  }

  nlohmann::json side;
  side["equilibrium"] = std::vector<double>(demos.equilibrium.data(),
                                            demos.equilibrium.data() + n);
  side["units"] = units;
  if (demos.external_control_points) {
    const Mat& cp = *demos.external_control_points;
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < cp.cols(); ++i) {
      rows.push_back(std::vector<double>(cp.col(i).data(), cp.col(i).data() + cp.rows()));
    }
    side["external_control_points"] = rows;
  }
  save_json(sidecar_path, side);
}

DemoSet read_demo_csv(const std::string& csv_path, const std::string& sidecar_path) {
  std::ifstream in(csv_path);
  if (!in) throw ValidationError("file-not-found", "cannot open " + csv_path);

  std::string line;
  int row = 0;
  // header
  if (!std::getline(in, line)) {
    throw ValidationError("csv-parse", csv_path + ": empty file");
  }
  ++row;
  auto header = split_csv(line);
  if (header.empty() || header[0] != "t") {
    throw ValidationError("csv-parse", csv_path + " row 1: header must start with 't'");
  }
  int n = 0;
  size_t idx = 1;
  while (idx < header.size() && header[idx] == "x" + std::to_string(n + 1)) {
    ++n;
    ++idx;
  }
  if (n == 0) {
    throw ValidationError("csv-parse", csv_path + " row 1: expected x1.. position columns");
  }
  bool has_v = false;
  if (idx < header.size()) {
    for (int d = 1; d <= n; ++d, ++idx) {
      if (idx >= header.size() || header[idx] != "v" + std::to_string(d)) {
        throw ValidationError("csv-parse",
                              csv_path + " row 1: malformed velocity columns");
      }
    }
    has_v = true;
  }
  if (idx != header.size()) {
    throw ValidationError("csv-parse", csv_path + " row 1: unexpected trailing columns");
  }
  const size_t want = 1 + static_cast<size_t>(n) * (has_v ? 2 : 1);

  DemoSet demos;
  std::vector<std::vector<double>> rows;
  int first_row = row + 1;
  while (std::getline(in, line)) {
    ++row;
    if (blank_line(line)) {
      if (!rows.empty()) {
        demos.trajectories.push_back(finish_rows(rows, n, has_v, csv_path, first_row));
      }
      first_row = row + 1;
      continue;
    }
    auto toks = split_csv(line);
    if (toks.size() != want) {
      std::ostringstream os;
      os << csv_path << " row " << row << ": expected " << want << " columns, got "
         << toks.size();
      throw ValidationError("csv-parse", os.str());
    }
    std::vector<double> vals(want);
    for (size_t c = 0; c < want; ++c) vals[c] = parse_num(toks[c], csv_path, row);
    rows.push_back(std::move(vals));
  }
  if (!rows.empty()) {
    demos.trajectories.push_back(finish_rows(rows, n, has_v, csv_path, first_row));
  }
  if (demos.trajectories.empty()) {
    throw ValidationError("csv-parse", csv_path + ": no data rows");
  }
  for (auto& tr : demos.trajectories) {
    tr.velocities_derived = !has_v;
  }

  nlohmann::json side = load_json(sidecar_path);
  if (!side.contains("equilibrium")) {
    throw ValidationError("bad-config", sidecar_path + ": missing 'equilibrium'");
  }
  auto eq = side["equilibrium"].get<std::vector<double>>();
  if (static_cast<int>(eq.size()) != n) {
    throw ValidationError("bad-config", sidecar_path + ": equilibrium dimension mismatch");
  }
  demos.equilibrium = Eigen::Map<const Vec>(eq.data(), n);
  if (side.contains("external_control_points")) {
    const auto& rows_j = side["external_control_points"];
    Mat cp(n, static_cast<Eigen::Index>(rows_j.size()));
    for (size_t i = 0; i < rows_j.size(); ++i) {
      auto pt = rows_j[i].get<std::vector<double>>();
      if (static_cast<int>(pt.size()) != n) {
        throw ValidationError("bad-config",
                              sidecar_path + ": control point dimension mismatch");
      }
      cp.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Vec>(pt.data(), n);
    }
    demos.external_control_points = cp;
  }
  demos.validate();
  return demos;
}

void write_model(const std::string& path, const PotentialModel& model) {
  nlohmann::json j = model.to_json();
  j["type"] = "potential";
  save_json(path, j);
}

PotentialModel read_model(const std::string& path) {
  nlohmann::json j = load_json(path);
  if (j.value("type", "potential") != "potential") {
    throw ValidationError("bad-config", path + ": not a potential model file");
  }
  try {
    return PotentialModel::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("json-parse", path + ": " + e.what());
  }
}

nlohmann::json lifted_to_json(const LiftedModel& lm) {
  nlohmann::json j;
  j["type"] = "lifted";
  j["model"] = lm.model.to_json();
  j["base_dim"] = lm.base_dim;
  j["w0"] = lm.w0;
  j["w1"] = lm.w1;
  j["wrap"] = lm.wrap;
  j["wrap_margin"] = lm.wrap_margin;
  j["crossfade"] = lm.crossfade;
  return j;
}

LiftedModel lifted_from_json(const nlohmann::json& j) {
  LiftedModel lm;
  lm.model = PotentialModel::from_json(j.at("model"));
  lm.base_dim = j.at("base_dim").get<int>();
  lm.w0 = j.at("w0").get<double>();
  lm.w1 = j.at("w1").get<double>();
  lm.wrap = j.at("wrap").get<bool>();
  lm.wrap_margin = j.at("wrap_margin").get<double>();
  lm.crossfade = j.at("crossfade").get<double>();
  return lm;
}

void write_lifted_model(const std::string& path, const LiftedModel& lm) {
  save_json(path, lifted_to_json(lm));
}

LiftedModel read_lifted_model(const std::string& path) {
  nlohmann::json j = load_json(path);
  if (j.value("type", "") != "lifted") {
    throw ValidationError("bad-config", path + ": not a lifted model file");
  }
  try {
    return lifted_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("json-parse", path + ": " + e.what());
  }
}

void write_trace_csv(const std::string& path, const Trace& trace) {
  std::ofstream out(path);
  if (!out) throw ValidationError("file-not-writable", "cannot write " + path);
  const int n = trace.steps.empty() ? 0 : static_cast<int>(trace.steps.front().x.size());
  out << "t";
  for (int d = 1; d <= n; ++d) out << ",x" << d;
  for (int d = 1; d <= n; ++d) out << ",v" << d;
  for (int d = 1; d <= n; ++d) out << ",tau_c" << d;
  for (int d = 1; d <= n; ++d) out << ",tau_e" << d;
  out << ",s,alpha,beta,W,Wdot,w_virtual,wrapped\n";
  for (const auto& st : trace.steps) {
    out << format_double(st.t);
    for (int d = 0; d < n; ++d) out << "," << format_double(st.x[d]);
    for (int d = 0; d < n; ++d) out << "," << format_double(st.v[d]);
    for (int d = 0; d < n; ++d) out << "," << format_double(st.tau_c[d]);
    for (int d = 0; d < n; ++d) out << "," << format_double(st.tau_e[d]);
    out << "," << format_double(st.s) << "," << format_double(st.alpha) << ","
        << format_double(st.beta) << "," << format_double(st.W) << ","
        << format_double(st.Wdot) << "," << format_double(st.w_virtual) << ","
        << (st.wrapped ? 1 : 0) << "\n";
  }
}

void write_grid_csv(const std::string& path, const Field& field, const Box& region,
                    int resolution, double eps_vel) {
  const int n = field.dim;
  if (n != 2 && n != 3) {
    throw ValidationError("unsupported-dimension", "grid export supports dim 2 or 3");
  }
  if (resolution < 2) throw ValidationError("bad-config", "grid resolution must be >= 2");
  std::ofstream out(path);
  if (!out) throw ValidationError("file-not-writable", "cannot write " + path);
  for (int d = 1; d <= n; ++d) out << (d == 1 ? "x1" : ",x" + std::to_string(d));
  for (int d = 1; d <= n; ++d) out << ",f" << d;
  out << ",omega\n";

  auto coord = [&](int d, int i) {
    return region.lo[d] + (region.hi[d] - region.lo[d]) * i / (resolution - 1);
  };
  auto emit = [&](const Vec& x) {
    Vec f = field.eval(x);
    double omega;
    try {
      omega = angular_velocity(field, x, eps_vel);
    } catch (const Error&) {
      omega = std::numeric_limits<double>::quiet_NaN();
    }
    for (int d = 0; d < n; ++d) out << (d == 0 ? "" : ",") << format_double(x[d]);
    for (int d = 0; d < n; ++d) out << "," << format_double(f[d]);
    out << "," << format_double(omega) << "\n";
  };

  Vec x(n);
  if (n == 2) {
    for (int i = 0; i < resolution; ++i) {
      for (int j = 0; j < resolution; ++j) {
        x[0] = coord(0, i);
        x[1] = coord(1, j);
        emit(x);
      }
    }
  } else {
    for (int i = 0; i < resolution; ++i) {
      for (int j = 0; j < resolution; ++j) {
        for (int k = 0; k < resolution; ++k) {
          x[0] = coord(0, i);
          x[1] = coord(1, j);
          x[2] = coord(2, k);
          emit(x);
        }
      }
    }
  }
}

}  // namespace conds

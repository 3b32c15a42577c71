#pragma once

#include "conds/control.hpp"
#include "conds/learn.hpp"
#include "conds/lift.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace conds {

// Shortest round-trip decimal form of a double (stable across runs).
std::string format_double(double v);

nlohmann::json load_json(const std::string& path);
void save_json(const std::string& path, const nlohmann::json& j);

// Demo CSV: header "t,x1..xn[,v1..vn]", one row per sample, trajectories
// separated by blank lines. Metadata (equilibrium, units, optional external
// control points) lives in a JSON sidecar.
void write_demo_csv(const std::string& csv_path, const std::string& sidecar_path,
                    const DemoSet& demos, const std::string& units = "m");
DemoSet read_demo_csv(const std::string& csv_path, const std::string& sidecar_path);

void write_model(const std::string& path, const PotentialModel& model);
PotentialModel read_model(const std::string& path);

nlohmann::json lifted_to_json(const LiftedModel& lm);
LiftedModel lifted_from_json(const nlohmann::json& j);
void write_lifted_model(const std::string& path, const LiftedModel& lm);
LiftedModel read_lifted_model(const std::string& path);

// Trace CSV: one row per step, header documented in the README.
void write_trace_csv(const std::string& path, const Trace& trace);

// Field grid CSV: header x1,x2[,x3],f1,f2[,f3],omega over a uniform grid.
// Omega entries where the 3D direction degenerates are written as "nan".
void write_grid_csv(const std::string& path, const Field& field, const Box& region,
                    int resolution = 80, double eps_vel = 1e-9);

}  // namespace conds

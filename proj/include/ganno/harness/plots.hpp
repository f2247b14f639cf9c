#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ganno/env/environment.hpp"

namespace ganno::harness {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

// x is the environment step; the lr series hold one curve per layer.
struct EpisodeCurves {
  std::vector<Series> lr;
  Series accuracy;
};

EpisodeCurves episode_curves(const std::vector<env::TraceRow>& trace);

// Number of upward jumps in a series.
int count_increases(const Series& s);

// Columns step,layer_0..layer_{N-1}.
std::string lr_curve_csv(const EpisodeCurves& c);
// Columns step,val_acc.
std::string accuracy_curve_csv(const EpisodeCurves& c);
// Two stacked panels: learning rates (log scale when all positive) and
// validation accuracy.
std::string render_svg(const EpisodeCurves& c, const std::string& title);

// Inverse of env::trace_csv.
std::vector<env::TraceRow> parse_trace_csv(const std::string& text);

struct NamedTrace {
  std::string name;  // file stem, may contain '/'
  std::vector<env::TraceRow> trace;
};

// Writes <name>_lr.csv, <name>_acc.csv and <name>.svg under `dir` for every
// trace and returns the written paths.
std::vector<std::filesystem::path> emit_plots(const std::vector<NamedTrace>& traces,
                                              const std::filesystem::path& dir);

}  // namespace ganno::harness

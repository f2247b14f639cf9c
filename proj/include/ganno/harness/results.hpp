#pragma once

#include <string>
#include <vector>

namespace ganno::harness {

// Final accuracy of one (method, lr, weight decay, seed) evaluation, as a
// fraction in [0, 1].
struct CellResult {
  std::string method;
  double lr = 0.0;
  double weight_decay = 0.0;
  int seed = 0;
  double accuracy = 0.0;
};

// Accuracies below are percentages; std is the sample standard deviation
// over seeds (0 for a single seed).
struct ResultRow {
  std::string method;
  double lr = 0.0;
  double weight_decay = 0.0;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  int n_seeds = 0;
  bool is_best = false;  // largest mean among methods for this (lr, wd)
};

// Per-method average over its grid cells. The spread is taken over seeds of
// the per-seed grid averages.
struct MethodAverage {
  std::string method;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  int n_seeds = 0;
  bool is_best = false;
};

struct ResultTable {
  std::vector<ResultRow> rows;  // method-major, in first-seen order
  std::vector<MethodAverage> averages;

  const ResultRow* find(const std::string& method, double lr, double wd) const;
  const MethodAverage* average(const std::string& method) const;
};

// Requires every (method, lr, wd) cell to hold exactly the seeds 0..seeds-1;
// throws AggregationError naming the cell otherwise, or when an accuracy is
// outside [0, 1].
ResultTable aggregate(const std::vector<CellResult>& cells, int seeds);

// "71.00 ± 1.00"
std::string format_mean_std(double mean, double std);

// Header: method,lr,weight_decay,mean_acc,std_acc,n_seeds,is_best. Method
// averages follow the grid rows with lr and weight_decay set to "average".
std::string result_csv(const ResultTable& table);

// Fixed-width text table; best cells are starred.
std::string render_table(const ResultTable& table);

}  // namespace ganno::harness

#include "ganno/harness/results.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

#include "ganno/errors.hpp"
#include "ganno/format.hpp"

namespace ganno::harness {

namespace {

std::string cell_name(const std::string& method, double lr, double wd) {
  return method + " (lr=" + exact(lr) + ", wd=" + exact(wd) + ")";
}

double sample_std(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

}  // namespace

const ResultRow* ResultTable::find(const std::string& method, double lr, double wd) const {
  for (const auto& r : rows) {
    if (r.method == method && r.lr == lr && r.weight_decay == wd) return &r;
  }
  return nullptr;
}

const MethodAverage* ResultTable::average(const std::string& method) const {
  for (const auto& a : averages) {
    if (a.method == method) return &a;
  }
  return nullptr;
}

ResultTable aggregate(const std::vector<CellResult>& cells, int seeds) {
  if (seeds < 1) throw AggregationError("seed count must be >= 1");
  struct Group {
    std::string method;
    double lr, wd;
    std::vector<double> acc;  // by seed, NaN when missing
    std::vector<int> hits;
  };
  std::vector<Group> groups;
  std::vector<std::string> methods;
  for (const auto& c : cells) {
    const std::string name = cell_name(c.method, c.lr, c.weight_decay);
    if (!(c.accuracy >= 0.0 && c.accuracy <= 1.0)) {
      throw AggregationError(name + ": accuracy " + exact(c.accuracy) +
                             " outside [0, 1] for seed " + std::to_string(c.seed));
    }
    if (c.seed < 0 || c.seed >= seeds) {
      throw AggregationError(name + ": seed " + std::to_string(c.seed) +
                             " outside the configured " + std::to_string(seeds));
    }
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.method == c.method && g.lr == c.lr && g.wd == c.weight_decay;
    });
    if (it == groups.end()) {
      groups.push_back({c.method, c.lr, c.weight_decay,
                        std::vector<double>(static_cast<std::size_t>(seeds), NAN),
                        std::vector<int>(static_cast<std::size_t>(seeds), 0)});
      it = groups.end() - 1;
      if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) {
        methods.push_back(c.method);
      }
    }
    if (it->hits[c.seed]++ > 0) {
      throw AggregationError(name + ": seed " + std::to_string(c.seed) + " reported twice");
    }
    it->acc[c.seed] = 100.0 * c.accuracy;
  }
  for (const auto& g : groups) {
    for (int k = 0; k < seeds; ++k) {
      if (g.hits[k] == 0) {
        throw AggregationError(cell_name(g.method, g.lr, g.wd) + ": missing seed " +
                               std::to_string(k));
      }
    }
  }

  ResultTable t;
  for (const auto& m : methods) {
    std::vector<double> per_seed(static_cast<std::size_t>(seeds), 0.0);
    int n_cells = 0;
    for (const auto& g : groups) {
      if (g.method != m) continue;
      t.rows.push_back({g.method, g.lr, g.wd, mean_of(g.acc), sample_std(g.acc), seeds, false});
      for (int k = 0; k < seeds; ++k) per_seed[k] += g.acc[k];
      ++n_cells;
    }
    for (double& v : per_seed) v /= n_cells;
    t.averages.push_back({m, mean_of(per_seed), sample_std(per_seed), seeds, false});
  }
  std::map<std::pair<double, double>, double> best;
  for (const auto& r : t.rows) {
    auto [it, fresh] = best.try_emplace({r.lr, r.weight_decay}, r.mean_acc);
    if (!fresh) it->second = std::max(it->second, r.mean_acc);
  }
  for (auto& r : t.rows) r.is_best = r.mean_acc == best[{r.lr, r.weight_decay}];
  double top = -1.0;
  for (const auto& a : t.averages) top = std::max(top, a.mean_acc);
  for (auto& a : t.averages) a.is_best = a.mean_acc == top;
  return t;
}

std::string format_mean_std(double mean, double std) {
  return fixed(mean, 2) + " ± " + fixed(std, 2);
}

std::string result_csv(const ResultTable& table) {
  std::ostringstream out;
  out << "method,lr,weight_decay,mean_acc,std_acc,n_seeds,is_best\n";
  for (const auto& r : table.rows) {
    out << r.method << ',' << exact(r.lr) << ',' << exact(r.weight_decay) << ','
        << fixed(r.mean_acc, 4) << ',' << fixed(r.std_acc, 4) << ',' << r.n_seeds << ','
        << (r.is_best ? 1 : 0) << '\n';
  }
  for (const auto& a : table.averages) {
    out << a.method << ",average,average," << fixed(a.mean_acc, 4) << ','
        << fixed(a.std_acc, 4) << ',' << a.n_seeds << ',' << (a.is_best ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string render_table(const ResultTable& table) {
  std::ostringstream out;
  std::size_t width = 6;
  for (const auto& r : table.rows) width = std::max(width, r.method.size());
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  out << pad("method", width) << "  " << pad("lr", 10) << pad("wd", 10) << "accuracy %\n";
  for (const auto& r : table.rows) {
    out << pad(r.method, width) << "  " << pad(exact(r.lr), 10)
        << pad(exact(r.weight_decay), 10) << format_mean_std(r.mean_acc, r.std_acc)
        << (r.is_best ? " *" : "") << '\n';
  }
  for (const auto& a : table.averages) {
    out << pad(a.method, width) << "  " << pad("average", 20)
        << format_mean_std(a.mean_acc, a.std_acc) << (a.is_best ? " *" : "") << '\n';
  }
  return out.str();
}

}  // namespace ganno::harness

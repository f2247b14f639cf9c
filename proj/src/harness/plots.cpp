#include "ganno/harness/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ganno/errors.hpp"
#include "ganno/format.hpp"

namespace ganno::harness {

EpisodeCurves episode_curves(const std::vector<env::TraceRow>& trace) {
  EpisodeCurves c;
  c.accuracy.name = "val_acc";
  const std::size_t layers = trace.empty() ? 0 : trace.front().layer_lrs.size();
  for (std::size_t l = 0; l < layers; ++l) c.lr.push_back({"layer_" + std::to_string(l), {}});
  for (const auto& row : trace) {
    const auto x = static_cast<double>(row.t);
    for (std::size_t l = 0; l < layers && l < row.layer_lrs.size(); ++l) {
      c.lr[l].points.emplace_back(x, row.layer_lrs[l]);
    }
    c.accuracy.points.emplace_back(x, row.val_acc);
  }
  return c;
}

int count_increases(const Series& s) {
  int n = 0;
  for (std::size_t i = 1; i < s.points.size(); ++i) {
    if (s.points[i].second > s.points[i - 1].second) ++n;
  }
  return n;
}

std::string lr_curve_csv(const EpisodeCurves& c) {
  std::ostringstream out;
  out << "step";
  for (const auto& s : c.lr) out << ',' << s.name;
  out << '\n';
  const std::size_t n = c.lr.empty() ? 0 : c.lr.front().points.size();
  for (std::size_t i = 0; i < n; ++i) {
    out << exact(c.lr.front().points[i].first);
    for (const auto& s : c.lr) out << ',' << exact(s.points[i].second);
    out << '\n';
  }
  return out.str();
}

std::string accuracy_curve_csv(const EpisodeCurves& c) {
  std::ostringstream out;
  out << "step," << c.accuracy.name << '\n';
  for (const auto& [x, y] : c.accuracy.points) out << exact(x) << ',' << exact(y) << '\n';
  return out.str();
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

struct Panel {
  double top, height;
  double xmin, xmax, ymin, ymax;
  bool log_y;
};

double map_y(const Panel& p, double y) {
  if (p.log_y) y = std::log10(y);
  const double span = p.ymax > p.ymin ? p.ymax - p.ymin : 1.0;
  return p.top + p.height * (1.0 - (y - p.ymin) / span);
}

double map_x(const Panel& p, double x, double left, double width) {
  const double span = p.xmax > p.xmin ? p.xmax - p.xmin : 1.0;
  return left + width * (x - p.xmin) / span;
}

void draw_series(std::ostringstream& out, const Panel& p, const Series& s, const char* color,
                 double left, double width) {
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
  for (const auto& [x, y] : s.points) {
    out << fixed(map_x(p, x, left, width), 2) << ',' << fixed(map_y(p, y), 2) << ' ';
  }
  out << "\"/>\n";
}

Panel make_panel(const std::vector<const Series*>& series, double top, double height,
                 bool allow_log) {
  Panel p{top, height, INFINITY, -INFINITY, INFINITY, -INFINITY, allow_log};
  for (const Series* s : series) {
    for (const auto& [x, y] : s->points) {
      p.log_y = p.log_y && y > 0.0;
      p.xmin = std::min(p.xmin, x);
      p.xmax = std::max(p.xmax, x);
    }
  }
  for (const Series* s : series) {
    for (const auto& pt : s->points) {
      const double y = p.log_y ? std::log10(pt.second) : pt.second;
      p.ymin = std::min(p.ymin, y);
      p.ymax = std::max(p.ymax, y);
    }
  }
  if (!std::isfinite(p.xmin)) p.xmin = 0, p.xmax = 1;
  if (!std::isfinite(p.ymin)) p.ymin = 0, p.ymax = 1;
  if (p.ymax == p.ymin) {
    p.ymin -= 0.5;
    p.ymax += 0.5;
  }
  return p;
}

std::string axis_label(const Panel& p, double v) {
  return p.log_y ? "1e" + fixed(v, 1) : fixed(v, 3);
}

}  // namespace

std::string render_svg(const EpisodeCurves& c, const std::string& title) {
  const double w = 640, left = 70, plot_w = 540;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"480\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n";

  std::vector<const Series*> lr;
  for (const auto& s : c.lr) lr.push_back(&s);
  const Panel top = make_panel(lr, 40, 180, true);
  const Panel bottom = make_panel({&c.accuracy}, 270, 160, false);
  for (const Panel* p : {&top, &bottom}) {
    out << "<rect x=\"" << left << "\" y=\"" << p->top << "\" width=\"" << plot_w
        << "\" height=\"" << p->height << "\" fill=\"none\" stroke=\"#999\"/>\n";
    out << "<text x=\"4\" y=\"" << p->top + 10 << "\">" << axis_label(*p, p->ymax)
        << "</text>\n";
    out << "<text x=\"4\" y=\"" << p->top + p->height << "\">" << axis_label(*p, p->ymin)
        << "</text>\n";
  }
  out << "<text x=\"" << left + 4 << "\" y=\"" << top.top + 14 << "\">learning rate</text>\n";
  out << "<text x=\"" << left + 4 << "\" y=\"" << bottom.top + 14
      << "\">validation accuracy</text>\n";
  out << "<text x=\"" << left << "\" y=\"450\">step " << exact(top.xmin) << "</text>\n";
  out << "<text x=\"" << left + plot_w - 60 << "\" y=\"450\">step " << exact(top.xmax)
      << "</text>\n";
  for (std::size_t i = 0; i < c.lr.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    draw_series(out, top, c.lr[i], color, left, plot_w);
    out << "<text x=\"" << left + 10 + 70 * static_cast<double>(i) << "\" y=\"470\" fill=\""
        << color << "\">" << c.lr[i].name << "</text>\n";
  }
  draw_series(out, bottom, c.accuracy, "#000000", left, plot_w);
  out << "</svg>\n";
  return out.str();
}

std::vector<env::TraceRow> parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DecodeError("empty trace");
  const auto columns = std::count(line.begin(), line.end(), ',') + 1;
  if (line.rfind("t,", 0) != 0 || columns < 5) throw DecodeError("not a trace CSV header");
  const auto layers = static_cast<std::size_t>(columns - 4);
  std::vector<env::TraceRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::istringstream fields(line);
    std::string f;
    while (std::getline(fields, f, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(f, &used));
        if (used != f.size()) throw DecodeError("bad number '" + f + "'");
      } catch (const std::logic_error&) {
        throw DecodeError("bad number '" + f + "' in trace");
      }
    }
    if (v.size() != static_cast<std::size_t>(columns)) {
      throw DecodeError("trace row has " + std::to_string(v.size()) + " fields, expected " +
                        std::to_string(columns));
    }
    env::TraceRow r;
    r.t = static_cast<int>(v[0]);
    r.layer_lrs.assign(v.begin() + 1, v.begin() + 1 + static_cast<std::ptrdiff_t>(layers));
    r.train_loss = v[1 + layers];
    r.val_acc = v[2 + layers];
    r.reward = v[3 + layers];
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw LoadError("cannot write " + path.string());
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(const std::vector<NamedTrace>& traces,
                                              const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  for (const auto& t : traces) {
    const EpisodeCurves c = episode_curves(t.trace);
    const auto stem = dir / t.name;
    const std::filesystem::path lr = stem.string() + "_lr.csv";
    const std::filesystem::path acc = stem.string() + "_acc.csv";
    const std::filesystem::path svg = stem.string() + ".svg";
    write_text(lr, lr_curve_csv(c));
    write_text(acc, accuracy_curve_csv(c));
    write_text(svg, render_svg(c, t.name));
    written.insert(written.end(), {lr, acc, svg});
  }
  return written;
}

}  // namespace ganno::harness

#include "ganno/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ganno/data/split.hpp"
#include "ganno/errors.hpp"
#include "ganno/random.hpp"

namespace ganno::nn {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense:
      return "dense";
    case LayerKind::conv2d:
      return "conv2d";
    case LayerKind::attention:
      return "attention";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  if (name == "dense") return LayerKind::dense;
  if (name == "conv2d") return LayerKind::conv2d;
  if (name == "attention") return LayerKind::attention;
  throw ConfigError("unknown layer kind '" + name + "'");
}

std::vector<LayerGeometry> resolve(const NetworkSpec& spec) {
  const Shape& in = spec.input;
  if (in.channels <= 0 || in.height <= 0 || in.width <= 0) {
    throw ConfigError("input shape must be positive");
  }
  if (spec.layers.empty()) {
    throw ConfigError("network needs at least one trainable layer");
  }
  if (spec.num_classes < 2) {
    throw ConfigError("num_classes must be at least 2");
  }

  std::vector<LayerGeometry> out;
  Shape cur = in;
  bool flattened = false;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& ls = spec.layers[l];
    const std::string where = "layer " + std::to_string(l) + ": ";
    if (ls.units <= 0) throw ConfigError(where + "units must be positive");
    LayerGeometry g;
    g.kind = ls.kind;
    g.relu = ls.activation == Activation::relu;
    switch (ls.kind) {
      case LayerKind::attention:
        throw ConfigError(where + "attention layers are not implemented");
      case LayerKind::dense: {
        if (ls.pool) throw ConfigError(where + "dense layers cannot pool");
        g.in = Shape{static_cast<int>(cur.size()), 1, 1};
        g.out = Shape{ls.units, 1, 1};
        g.pooled = g.out;
        g.weight_count = static_cast<std::size_t>(ls.units) * cur.size();
        g.bias_count = static_cast<std::size_t>(ls.units);
        flattened = true;
        break;
      }
      case LayerKind::conv2d: {
        if (flattened) {
          throw ConfigError(where + "conv2d cannot follow a dense layer");
        }
        if (ls.kernel <= 0 || ls.kernel % 2 == 0) {
          throw ConfigError(where + "conv2d kernel must be odd and positive");
        }
        g.in = cur;
        g.kernel = ls.kernel;
        g.out = Shape{ls.units, cur.height, cur.width};
        g.pool = ls.pool;
        if (ls.pool) {
          if (cur.height < 2 || cur.width < 2) {
            throw ConfigError(where + "spatial size too small to pool");
          }
          g.pooled = Shape{ls.units, cur.height / 2, cur.width / 2};
        } else {
          g.pooled = g.out;
        }
        g.weight_count = static_cast<std::size_t>(ls.units) * cur.channels *
                         ls.kernel * ls.kernel;
        g.bias_count = static_cast<std::size_t>(ls.units);
        break;
      }
    }
    cur = g.pooled;
    out.push_back(g);
  }
  if (cur.size() != static_cast<std::size_t>(spec.num_classes)) {
    throw ConfigError("final layer produces " + std::to_string(cur.size()) +
                      " outputs but num_classes is " +
                      std::to_string(spec.num_classes));
  }
  return out;
}

NetworkState init_state(const NetworkSpec& spec, std::uint64_t seed) {
  const auto geometry = resolve(spec);
  Rng rng(seed);
  NetworkState state;
  state.layers.reserve(geometry.size());
  for (const LayerGeometry& g : geometry) {
    double fan_in = 0.0;
    double fan_out = 0.0;
    if (g.kind == LayerKind::dense) {
      fan_in = static_cast<double>(g.in.size());
      fan_out = static_cast<double>(g.out.size());
    } else {
      const double k2 = static_cast<double>(g.kernel) * g.kernel;
      fan_in = g.in.channels * k2;
      fan_out = g.out.channels * k2;
    }
    const double limit = g.relu ? std::sqrt(6.0 / fan_in)
                                : std::sqrt(6.0 / (fan_in + fan_out));
    LayerParams p;
    p.weights.resize(g.weight_count);
    for (float& w : p.weights) {
      w = static_cast<float>(rng.uniform(-limit, limit));
    }
    p.bias.assign(g.bias_count, 0.0f);
    p.m_weights.assign(g.weight_count, 0.0f);
    p.v_weights.assign(g.weight_count, 0.0f);
    p.m_bias.assign(g.bias_count, 0.0f);
    p.v_bias.assign(g.bias_count, 0.0f);
    state.layers.push_back(std::move(p));
  }
  return state;
}

void check_state(const NetworkSpec& spec, const NetworkState& state) {
  const auto geometry = resolve(spec);
  if (state.layers.size() != geometry.size()) {
    throw ConfigError("state has " + std::to_string(state.layers.size()) +
                      " layers, network has " +
                      std::to_string(geometry.size()));
  }
  for (std::size_t l = 0; l < geometry.size(); ++l) {
    const LayerParams& p = state.layers[l];
    const LayerGeometry& g = geometry[l];
    if (p.weights.size() != g.weight_count || p.bias.size() != g.bias_count ||
        p.m_weights.size() != g.weight_count ||
        p.v_weights.size() != g.weight_count ||
        p.m_bias.size() != g.bias_count || p.v_bias.size() != g.bias_count) {
      throw ConfigError("state arrays of layer " + std::to_string(l) +
                        " do not match the network spec");
    }
  }
}

Model::Model(NetworkSpec spec)
    : spec_(std::move(spec)), geometry_(resolve(spec_)) {
  const std::size_t n = geometry_.size();
  weights_.resize(n);
  bias_.resize(n);
  acts_.resize(n);
  pooled_.resize(n);
  argmax_.resize(n);
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const auto& g : geometry_) total += g.weight_count + g.bias_count;
  return total;
}

void Model::prepare(const NetworkState& state, std::size_t batch) {
  if (state.layers.size() != geometry_.size()) {
    throw ConfigError("network state does not match the model");
  }
  for (std::size_t l = 0; l < geometry_.size(); ++l) {
    const LayerGeometry& g = geometry_[l];
    const LayerParams& p = state.layers[l];
    if (p.weights.size() != g.weight_count || p.bias.size() != g.bias_count) {
      throw ConfigError("parameter shapes of layer " + std::to_string(l) +
                        " do not match the model");
    }
    weights_[l].assign(p.weights.begin(), p.weights.end());
    bias_[l].assign(p.bias.begin(), p.bias.end());
    acts_[l].resize(batch * g.out.size());
    if (g.pool) {
      pooled_[l].resize(batch * g.pooled.size());
      argmax_[l].resize(batch * g.pooled.size());
    }
  }
}

namespace {

void dense_forward(const double* x, std::size_t batch, std::size_t in,
                   std::size_t out, const double* w, const double* b,
                   double* y) {
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xn = x + n * in;
    double* yn = y + n * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = w + o * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xn[i];
      yn[o] = acc + b[o];
    }
  }
}

// Valid output range [lo, hi) along one axis for a kernel offset.
inline void conv_range(int size, int offset, int& lo, int& hi) {
  lo = std::max(0, -offset);
  hi = std::min(size, size - offset);
}

void conv_forward(const double* x, std::size_t batch, const LayerGeometry& g,
                  const double* w, const double* b, double* y) {
  const int ci = g.in.channels, co = g.out.channels;
  const int h = g.in.height, wd = g.in.width, k = g.kernel, pad = k / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * wd;
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xn = x + n * ci * plane;
    double* yn = y + n * co * plane;
    for (int oc = 0; oc < co; ++oc) {
      double* yo = yn + oc * plane;
      std::fill(yo, yo + plane, b[oc]);
      for (int ic = 0; ic < ci; ++ic) {
        const double* xi = xn + ic * plane;
        for (int ky = 0; ky < k; ++ky) {
          int y0, y1;
          conv_range(h, ky - pad, y0, y1);
          for (int kx = 0; kx < k; ++kx) {
            int x0, x1;
            conv_range(wd, kx - pad, x0, x1);
            const double wv = w[((oc * ci + ic) * k + ky) * k + kx];
            for (int yy = y0; yy < y1; ++yy) {
              double* yrow = yo + yy * wd;
              const double* xrow = xi + (yy + ky - pad) * wd + (kx - pad);
              for (int xx = x0; xx < x1; ++xx) yrow[xx] += wv * xrow[xx];
            }
          }
        }
      }
    }
  }
}

void conv_backward(const double* x, const double* dy, std::size_t batch,
                   const LayerGeometry& g, const double* w, double* dw,
                   double* db, double* dx) {
  const int ci = g.in.channels, co = g.out.channels;
  const int h = g.in.height, wd = g.in.width, k = g.kernel, pad = k / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * wd;
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xn = x + n * ci * plane;
    const double* dyn = dy + n * co * plane;
    double* dxn = dx ? dx + n * ci * plane : nullptr;
    for (int oc = 0; oc < co; ++oc) {
      const double* dyo = dyn + oc * plane;
      double bsum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) bsum += dyo[i];
      db[oc] += bsum;
      for (int ic = 0; ic < ci; ++ic) {
        const double* xi = xn + ic * plane;
        double* dxi = dxn ? dxn + ic * plane : nullptr;
        for (int ky = 0; ky < k; ++ky) {
          int y0, y1;
          conv_range(h, ky - pad, y0, y1);
          for (int kx = 0; kx < k; ++kx) {
            int x0, x1;
            conv_range(wd, kx - pad, x0, x1);
            const std::size_t widx = ((oc * ci + ic) * k + ky) * k + kx;
            const double wv = w[widx];
            double acc = 0.0;
            for (int yy = y0; yy < y1; ++yy) {
              const double* drow = dyo + yy * wd;
              const std::size_t off = (yy + ky - pad) * wd + (kx - pad);
              const double* xrow = xi + off;
              for (int xx = x0; xx < x1; ++xx) acc += drow[xx] * xrow[xx];
              if (dxi) {
                double* dxrow = dxi + off;
                for (int xx = x0; xx < x1; ++xx) dxrow[xx] += wv * drow[xx];
              }
            }
            dw[widx] += acc;
          }
        }
      }
    }
  }
}

void pool_forward(const double* a, std::size_t batch, const LayerGeometry& g,
                  double* p, std::uint32_t* arg) {
  const int c = g.out.channels, h = g.out.height, w = g.out.width;
  const int ph = g.pooled.height, pw = g.pooled.width;
  for (std::size_t n = 0; n < batch; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t in_base = (n * c + ch) * static_cast<std::size_t>(h) * w;
      const std::size_t out_base = (n * c + ch) * static_cast<std::size_t>(ph) * pw;
      for (int yy = 0; yy < ph; ++yy) {
        for (int xx = 0; xx < pw; ++xx) {
          std::size_t best = in_base + (2 * yy) * w + 2 * xx;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx = in_base + (2 * yy + dy) * w + 2 * xx + dx;
              if (a[idx] > a[best]) best = idx;
            }
          }
          p[out_base + yy * pw + xx] = a[best];
          arg[out_base + yy * pw + xx] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
}

}  // namespace

void Model::forward(std::span<const float> inputs, std::size_t batch) {
  input_.assign(inputs.begin(), inputs.end());
  const double* x = input_.data();
  for (std::size_t l = 0; l < geometry_.size(); ++l) {
    const LayerGeometry& g = geometry_[l];
    double* y = acts_[l].data();
    if (g.kind == LayerKind::dense) {
      dense_forward(x, batch, g.in.size(), g.out.size(), weights_[l].data(),
                    bias_[l].data(), y);
    } else {
      conv_forward(x, batch, g, weights_[l].data(), bias_[l].data(), y);
    }
    if (g.relu) {
      for (double& v : acts_[l]) v = v > 0.0 ? v : 0.0;
    }
    if (g.pool) {
      pool_forward(y, batch, g, pooled_[l].data(), argmax_[l].data());
      x = pooled_[l].data();
    } else {
      x = y;
    }
  }
}

LossStats Model::loss_from_logits(std::span<const int> labels,
                                  std::size_t batch,
                                  std::vector<double>* dlogits) const {
  const std::size_t last = geometry_.size() - 1;
  const double* z = geometry_[last].pool ? pooled_[last].data()
                                         : acts_[last].data();
  const std::size_t c = static_cast<std::size_t>(spec_.num_classes);
  double total = 0.0;
  std::size_t correct = 0;
  if (dlogits) dlogits->assign(batch * c, 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    const double* zn = z + n * c;
    const int y = labels[n];
    std::size_t arg = 0;
    double mx = zn[0];
    for (std::size_t j = 1; j < c; ++j) {
      if (zn[j] > mx) {
        mx = zn[j];
        arg = j;
      }
    }
    if (arg == static_cast<std::size_t>(y)) ++correct;
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(zn[j] - mx);
    const double lse = mx + std::log(sum);
    total += lse - zn[y];
    if (dlogits) {
      double* dn = dlogits->data() + n * c;
      for (std::size_t j = 0; j < c; ++j) {
        dn[j] = std::exp(zn[j] - lse) * inv_b;
      }
      dn[y] -= inv_b;
    }
  }
  LossStats stats;
  stats.loss = total * inv_b;
  stats.accuracy = static_cast<double>(correct) * inv_b;
  stats.is_finite = std::isfinite(stats.loss);
  return stats;
}

LossStats Model::forward_backward(const NetworkState& state,
                                  const BatchView& batch, Gradients& grads) {
  const std::size_t b = batch.labels.size();
  if (b == 0) throw ConfigError("empty batch");
  if (batch.inputs.size() != b * spec_.input.size()) {
    throw ConfigError("batch inputs do not match the network input shape");
  }
  prepare(state, b);
  grads.resize(geometry_.size());
  for (std::size_t l = 0; l < geometry_.size(); ++l) {
    grads[l].weights.assign(geometry_[l].weight_count, 0.0);
    grads[l].bias.assign(geometry_[l].bias_count, 0.0);
  }
  forward(batch.inputs, b);
  LossStats stats = loss_from_logits(batch.labels, b, &delta_);
  if (!stats.is_finite) return stats;

  std::vector<double> scatter;
  for (std::size_t l = geometry_.size(); l-- > 0;) {
    const LayerGeometry& g = geometry_[l];
    // delta_ holds d(loss)/d(layer output) after pooling.
    std::vector<double>* dz = &delta_;
    if (g.pool) {
      scatter.assign(b * g.out.size(), 0.0);
      const auto& arg = argmax_[l];
      for (std::size_t i = 0; i < delta_.size(); ++i) {
        scatter[arg[i]] += delta_[i];
      }
      dz = &scatter;
    }
    if (g.relu) {
      const auto& a = acts_[l];
      for (std::size_t i = 0; i < dz->size(); ++i) {
        if (a[i] <= 0.0) (*dz)[i] = 0.0;
      }
    }
    const double* x = l == 0 ? input_.data()
                             : (geometry_[l - 1].pool ? pooled_[l - 1].data()
                                                      : acts_[l - 1].data());
    double* dx = nullptr;
    if (l > 0) {
      delta_prev_.assign(b * g.in.size(), 0.0);
      dx = delta_prev_.data();
    }
    double* dw = grads[l].weights.data();
    double* db = grads[l].bias.data();
    const double* w = weights_[l].data();
    if (g.kind == LayerKind::dense) {
      const std::size_t in = g.in.size(), out = g.out.size();
      for (std::size_t n = 0; n < b; ++n) {
        const double* xn = x + n * in;
        const double* dn = dz->data() + n * out;
        double* dxn = dx ? dx + n * in : nullptr;
        for (std::size_t o = 0; o < out; ++o) {
          const double d = dn[o];
          if (d == 0.0) continue;
          db[o] += d;
          double* dwo = dw + o * in;
          for (std::size_t i = 0; i < in; ++i) dwo[i] += d * xn[i];
          if (dxn) {
            const double* wo = w + o * in;
            for (std::size_t i = 0; i < in; ++i) dxn[i] += d * wo[i];
          }
        }
      }
    } else {
      conv_backward(x, dz->data(), b, g, w, dw, db, dx);
    }
    if (l > 0) std::swap(delta_, delta_prev_);
  }

  for (const auto& lg : grads) {
    for (double v : lg.weights) {
      if (!std::isfinite(v)) stats.is_finite = false;
    }
  }
  if (!stats.is_finite) {
    for (auto& lg : grads) {
      std::fill(lg.weights.begin(), lg.weights.end(), 0.0);
      std::fill(lg.bias.begin(), lg.bias.end(), 0.0);
    }
  }
  return stats;
}

LossStats Model::evaluate(const NetworkState& state, const BatchView& data) {
  const std::size_t total = data.labels.size();
  if (total == 0) throw ConfigError("cannot evaluate on an empty split");
  const std::size_t width = spec_.input.size();
  if (data.inputs.size() != total * width) {
    throw ConfigError("split inputs do not match the network input shape");
  }
  constexpr std::size_t kChunk = 256;
  double loss_sum = 0.0;
  double correct = 0.0;
  for (std::size_t first = 0; first < total; first += kChunk) {
    const std::size_t n = std::min(kChunk, total - first);
    prepare(state, n);
    forward(data.inputs.subspan(first * width, n * width), n);
    const LossStats s = loss_from_logits(data.labels.subspan(first, n), n,
                                         nullptr);
    loss_sum += s.loss * static_cast<double>(n);
    correct += s.accuracy * static_cast<double>(n);
  }
  LossStats stats;
  stats.loss = loss_sum / static_cast<double>(total);
  stats.accuracy = correct / static_cast<double>(total);
  stats.is_finite = std::isfinite(stats.loss);
  return stats;
}

std::vector<double> Model::logits(const NetworkState& state,
                                  const BatchView& data) {
  const std::size_t total = data.labels.size();
  prepare(state, total);
  forward(data.inputs, total);
  const std::size_t last = geometry_.size() - 1;
  const auto& z = geometry_[last].pool ? pooled_[last] : acts_[last];
  return {z.begin(), z.begin() + total * spec_.num_classes};
}

std::pair<LossStats, Gradients> forward_backward(const NetworkSpec& spec,
                                                 const NetworkState& state,
                                                 const BatchView& batch) {
  Model model(spec);
  Gradients grads;
  const LossStats stats = model.forward_backward(state, batch, grads);
  return {stats, std::move(grads)};
}

LossStats evaluate(const NetworkSpec& spec, const NetworkState& state,
                   const Split& split) {
  if (split.empty()) throw ConfigError("cannot evaluate on an empty split");
  Model model(spec);
  return model.evaluate(state, split.view());
}

}  // namespace ganno::nn

#include "ganno/marl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ganno/errors.hpp"
#include "ganno/random.hpp"

namespace ganno::marl {

namespace {

void dense(const std::vector<double>& w, const std::vector<double>& b,
           std::span<const double> x, std::vector<double>& y) {
  const std::size_t in = x.size();
  y.resize(b.size());
  for (std::size_t o = 0; o < b.size(); ++o) {
    const double* row = w.data() + o * in;
    double s = b[o];
    for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

void relu(std::vector<double>& v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Accumulates weight/bias gradients and, when dx is non-null, input gradients.
void dense_backward(const std::vector<double>& w, std::span<const double> x,
                    std::span<const double> dy, nn::LayerGrads& g,
                    std::vector<double>* dx) {
  const std::size_t in = x.size();
  if (dx) dx->assign(in, 0.0);
  for (std::size_t o = 0; o < dy.size(); ++o) {
    const double d = dy[o];
    if (d == 0.0) continue;
    g.bias[o] += d;
    double* grow = g.weights.data() + o * in;
    const double* wrow = w.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) grow[i] += d * x[i];
    if (dx) {
      for (std::size_t i = 0; i < in; ++i) (*dx)[i] += d * wrow[i];
    }
  }
}

}  // namespace

void PolicyConfig::validate() const {
  if (obs_dim < 1) throw ConfigError("policy obs_dim must be >= 1");
  if (recurrent < 1) throw ConfigError("policy recurrent size must be >= 1");
  if (post_recurrent < 0) throw ConfigError("policy post_recurrent must be >= 0");
  if (num_actions < 2) throw ConfigError("policy needs >= 2 actions");
  for (int h : actor_hidden) {
    if (h < 1) throw ConfigError("actor hidden sizes must be >= 1");
  }
  for (int h : critic_hidden) {
    if (h < 1) throw ConfigError("critic hidden sizes must be >= 1");
  }
  if (!(head_init_scale >= 0.0)) throw ConfigError("head_init_scale must be >= 0");
}

PolicyLayout::PolicyLayout(const PolicyConfig& cfg) {
  int in = cfg.obs_dim;
  auto add = [&](int out, int from) {
    shapes.push_back({out, from});
    return static_cast<int>(shapes.size()) - 1;
  };
  for (int h : cfg.actor_hidden) {
    actor_mlp.push_back(add(h, in));
    in = h;
  }
  gru_x = add(3 * cfg.recurrent, in);
  gru_h = add(3 * cfg.recurrent, cfg.recurrent);
  in = cfg.recurrent;
  if (cfg.post_recurrent > 0) {
    post = add(cfg.post_recurrent, in);
    in = cfg.post_recurrent;
  }
  head = add(cfg.num_actions, in);
  in = cfg.obs_dim;
  for (int h : cfg.critic_hidden) {
    critic_mlp.push_back(add(h, in));
    in = h;
  }
  value = add(1, in);
}

PolicyParams init_policy(const PolicyConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const PolicyLayout layout(cfg);
  Rng rng(seed);
  PolicyParams p;
  p.config = cfg;
  for (int l = 0; l < static_cast<int>(layout.shapes.size()); ++l) {
    const auto [out, in] = layout.shapes[static_cast<std::size_t>(l)];
    double limit = std::sqrt(6.0 / in);  // relu layers
    if (l == layout.gru_x || l == layout.gru_h) {
      limit = 1.0 / std::sqrt(static_cast<double>(cfg.recurrent));
    } else if (l == layout.head) {
      limit = cfg.head_init_scale * std::sqrt(6.0 / (in + out));
    } else if (l == layout.value) {
      limit = std::sqrt(6.0 / (in + out));
    }
    nn::LayerParams lp;
    const auto n = static_cast<std::size_t>(out) * static_cast<std::size_t>(in);
    lp.weights.resize(n);
    for (float& w : lp.weights) w = static_cast<float>(rng.uniform(-limit, limit));
    lp.bias.assign(static_cast<std::size_t>(out), 0.0f);
    lp.m_weights.assign(n, 0.0f);
    lp.v_weights.assign(n, 0.0f);
    lp.m_bias.assign(static_cast<std::size_t>(out), 0.0f);
    lp.v_bias.assign(static_cast<std::size_t>(out), 0.0f);
    p.state.layers.push_back(std::move(lp));
  }
  return p;
}

void check_policy(const PolicyParams& params) {
  params.config.validate();
  const PolicyLayout layout(params.config);
  if (params.state.layers.size() != layout.shapes.size()) {
    throw ContractViolation("policy layer count does not match its config");
  }
  for (std::size_t l = 0; l < layout.shapes.size(); ++l) {
    const auto& lp = params.state.layers[l];
    const auto [out, in] = layout.shapes[l];
    if (lp.weights.size() != static_cast<std::size_t>(out) * in ||
        lp.bias.size() != static_cast<std::size_t>(out) ||
        lp.m_weights.size() != lp.weights.size() ||
        lp.v_weights.size() != lp.weights.size() ||
        lp.m_bias.size() != lp.bias.size() || lp.v_bias.size() != lp.bias.size()) {
      throw ContractViolation("policy layer " + std::to_string(l) +
                              " does not match its config");
    }
  }
}

std::size_t parameter_count(const PolicyParams& params) {
  std::size_t n = 0;
  for (const auto& l : params.state.layers) n += l.weights.size() + l.bias.size();
  return n;
}

PolicyNet::PolicyNet(const PolicyParams& params)
    : cfg_(params.config), layout_(params.config) {
  check_policy(params);
  for (const auto& l : params.state.layers) {
    w_.emplace_back(l.weights.begin(), l.weights.end());
    b_.emplace_back(l.bias.begin(), l.bias.end());
  }
}

nn::Gradients PolicyNet::zero_gradients() const {
  nn::Gradients g(w_.size());
  for (std::size_t l = 0; l < w_.size(); ++l) {
    g[l].weights.assign(w_[l].size(), 0.0);
    g[l].bias.assign(b_[l].size(), 0.0);
  }
  return g;
}

void PolicyNet::actor_step(std::span<const double> obs,
                           std::span<const double> hidden,
                           std::vector<double>& logits, Hidden& next) const {
  if (static_cast<int>(obs.size()) != cfg_.obs_dim) {
    throw ContractViolation("observation width " + std::to_string(obs.size()) +
                            " does not match the policy (" +
                            std::to_string(cfg_.obs_dim) + ")");
  }
  ActorTape tape;
  const std::uint8_t no_reset = 0;
  actor_forward(obs, 1, hidden, std::span(&no_reset, 1), tape);
  logits = tape.logits[0];
  next = tape.h_out[0];
}

void PolicyNet::actor_forward(std::span<const double> obs, std::size_t steps,
                              std::span<const double> h0,
                              std::span<const std::uint8_t> resets,
                              ActorTape& tape) const {
  const auto d = static_cast<std::size_t>(cfg_.obs_dim);
  const auto H = static_cast<std::size_t>(cfg_.recurrent);
  if (obs.size() != steps * d || h0.size() != H || resets.size() != steps) {
    throw ContractViolation("actor input dimensions do not match the policy");
  }
  tape.mlp.assign(steps, {});
  tape.h_in.assign(steps, {});
  tape.r.assign(steps, {});
  tape.z.assign(steps, {});
  tape.n.assign(steps, {});
  tape.hn.assign(steps, {});
  tape.h_out.assign(steps, {});
  tape.post.assign(steps, {});
  tape.logits.assign(steps, {});

  Hidden h(h0.begin(), h0.end());
  std::vector<double> gx, gh;
  for (std::size_t k = 0; k < steps; ++k) {
    if (resets[k]) std::fill(h.begin(), h.end(), 0.0);
    std::span<const double> x = obs.subspan(k * d, d);
    auto& acts = tape.mlp[k];
    acts.resize(layout_.actor_mlp.size());
    for (std::size_t j = 0; j < layout_.actor_mlp.size(); ++j) {
      const int l = layout_.actor_mlp[j];
      dense(w_[l], b_[l], x, acts[j]);
      relu(acts[j]);
      x = acts[j];
    }
    dense(w_[layout_.gru_x], b_[layout_.gru_x], x, gx);
    dense(w_[layout_.gru_h], b_[layout_.gru_h], h, gh);
    auto& r = tape.r[k];
    auto& z = tape.z[k];
    auto& n = tape.n[k];
    auto& hn = tape.hn[k];
    r.resize(H);
    z.resize(H);
    n.resize(H);
    hn.resize(H);
    tape.h_in[k] = h;
    for (std::size_t i = 0; i < H; ++i) {
      r[i] = sigmoid(gx[i] + gh[i]);
      z[i] = sigmoid(gx[H + i] + gh[H + i]);
      hn[i] = gh[2 * H + i];
      n[i] = std::tanh(gx[2 * H + i] + r[i] * hn[i]);
      h[i] = (1.0 - z[i]) * n[i] + z[i] * h[i];
    }
    tape.h_out[k] = h;
    std::span<const double> top = tape.h_out[k];
    if (layout_.post >= 0) {
      dense(w_[layout_.post], b_[layout_.post], top, tape.post[k]);
      relu(tape.post[k]);
      top = tape.post[k];
    }
    dense(w_[layout_.head], b_[layout_.head], top, tape.logits[k]);
  }
}

void PolicyNet::actor_backward(std::span<const double> obs, const ActorTape& tape,
                               std::span<const std::uint8_t> resets,
                               std::span<const double> dlogits,
                               nn::Gradients& grads) const {
  const auto d = static_cast<std::size_t>(cfg_.obs_dim);
  const auto H = static_cast<std::size_t>(cfg_.recurrent);
  const auto A = static_cast<std::size_t>(cfg_.num_actions);
  const std::size_t steps = tape.logits.size();
  if (dlogits.size() != steps * A) {
    throw ContractViolation("dlogits size does not match the tape");
  }
  Hidden carry(H, 0.0);
  std::vector<double> dtop, dpost, dh(H), dgx(3 * H), dgh(3 * H), dx, dprev;
  for (std::size_t k = steps; k-- > 0;) {
    std::span<const double> dl = dlogits.subspan(k * A, A);
    std::span<const double> top =
        layout_.post >= 0 ? std::span<const double>(tape.post[k]) : tape.h_out[k];
    dense_backward(w_[layout_.head], top, dl, grads[layout_.head], &dtop);
    if (layout_.post >= 0) {
      dpost = dtop;
      for (std::size_t i = 0; i < dpost.size(); ++i) {
        if (tape.post[k][i] <= 0.0) dpost[i] = 0.0;
      }
      dense_backward(w_[layout_.post], tape.h_out[k], dpost, grads[layout_.post], &dtop);
    }
    for (std::size_t i = 0; i < H; ++i) dh[i] = dtop[i] + carry[i];

    const auto& r = tape.r[k];
    const auto& z = tape.z[k];
    const auto& n = tape.n[k];
    const auto& hn = tape.hn[k];
    const auto& hp = tape.h_in[k];
    std::vector<double> dh_prev(H);
    for (std::size_t i = 0; i < H; ++i) {
      const double dn = dh[i] * (1.0 - z[i]);
      const double dz = dh[i] * (hp[i] - n[i]);
      dh_prev[i] = dh[i] * z[i];
      const double dn_pre = dn * (1.0 - n[i] * n[i]);
      const double dr = dn_pre * hn[i];
      const double dz_pre = dz * z[i] * (1.0 - z[i]);
      const double dr_pre = dr * r[i] * (1.0 - r[i]);
      dgx[i] = dr_pre;
      dgx[H + i] = dz_pre;
      dgx[2 * H + i] = dn_pre;
      dgh[i] = dr_pre;
      dgh[H + i] = dz_pre;
      dgh[2 * H + i] = dn_pre * r[i];
    }
    const std::span<const double> x_in =
        layout_.actor_mlp.empty() ? obs.subspan(k * d, d)
                                  : std::span<const double>(tape.mlp[k].back());
    dense_backward(w_[layout_.gru_x], x_in, dgx, grads[layout_.gru_x], &dx);
    dense_backward(w_[layout_.gru_h], hp, dgh, grads[layout_.gru_h], &dprev);
    for (std::size_t i = 0; i < H; ++i) carry[i] = resets[k] ? 0.0 : dh_prev[i] + dprev[i];

    for (std::size_t j = layout_.actor_mlp.size(); j-- > 0;) {
      const auto& a = tape.mlp[k][j];
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] <= 0.0) dx[i] = 0.0;
      }
      const std::span<const double> in =
          j == 0 ? obs.subspan(k * d, d) : std::span<const double>(tape.mlp[k][j - 1]);
      std::vector<double> dnext;
      dense_backward(w_[layout_.actor_mlp[j]], in, dx, grads[layout_.actor_mlp[j]],
                     j == 0 ? nullptr : &dnext);
      dx = std::move(dnext);
    }
  }
}

double PolicyNet::critic_forward(std::span<const double> obs, CriticTape& tape) const {
  if (static_cast<int>(obs.size()) != cfg_.obs_dim) {
    throw ContractViolation("observation width does not match the critic");
  }
  tape.acts.resize(layout_.critic_mlp.size());
  std::span<const double> x = obs;
  for (std::size_t j = 0; j < layout_.critic_mlp.size(); ++j) {
    const int l = layout_.critic_mlp[j];
    dense(w_[l], b_[l], x, tape.acts[j]);
    relu(tape.acts[j]);
    x = tape.acts[j];
  }
  std::vector<double> v;
  dense(w_[layout_.value], b_[layout_.value], x, v);
  tape.value = v[0];
  return tape.value;
}

void PolicyNet::critic_backward(std::span<const double> obs, const CriticTape& tape,
                                double dvalue, nn::Gradients& grads) const {
  const std::size_t m = layout_.critic_mlp.size();
  std::span<const double> top = m == 0 ? obs : std::span<const double>(tape.acts[m - 1]);
  const double dv[1] = {dvalue};
  std::vector<double> dx;
  dense_backward(w_[layout_.value], top, dv, grads[layout_.value], m == 0 ? nullptr : &dx);
  for (std::size_t j = m; j-- > 0;) {
    const auto& a = tape.acts[j];
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] <= 0.0) dx[i] = 0.0;
    }
    const std::span<const double> in =
        j == 0 ? obs : std::span<const double>(tape.acts[j - 1]);
    std::vector<double> dnext;
    dense_backward(w_[layout_.critic_mlp[j]], in, dx, grads[layout_.critic_mlp[j]],
                   j == 0 ? nullptr : &dnext);
    dx = std::move(dnext);
  }
}

double PolicyNet::value(std::span<const double> obs) const {
  CriticTape tape;
  return critic_forward(obs, tape);
}

double log_prob(std::span<const double> logits, int a) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double x : logits) s += std::exp(x - mx);
  return logits[static_cast<std::size_t>(a)] - mx - std::log(s);
}

double entropy(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double x : logits) s += std::exp(x - mx);
  const double log_s = std::log(s);
  double h = 0.0;
  for (double x : logits) {
    const double lp = x - mx - log_s;
    const double p = std::exp(lp);
    if (p > 0.0) h -= p * lp;
  }
  return h;
}

}  // namespace ganno::marl

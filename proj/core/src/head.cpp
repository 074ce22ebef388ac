#include "octopus/head.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "octopus/errors.hpp"
#include "octopus/head_reference.hpp"
#include "octopus/rng.hpp"

namespace octopus {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;

struct LayerOffsets {
  std::size_t ln1g, ln1b, wq, wk, wv, wo, ln2g, ln2b, w1, b1, w2, b2;
};

struct Offsets {
  std::size_t eye = 0, pos = 0;
  std::vector<LayerOffsets> layers;
  std::size_t m1 = 0, mb1 = 0, m2 = 0, mb2 = 0;
};

Offsets offsets_of(const std::vector<ParamTensor>& layout, std::size_t n_layers) {
  // Relies on the canonical order produced by param_layout.
  Offsets off;
  std::size_t i = 0;
  off.eye = layout[i++].offset;
  off.pos = layout[i++].offset;
  for (std::size_t l = 0; l < n_layers; ++l) {
    LayerOffsets lo{};
    lo.ln1g = layout[i++].offset;
    lo.ln1b = layout[i++].offset;
    lo.wq = layout[i++].offset;
    lo.wk = layout[i++].offset;
    lo.wv = layout[i++].offset;
    lo.wo = layout[i++].offset;
    lo.ln2g = layout[i++].offset;
    lo.ln2b = layout[i++].offset;
    lo.w1 = layout[i++].offset;
    lo.b1 = layout[i++].offset;
    lo.w2 = layout[i++].offset;
    lo.b2 = layout[i++].offset;
    off.layers.push_back(lo);
  }
  off.m1 = layout[i++].offset;
  off.mb1 = layout[i++].offset;
  off.m2 = layout[i++].offset;
  off.mb2 = layout[i++].offset;
  return off;
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double t = std::tanh(c * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

// out[i][o] = sum_c in[i][c] * W[o][c] (+ b[o]) for the first `rows` rows.
Matrix linear(const Matrix& in, std::size_t rows, const double* w, const double* b,
              std::size_t out_dim) {
  const std::size_t in_dim = in.cols();
  Matrix out(rows, out_dim);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = in.row(i).data();
    double* y = &out(i, 0);
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wr = w + o * in_dim;
      double s = b ? b[o] : 0.0;
      for (std::size_t c = 0; c < in_dim; ++c) s += wr[c] * x[c];
      y[o] = s;
    }
  }
  return out;
}

// Accumulates dW[o][c] += sum_i dy[i][o] in[i][c], db[o] += sum_i dy[i][o],
// and (optionally) dx[i][c] += sum_o dy[i][o] W[o][c].
void linear_backward(const Matrix& in, const Matrix& dy, const double* w, double* dw,
                     double* db, Matrix* dx) {
  const std::size_t rows = dy.rows();
  const std::size_t out_dim = dy.cols();
  const std::size_t in_dim = in.cols();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = in.row(i).data();
    const double* g = dy.row(i).data();
    double* gx = dx ? &(*dx)(i, 0) : nullptr;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double go = g[o];
      if (go == 0.0) continue;
      double* dwr = dw + o * in_dim;
      const double* wr = w + o * in_dim;
      for (std::size_t c = 0; c < in_dim; ++c) dwr[c] += go * x[c];
      if (db) db[o] += go;
      if (gx) {
        for (std::size_t c = 0; c < in_dim; ++c) gx[c] += go * wr[c];
      }
    }
  }
}

void layer_norm(const Matrix& x, std::size_t rows, const double* gamma, const double* beta,
                Matrix& hat, RealVector& rstd, Matrix& out) {
  const std::size_t d = x.cols();
  hat = Matrix(rows, d);
  out = Matrix(rows, d);
  rstd.assign(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += x(i, c);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (x(i, c) - mu) * (x(i, c) - mu);
    var /= static_cast<double>(d);
    const double r = 1.0 / std::sqrt(var + kLnEps);
    rstd[i] = r;
    for (std::size_t c = 0; c < d; ++c) {
      hat(i, c) = (x(i, c) - mu) * r;
      out(i, c) = hat(i, c) * gamma[c] + beta[c];
    }
  }
}

// dx += LN backward of dout.
void layer_norm_backward(const Matrix& hat, const RealVector& rstd, const Matrix& dout,
                         const double* gamma, double* dgamma, double* dbeta, Matrix& dx) {
  const std::size_t d = hat.cols();
  RealVector dhat(d);
  for (std::size_t i = 0; i < dout.rows(); ++i) {
    double mean_dhat = 0.0;
    double mean_dhat_hat = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double g = dout(i, c);
      dgamma[c] += g * hat(i, c);
      dbeta[c] += g;
      dhat[c] = g * gamma[c];
      mean_dhat += dhat[c];
      mean_dhat_hat += dhat[c] * hat(i, c);
    }
    mean_dhat /= static_cast<double>(d);
    mean_dhat_hat /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) {
      dx(i, c) += rstd[i] * (dhat[c] - mean_dhat - hat(i, c) * mean_dhat_hat);
    }
  }
}

void backward_impl(const HeadParams& params, const ForwardTrace& trace,
                   std::span<const double> d_logits, std::span<double> grad, Matrix* d_input) {
  if (trace.params_id != static_cast<const void*>(&params) ||
      trace.generation != params.generation()) {
    throw ContractViolation("head_backward: trace is stale (params changed since forward)");
  }
  const HeadConfig& cfg = params.config();
  if (d_logits.size() != cfg.actions) {
    throw std::invalid_argument("head_backward: d_logits must have one entry per action");
  }
  if (grad.size() != cfg.param_count()) {
    throw std::invalid_argument("head_backward: gradient buffer has the wrong size");
  }
  const Offsets off = offsets_of(params.layout(), cfg.layers);
  const double* p = params.flat().data();
  double* g = grad.data();
  const std::size_t d = cfg.d;
  const std::size_t hid = cfg.mlp_hidden;

  // MLP head.
  RealVector da1(hid, 0.0);
  for (std::size_t k = 0; k < cfg.actions; ++k) {
    const double dk = d_logits[k];
    g[off.mb2 + k] += dk;
    for (std::size_t j = 0; j < hid; ++j) {
      g[off.m2 + k * hid + j] += dk * trace.a1[j];
      da1[j] += dk * p[off.m2 + k * hid + j];
    }
  }
  RealVector dh(d, 0.0);
  for (std::size_t j = 0; j < hid; ++j) {
    const double dz = da1[j] * gelu_grad(trace.z1[j]);
    g[off.mb1 + j] += dz;
    for (std::size_t c = 0; c < d; ++c) {
      g[off.m1 + j * d + c] += dz * trace.h_eye[c];
      dh[c] += dz * p[off.m1 + j * d + c];
    }
  }

  Matrix dx(trace.layers.back().out_rows, d);
  for (std::size_t c = 0; c < d; ++c) dx(0, c) = dh[c];

  const std::size_t n_heads = cfg.heads;
  const std::size_t dh_dim = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh_dim));

  for (std::size_t li = trace.layers.size(); li-- > 0;) {
    const LayerCache& c = trace.layers[li];
    const LayerOffsets& lo = off.layers[li];
    const std::size_t n = c.x_in.rows();
    const std::size_t r = c.out_rows;

    // x_out = x_mid + ffn(ln2(x_mid))
    Matrix d_mid = dx;
    Matrix dgf(r, cfg.ffn_hidden);
    linear_backward(c.gf, dx, p + lo.w2, g + lo.w2, g + lo.b2, &dgf);
    Matrix df(r, cfg.ffn_hidden);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t f = 0; f < cfg.ffn_hidden; ++f) df(i, f) = dgf(i, f) * gelu_grad(c.f(i, f));
    }
    Matrix dbn(r, d);
    linear_backward(c.bn, df, p + lo.w1, g + lo.w1, g + lo.b1, &dbn);
    layer_norm_backward(c.ln2_hat, c.ln2_rstd, dbn, p + lo.ln2g, g + lo.ln2g, g + lo.ln2b, d_mid);

    // x_mid = x_in[:r] + wo(attn(ln1(x_in)))
    Matrix d_in(n, d);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t cc = 0; cc < d; ++cc) d_in(i, cc) = d_mid(i, cc);
    }
    Matrix d_o(r, d);
    linear_backward(c.o, d_mid, p + lo.wo, g + lo.wo, nullptr, &d_o);

    Matrix dq(r, d), dk(n, d), dv(n, d);
    RealVector dp(n);
    for (std::size_t h = 0; h < n_heads; ++h) {
      const Matrix& prob = c.probs[h];
      const std::size_t base = h * dh_dim;
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t e = 0; e < dh_dim; ++e) s += d_o(i, base + e) * c.v(j, base + e);
          dp[j] = s;
          dot += prob(i, j) * s;
          for (std::size_t e = 0; e < dh_dim; ++e) dv(j, base + e) += prob(i, j) * d_o(i, base + e);
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double ds = prob(i, j) * (dp[j] - dot) * scale;
          if (ds == 0.0) continue;
          for (std::size_t e = 0; e < dh_dim; ++e) {
            dq(i, base + e) += ds * c.k(j, base + e);
            dk(j, base + e) += ds * c.q(i, base + e);
          }
        }
      }
    }
    Matrix da(n, d);
    linear_backward(c.a, dq, p + lo.wq, g + lo.wq, nullptr, &da);
    linear_backward(c.a, dk, p + lo.wk, g + lo.wk, nullptr, &da);
    linear_backward(c.a, dv, p + lo.wv, g + lo.wv, nullptr, &da);
    layer_norm_backward(c.ln1_hat, c.ln1_rstd, da, p + lo.ln1g, g + lo.ln1g, g + lo.ln1b, d_in);
    dx = std::move(d_in);
  }

  // Input: row 0 is eye, rows 1.. are H_t; all rows get E_pos.
  for (std::size_t i = 0; i < dx.rows(); ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      g[off.pos + i * d + c] += dx(i, c);
      if (i == 0) g[off.eye + c] += dx(i, c);
    }
  }
  if (d_input) {
    *d_input = Matrix(dx.rows() - 1, d);
    for (std::size_t i = 1; i < dx.rows(); ++i) {
      for (std::size_t c = 0; c < d; ++c) (*d_input)(i - 1, c) = dx(i, c);
    }
  }
}

}  // namespace

void HeadConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) {
    throw std::invalid_argument("HeadConfig: d must be a positive multiple of heads");
  }
  if (actions != static_cast<std::size_t>(kNumActions)) {
    throw std::invalid_argument("HeadConfig: actions must equal the action count (4)");
  }
  if (layers == 0 || mlp_hidden == 0 || ffn_hidden == 0 || max_len < 2) {
    throw std::invalid_argument("HeadConfig: sizes must be positive");
  }
}

std::size_t HeadConfig::param_count() const {
  const std::size_t per_layer = 4 * d + 4 * d * d + 2 * ffn_hidden * d + ffn_hidden + d;
  return d + max_len * d + layers * per_layer + mlp_hidden * d + mlp_hidden +
         actions * mlp_hidden + actions;
}

std::vector<ParamTensor> param_layout(const HeadConfig& config) {
  config.validate();
  std::vector<ParamTensor> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    out.push_back({std::move(name), rows, cols, offset});
    offset += rows * cols;
  };
  const std::size_t d = config.d;
  add("eye", 1, d);
  add("pos", config.max_len, d);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    add(pre + "ln1.gamma", 1, d);
    add(pre + "ln1.beta", 1, d);
    add(pre + "attn.wq", d, d);
    add(pre + "attn.wk", d, d);
    add(pre + "attn.wv", d, d);
    add(pre + "attn.wo", d, d);
    add(pre + "ln2.gamma", 1, d);
    add(pre + "ln2.beta", 1, d);
    add(pre + "ffn.w1", config.ffn_hidden, d);
    add(pre + "ffn.b1", 1, config.ffn_hidden);
    add(pre + "ffn.w2", d, config.ffn_hidden);
    add(pre + "ffn.b2", 1, d);
  }
  add("mlp.w1", config.mlp_hidden, d);
  add("mlp.b1", 1, config.mlp_hidden);
  add("mlp.w2", config.actions, config.mlp_hidden);
  add("mlp.b2", 1, config.actions);
  return out;
}

HeadParams::HeadParams(HeadConfig config)
    : config_(config), layout_(param_layout(config)), values_(config.param_count(), 0.0) {}

std::span<double> HeadParams::mutable_flat() noexcept {
  ++generation_;
  return values_;
}

const ParamTensor& HeadParams::tensor(std::string_view name) const {
  for (const auto& t : layout_) {
    if (t.name == name) return t;
  }
  throw std::invalid_argument("HeadParams: no tensor named '" + std::string(name) + "'");
}

std::span<const double> HeadParams::view(std::string_view name) const {
  const ParamTensor& t = tensor(name);
  return std::span<const double>(values_).subspan(t.offset, t.size());
}

std::span<double> HeadParams::mutable_view(std::string_view name) {
  const ParamTensor& t = tensor(name);
  ++generation_;
  return std::span<double>(values_).subspan(t.offset, t.size());
}

HeadParams init_head(const HeadConfig& config, std::uint64_t seed) {
  HeadParams params(config);
  const Rng root(seed, "head-init");
  auto flat = params.mutable_flat();
  for (std::size_t ti = 0; ti < params.layout().size(); ++ti) {
    const ParamTensor& t = params.layout()[ti];
    auto v = flat.subspan(t.offset, t.size());
    const bool is_gain = t.name.ends_with(".gamma");
    const bool is_shift = t.name.ends_with(".beta") || t.name.ends_with(".b1") ||
                          t.name.ends_with(".b2");
    if (is_gain) {
      for (double& x : v) x = 1.0;
    } else if (is_shift) {
      for (double& x : v) x = 0.0;
    } else {
      Rng r = root.derive(ti);
      for (double& x : v) x = kInitStd * r.normal();
    }
  }
  return params;
}

ForwardTrace head_forward(const HeadParams& params, const Matrix& hidden) {
  const HeadConfig& cfg = params.config();
  const std::size_t d = cfg.d;
  if (hidden.rows() + 1 > cfg.max_len) {
    throw std::invalid_argument("head_forward: sequence of " + std::to_string(hidden.rows()) +
                                " states exceeds max_len - 1 = " +
                                std::to_string(cfg.max_len - 1));
  }
  if (hidden.rows() > 0 && hidden.cols() != d) {
    throw std::invalid_argument("head_forward: hidden states must have width d");
  }
  const Offsets off = offsets_of(params.layout(), cfg.layers);
  const double* p = params.flat().data();
  const std::size_t n = hidden.rows() + 1;

  ForwardTrace tr;
  tr.params_id = &params;
  tr.generation = params.generation();
  tr.input = hidden;

  Matrix x(n, d);
  for (std::size_t c = 0; c < d; ++c) x(0, c) = p[off.eye + c] + p[off.pos + c];
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) x(i, c) = hidden(i - 1, c) + p[off.pos + i * d + c];
  }

  const std::size_t n_heads = cfg.heads;
  const std::size_t dh_dim = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh_dim));
  RealVector scores(n);

  for (std::size_t li = 0; li < cfg.layers; ++li) {
    const LayerOffsets& lo = off.layers[li];
    LayerCache c;
    // Only the eye row feeds the classifier, so the last layer computes row 0.
    c.out_rows = li + 1 == cfg.layers ? 1 : n;
    const std::size_t r = c.out_rows;
    c.x_in = x;
    layer_norm(x, n, p + lo.ln1g, p + lo.ln1b, c.ln1_hat, c.ln1_rstd, c.a);
    c.q = linear(c.a, r, p + lo.wq, nullptr, d);
    c.k = linear(c.a, n, p + lo.wk, nullptr, d);
    c.v = linear(c.a, n, p + lo.wv, nullptr, d);
    c.o = Matrix(r, d);
    c.probs.assign(n_heads, Matrix(r, n));
    for (std::size_t h = 0; h < n_heads; ++h) {
      const std::size_t base = h * dh_dim;
      for (std::size_t i = 0; i < r; ++i) {
        double mx = -1e300;
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t e = 0; e < dh_dim; ++e) s += c.q(i, base + e) * c.k(j, base + e);
          scores[j] = s * scale;
          mx = std::max(mx, scores[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          sum += scores[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double w = scores[j] / sum;
          c.probs[h](i, j) = w;
          for (std::size_t e = 0; e < dh_dim; ++e) c.o(i, base + e) += w * c.v(j, base + e);
        }
      }
    }
    Matrix y = linear(c.o, r, p + lo.wo, nullptr, d);
    c.x_mid = Matrix(r, d);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t cc = 0; cc < d; ++cc) c.x_mid(i, cc) = x(i, cc) + y(i, cc);
    }
    layer_norm(c.x_mid, r, p + lo.ln2g, p + lo.ln2b, c.ln2_hat, c.ln2_rstd, c.bn);
    c.f = linear(c.bn, r, p + lo.w1, p + lo.b1, cfg.ffn_hidden);
    c.gf = Matrix(r, cfg.ffn_hidden);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t f = 0; f < cfg.ffn_hidden; ++f) c.gf(i, f) = gelu(c.f(i, f));
    }
    Matrix z = linear(c.gf, r, p + lo.w2, p + lo.b2, d);
    Matrix next(r, d);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t cc = 0; cc < d; ++cc) next(i, cc) = c.x_mid(i, cc) + z(i, cc);
    }
    x = std::move(next);
    tr.layers.push_back(std::move(c));
  }

  tr.h_eye.assign(x.row(0).begin(), x.row(0).end());
  tr.z1.assign(cfg.mlp_hidden, 0.0);
  tr.a1.assign(cfg.mlp_hidden, 0.0);
  for (std::size_t j = 0; j < cfg.mlp_hidden; ++j) {
    double s = p[off.mb1 + j];
    for (std::size_t c = 0; c < d; ++c) s += p[off.m1 + j * d + c] * tr.h_eye[c];
    tr.z1[j] = s;
    tr.a1[j] = gelu(s);
  }
  tr.logits.assign(cfg.actions, 0.0);
  for (std::size_t k = 0; k < cfg.actions; ++k) {
    double s = p[off.mb2 + k];
    for (std::size_t j = 0; j < cfg.mlp_hidden; ++j) {
      s += p[off.m2 + k * cfg.mlp_hidden + j] * tr.a1[j];
    }
    tr.logits[k] = s;
  }
  return tr;
}

RealVector head_logits(const HeadParams& params, const Matrix& hidden) {
  return head_forward(params, hidden).logits;
}

HeadGradient head_backward(const HeadParams& params, const ForwardTrace& trace,
                           std::span<const double> d_logits) {
  HeadGradient out;
  out.params.assign(params.config().param_count(), 0.0);
  backward_impl(params, trace, d_logits, out.params, &out.inputs);
  return out;
}

void head_backward_accumulate(const HeadParams& params, const ForwardTrace& trace,
                              std::span<const double> d_logits, std::span<double> grad) {
  backward_impl(params, trace, d_logits, grad, nullptr);
}

Action select_action(std::span<const double> h_act) {
  if (h_act.size() != static_cast<std::size_t>(kNumActions)) {
    throw std::invalid_argument("select_action: expected 4 action logits");
  }
  return static_cast<Action>(argmax(h_act));
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

GradCheckResult head_grad_check(const HeadParams& params, const Matrix& hidden,
                                std::span<const double> d_logits, double h) {
  const ForwardTrace tr = head_forward(params, hidden);
  const HeadGradient grad = head_backward(params, tr, d_logits);

  HeadParams probe = params;
  std::vector<long double> probe_ld(params.flat().begin(), params.flat().end());
  auto quick = [&](std::size_t i, double x) {
    const double orig = probe.flat()[i];
    probe.mutable_flat()[i] = x;
    const RealVector logits = head_logits(probe, hidden);
    probe.mutable_flat()[i] = orig;
    double s = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) s += d_logits[k] * logits[k];
    return s;
  };
  auto precise = [&](std::size_t i, long double x) {
    const long double orig = probe_ld[i];
    probe_ld[i] = x;
    const auto logits = reference::head_logits<long double>(params.config(), params.layout(),
                                                            probe_ld.data(), hidden);
    probe_ld[i] = orig;
    long double s = 0.0L;
    for (std::size_t k = 0; k < logits.size(); ++k) s += d_logits[k] * logits[k];
    return s;
  };
  return reference::central_difference_check(params.flat(), grad.params, h, quick, precise);
}

}  // namespace octopus

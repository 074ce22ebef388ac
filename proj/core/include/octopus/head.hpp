#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "octopus/action.hpp"
#include "octopus/tensor.hpp"

namespace octopus {

struct HeadConfig {
  std::size_t d = 32;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 64;
  std::size_t ffn_hidden = 64;
  std::size_t actions = kNumActions;
  std::size_t max_len = 64;  // includes the eye token

  void validate() const;
  /// Closed-form parameter count.
  std::size_t param_count() const;

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

/// One named tensor inside the flat parameter vector.
struct ParamTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return rows * cols; }
};

/// Canonical parameter order:
///   eye [d], pos [max_len x d],
///   per layer l: layers.l.{ln1.gamma, ln1.beta, attn.wq, attn.wk, attn.wv,
///                attn.wo, ln2.gamma, ln2.beta, ffn.w1, ffn.b1, ffn.w2, ffn.b2},
///   mlp.w1 [mlp_hidden x d], mlp.b1, mlp.w2 [actions x mlp_hidden], mlp.b2.
/// Weight matrices are (out x in) and act as y = W x.
std::vector<ParamTensor> param_layout(const HeadConfig& config);

/// Decision head parameters stored as one flat vector.
class HeadParams {
 public:
  explicit HeadParams(HeadConfig config);

  const HeadConfig& config() const noexcept { return config_; }
  const std::vector<ParamTensor>& layout() const noexcept { return layout_; }
  std::span<const double> flat() const noexcept { return values_; }
  /// Mutable access; invalidates forward traces taken before the call.
  std::span<double> mutable_flat() noexcept;
  std::uint64_t generation() const noexcept { return generation_; }

  const ParamTensor& tensor(std::string_view name) const;
  std::span<const double> view(std::string_view name) const;
  std::span<double> mutable_view(std::string_view name);

  bool same_values(const HeadParams& other) const {
    return config_ == other.config_ && values_ == other.values_;
  }

 private:
  HeadConfig config_;
  std::vector<ParamTensor> layout_;
  std::vector<double> values_;
  std::uint64_t generation_ = 0;
};

/// Weights ~ N(0, 0.02^2), layernorm gains 1, shifts and biases 0.
HeadParams init_head(const HeadConfig& config, std::uint64_t seed);

struct LayerCache {
  std::size_t out_rows = 0;  // rows carried forward (1 in the last layer)
  Matrix x_in;
  Matrix ln1_hat;
  RealVector ln1_rstd;
  Matrix a;  // ln1 output
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per attention head, out_rows x n
  Matrix o;
  Matrix x_mid;
  Matrix ln2_hat;
  RealVector ln2_rstd;
  Matrix bn;  // ln2 output
  Matrix f;   // ffn pre-activation
  Matrix gf;  // ffn activation
};

/// Everything head_backward needs. Tied to the params object and its
/// generation at forward time.
struct ForwardTrace {
  const void* params_id = nullptr;
  std::uint64_t generation = 0;
  Matrix input;  // H_t
  std::vector<LayerCache> layers;
  RealVector h_eye;
  RealVector z1;
  RealVector a1;
  RealVector logits;  // h_act
};

/// [h_eye; H'] = Transformer(concat[eye; H] + E_pos); h_act = MLP(h_eye).
/// Bidirectional attention. Throws std::invalid_argument if |H| + 1 exceeds
/// max_len or a row has the wrong width.
ForwardTrace head_forward(const HeadParams& params, const Matrix& hidden);

/// Logits only.
RealVector head_logits(const HeadParams& params, const Matrix& hidden);

struct HeadGradient {
  RealVector params;  // same layout as HeadParams::flat()
  Matrix inputs;      // d loss / d H_t
};

/// Exact reverse-mode gradient of <d_logits, h_act>. Raises
/// ContractViolation if the params changed since the forward pass.
HeadGradient head_backward(const HeadParams& params, const ForwardTrace& trace,
                           std::span<const double> d_logits);

/// Adds the parameter gradient into `grad` without materialising d/dH.
void head_backward_accumulate(const HeadParams& params, const ForwardTrace& trace,
                              std::span<const double> d_logits, std::span<double> grad);

/// argmax over action logits; ties resolve in enum order.
Action select_action(std::span<const double> h_act);

/// |a - b| / max(|a|, |b|, 1e-12)
double relative_error(double a, double b);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// head_backward against central differences of <d_logits, h_act> on every
/// parameter coordinate.
GradCheckResult head_grad_check(const HeadParams& params, const Matrix& hidden,
                                std::span<const double> d_logits, double h = 1e-5);

}  // namespace octopus

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "hdcam/ops.hpp"

namespace hdcam {

enum class MhsattenPosition { stage_end, stage_begin };

// Construction choices the published parameter counts depend on. Defaults are
// the combination that reproduces the reference totals exactly.
struct LedgerToggles {
  bool biases = true;       // conv/linear bias terms
  bool ln_affine = true;    // learnable gamma/beta on every LN
  bool layer_scale = true;  // per-channel scale on each residual branch
  bool final_ln = true;     // LN between global pooling and the classifier
  int expansion = 1;        // pointwise-GELU widening factor
  bool operator==(const LedgerToggles&) const = default;
};

// Full architectural description of one model variant.
struct ModelConfig {
  std::array<int, 3> stage_channels{24, 32, 64};
  std::array<int, 3> hdconv_counts{1, 2, 4};
  std::array<int, 3> mhsatten_counts{0, 1, 1};
  std::array<int, 3> scales{3, 4, 4};
  std::array<int, 3> heads{3, 4, 4};
  MhsattenPosition mhsatten_position = MhsattenPosition::stage_end;
  bool hierarchical = true;
  int num_classes = 17;
  int input_channels = 12;
  int window_ms = 300;  // at the 2 kHz acquisition rate
  LedgerToggles toggles;

  int64_t expected_input_length() const { return static_cast<int64_t>(window_ms) * 2; }
  bool operator==(const ModelConfig&) const = default;
};

constexpr double kLayerNormEps = 1e-5;

ModelConfig named_variant(const std::string& name);  // XXSmall | XSmall | Small
const std::vector<std::string>& variant_names();

// Returns the list of violated rules; empty means valid.
std::vector<std::string> validate_config(const ModelConfig& cfg);
void require_valid(const ModelConfig& cfg);  // throws ConfigError listing violations

struct AblationEntry {
  std::string id;
  std::string description;
  ModelConfig config;
};
// grid is one of "table4" (hierarchical on/off), "table5" (encoder-count
// grid, IDs 1..8), "table6" (stage-begin vs stage-end placement).
std::vector<AblationEntry> build_ablation_grid(const std::string& grid);

// Reference totals for configurations matching a published row.
struct ReferenceCount {
  std::string row;
  int64_t count;
  std::optional<int64_t> alternate;  // second value reported elsewhere
};
std::optional<ReferenceCount> reference_param_count(const ModelConfig& cfg);

// ---- layer parameter bundles (free-function forwards are used directly by
// the equivalence tests; HdcamModel wires them together) ----

template <typename T>
struct LinearGeluParams {
  Tensor<T> w1, b1;  // [C, e*C]
  Tensor<T> w2, b2;  // [e*C, C]; undefined when expansion == 1
};

template <typename T>
struct HdconvEncoderParams {
  std::vector<Tensor<T>> dw_weights;  // s x [K,1,C/s], or 1 x [K,1,C] non-hierarchical
  std::vector<Tensor<T>> dw_biases;
  Tensor<T> ln_gamma, ln_beta;
  LinearGeluParams<T> pw;
  Tensor<T> layer_scale;  // [C]; undefined when disabled
};

template <typename T>
struct MhaParams {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
struct MhsattenEncoderParams {
  Tensor<T> ln1_gamma, ln1_beta;
  MhaParams<T> mha;
  Tensor<T> ls1;
  Tensor<T> ln2_gamma, ln2_beta;
  LinearGeluParams<T> pw;
  Tensor<T> ls2;
};

// y_1 = DwConv_1(x_1); y_i = DwConv_i(x_i + y_{i-1}); output = concat(y_i).
// Channel groups are contiguous slices; each DwConv is stride 1 with
// symmetric padding (K odd), so lengths are preserved.
template <typename T>
Tensor<T> hierarchical_dwconv(const Tensor<T>& x, const std::vector<Tensor<T>>& weights,
                              const std::vector<Tensor<T>>& biases);

template <typename T>
Tensor<T> linear_gelu(const Tensor<T>& x, const LinearGeluParams<T>& p);

// X_out = X_in + ls .* Linear_GELU(LN(HDwConv(X_in)))
template <typename T>
Tensor<T> hdconv_encoder_forward(const Tensor<T>& x, const HdconvEncoderParams<T>& p);

// Q/K/V linear projections, per-head scaled dot-product attention, output
// projection. probs_out receives the attention weights when non-null.
template <typename T>
Tensor<T> multihead_self_attention(const Tensor<T>& x, const MhaParams<T>& p, int heads,
                                   Tensor<T>* probs_out = nullptr);

// X_out = X_in + ls2 .* Linear_GELU(LN(X_in + ls1 .* MHA(LN(X_in))))
template <typename T>
Tensor<T> mhsatten_encoder_forward(const Tensor<T>& x, const MhsattenEncoderParams<T>& p,
                                   int heads);

template <typename T>
Tensor<T> stem_forward(const Tensor<T>& x, const Tensor<T>& conv_w, const Tensor<T>& conv_b,
                       const Tensor<T>& ln_gamma, const Tensor<T>& ln_beta);

template <typename T>
Tensor<T> downsample_forward(const Tensor<T>& x, const Tensor<T>& ln_gamma,
                             const Tensor<T>& ln_beta, const Tensor<T>& conv_w,
                             const Tensor<T>& conv_b);

template <typename T>
struct ForwardTrace {
  Tensor<T> stem;
  std::array<Tensor<T>, 3> stage_input;   // stem/downsample output entering each stage
  std::array<Tensor<T>, 3> stage_output;  // after the stage's encoders
  Tensor<T> pooled;
  Tensor<T> logits;
};

struct ParamCountReport {
  std::vector<std::pair<std::string, int64_t>> per_layer;
  std::vector<std::pair<std::string, int64_t>> per_stage;  // stem, stage1..3, head
  int64_t total = 0;
};

// The instantiated parameter store plus the stage program. Parameter names
// are unique and stable across rebuilds; registration order is build order.
template <typename T>
class HdcamModel {
 public:
  explicit HdcamModel(const ModelConfig& cfg, uint64_t seed = 0);

  const ModelConfig& config() const { return cfg_; }

  // x is [L, Cin] or [B, L, Cin] with L == config().expected_input_length().
  Tensor<T> forward(const Tensor<T>& x) const;
  ForwardTrace<T> forward_trace(const Tensor<T>& x) const;

  std::vector<std::pair<std::string, Tensor<T>>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& parameters() const { return params_; }
  Tensor<T>* find_parameter(const std::string& name);
  void set_requires_grad(bool on);
  void zero_grad();

  int64_t parameter_count() const;
  ParamCountReport count_parameters() const;

 private:
  struct Encoder {
    bool is_attention = false;
    HdconvEncoderParams<T> hd;
    MhsattenEncoderParams<T> at;
  };
  struct Downsample {
    Tensor<T> ln_gamma, ln_beta, conv_w, conv_b;
  };

  Tensor<T> reg(const std::string& name, Tensor<T> t);
  void build(uint64_t seed);

  ModelConfig cfg_;
  Tensor<T> stem_w_, stem_b_, stem_g_, stem_be_;
  std::array<std::vector<Encoder>, 3> stages_;
  Downsample down2_, down3_;
  Tensor<T> head_g_, head_be_, head_w_, head_b_;
  std::vector<std::pair<std::string, Tensor<T>>> params_;
};

ParamCountReport count_parameters(const ModelConfig& cfg);

}  // namespace hdcam

#include "hdcam/model.hpp"

#include <algorithm>
#include <cmath>

namespace hdcam {

namespace {

const std::vector<std::string> kVariantNames = {"XXSmall", "XSmall", "Small"};

ModelConfig base_variant() {
  ModelConfig cfg;
  cfg.hdconv_counts = {1, 2, 4};
  cfg.mhsatten_counts = {0, 1, 1};
  return cfg;
}

}  // namespace

const std::vector<std::string>& variant_names() { return kVariantNames; }

ModelConfig named_variant(const std::string& name) {
  ModelConfig cfg = base_variant();
  if (name == "XXSmall") {
    cfg.stage_channels = {16, 24, 32};
    cfg.scales = {2, 3, 4};
    cfg.heads = {2, 3, 4};
  } else if (name == "XSmall") {
    cfg.stage_channels = {24, 32, 48};
    cfg.scales = {3, 4, 4};
    cfg.heads = {3, 4, 4};
  } else if (name == "Small") {
    cfg.stage_channels = {24, 32, 64};
    cfg.scales = {3, 4, 4};
    cfg.heads = {3, 4, 4};
  } else {
    std::string valid;
    for (const auto& v : kVariantNames) valid += (valid.empty() ? "" : ", ") + v;
    throw ConfigError("unknown variant '" + name + "' (valid: " + valid + ")");
  }
  return cfg;
}

std::vector<std::string> validate_config(const ModelConfig& cfg) {
  std::vector<std::string> v;
  auto stage = [](int i) { return "stage " + std::to_string(i + 1); };
  for (int i = 0; i < 3; ++i) {
    const int c = cfg.stage_channels[static_cast<size_t>(i)];
    const int s = cfg.scales[static_cast<size_t>(i)];
    const int h = cfg.heads[static_cast<size_t>(i)];
    const int n = cfg.hdconv_counts[static_cast<size_t>(i)];
    const int m = cfg.mhsatten_counts[static_cast<size_t>(i)];
    if (c < 1) v.push_back(stage(i) + ": channels " + std::to_string(c) + " < 1");
    if (n < 0 || m < 0) v.push_back(stage(i) + ": negative encoder count");
    if (n > 0 && cfg.hierarchical) {
      if (s < 1) {
        v.push_back(stage(i) + ": scales " + std::to_string(s) + " < 1");
      } else {
        if (s > 4) v.push_back(stage(i) + ": scales " + std::to_string(s) + " > 4");
        if (c % s != 0)
          v.push_back(stage(i) + ": channels " + std::to_string(c) +
                      " not divisible by s=" + std::to_string(s));
        else if (c / s < 8)
          v.push_back(stage(i) + ": " + std::to_string(c) + "/" + std::to_string(s) + " = " +
                      std::to_string(c / s) + " < 8 channels per branch");
      }
    }
    if (m > 0) {
      if (h < 1) {
        v.push_back(stage(i) + ": heads " + std::to_string(h) + " < 1");
      } else {
        if (h > 4) v.push_back(stage(i) + ": heads " + std::to_string(h) + " > 4");
        if (c % h != 0)
          v.push_back(stage(i) + ": channels " + std::to_string(c) +
                      " not divisible by h=" + std::to_string(h));
        else if (c / h < 8)
          v.push_back(stage(i) + ": " + std::to_string(c) + "/" + std::to_string(h) + " = " +
                      std::to_string(c / h) + " < 8 channels per head");
      }
    }
  }
  if (cfg.num_classes < 2)
    v.push_back("num_classes " + std::to_string(cfg.num_classes) + " < 2");
  if (cfg.input_channels < 1)
    v.push_back("input_channels " + std::to_string(cfg.input_channels) + " < 1");
  if (cfg.window_ms != 150 && cfg.window_ms != 200 && cfg.window_ms != 250 &&
      cfg.window_ms != 300)
    v.push_back("window_ms " + std::to_string(cfg.window_ms) + " not in {150,200,250,300}");
  if (cfg.toggles.expansion < 1)
    v.push_back("expansion " + std::to_string(cfg.toggles.expansion) + " < 1");
  return v;
}

void require_valid(const ModelConfig& cfg) {
  const auto v = validate_config(cfg);
  if (v.empty()) return;
  std::string msg = "invalid model configuration:";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ConfigError(msg);
}

std::vector<AblationEntry> build_ablation_grid(const std::string& grid) {
  std::vector<AblationEntry> out;
  if (grid == "table5") {
    struct Row {
      const char* id;
      std::array<int, 3> hd, at;
    };
    const Row rows[] = {
        {"1", {1, 3, 5}, {0, 0, 0}}, {"2", {1, 3, 4}, {0, 0, 1}},
        {"3", {1, 2, 4}, {0, 1, 1}}, {"4", {0, 2, 4}, {1, 1, 1}},
        {"5", {1, 2, 4}, {0, 0, 0}}, {"6", {1, 2, 4}, {0, 0, 1}},
        {"7", {1, 2, 4}, {0, 1, 1}}, {"8", {1, 2, 4}, {1, 1, 1}},
    };
    for (const Row& r : rows) {
      ModelConfig cfg = named_variant("Small");
      cfg.hdconv_counts = r.hd;
      cfg.mhsatten_counts = r.at;
      AblationEntry e;
      e.id = r.id;
      e.description = "HDConv=[" + std::to_string(r.hd[0]) + "," + std::to_string(r.hd[1]) +
                      "," + std::to_string(r.hd[2]) + "], MHSAtten=[" +
                      std::to_string(r.at[0]) + "," + std::to_string(r.at[1]) + "," +
                      std::to_string(r.at[2]) + "]";
      e.config = cfg;
      out.push_back(std::move(e));
    }
  } else if (grid == "table4") {
    for (const auto& name : kVariantNames) {
      AblationEntry hier{name + "-hier", name + " hierarchical", named_variant(name)};
      out.push_back(std::move(hier));
      ModelConfig flat = named_variant(name);
      flat.hierarchical = false;
      flat.scales = {1, 1, 1};
      out.push_back({name + "-nonhier", name + " non-hierarchical", flat});
    }
  } else if (grid == "table6") {
    for (const auto& name : kVariantNames) {
      ModelConfig begin = named_variant(name);
      begin.mhsatten_position = MhsattenPosition::stage_begin;
      out.push_back({name + "-begin", name + " attention first in stage", begin});
      out.push_back({name + "-end", name + " attention last in stage", named_variant(name)});
    }
  } else {
    throw ConfigError("unknown ablation grid '" + grid + "' (valid: table4, table5, table6)");
  }
  for (const auto& e : out) require_valid(e.config);
  return out;
}

std::optional<ReferenceCount> reference_param_count(const ModelConfig& cfg) {
  // Published rows assume the default construction toggles, 12 input
  // channels, 17 classes, hierarchical encoders, attention at stage end.
  ModelConfig probe = cfg;
  probe.window_ms = 300;
  if (probe.toggles != LedgerToggles{} || probe.num_classes != 17 ||
      probe.input_channels != 12 || !probe.hierarchical ||
      probe.mhsatten_position != MhsattenPosition::stage_end)
    return std::nullopt;
  for (const auto& name : kVariantNames) {
    ModelConfig ref = named_variant(name);
    ref.window_ms = 300;
    if (probe == ref) {
      if (name == "XXSmall") return ReferenceCount{"XXSmall", 20689, 20686};
      if (name == "XSmall") return ReferenceCount{"XSmall", 40281, std::nullopt};
      return ReferenceCount{"Small", 58441, std::nullopt};
    }
  }
  static const std::pair<const char*, int64_t> kTable5[] = {
      {"1", 37673}, {"2", 54249}, {"3", 58441}, {"4", 60817},
      {"5", 31785}, {"6", 52969}, {"7", 58441}, {"8", 61585},
  };
  for (const auto& e : build_ablation_grid("table5")) {
    ModelConfig ref = e.config;
    ref.window_ms = 300;
    if (probe == ref)
      for (const auto& [id, count] : kTable5)
        if (e.id == id) return ReferenceCount{"grid ID " + e.id, count, std::nullopt};
  }
  return std::nullopt;
}

// ---- free-function forwards ----

template <typename T>
Tensor<T> hierarchical_dwconv(const Tensor<T>& x, const std::vector<Tensor<T>>& weights,
                              const std::vector<Tensor<T>>& biases) {
  const int s = static_cast<int>(weights.size());
  if (s < 1 || biases.size() != weights.size())
    throw ConfigError("hierarchical_dwconv: need one weight/bias per branch");
  auto parts = ops::split_channels(x, s);
  std::vector<Tensor<T>> ys;
  ys.reserve(static_cast<size_t>(s));
  for (int i = 0; i < s; ++i) {
    const Tensor<T>& w = weights[static_cast<size_t>(i)];
    const int pad = static_cast<int>(w.dim(0)) / 2;
    Tensor<T> branch_in =
        i == 0 ? parts[0] : ops::add(parts[static_cast<size_t>(i)], ys.back());
    ys.push_back(ops::conv1d(branch_in, w, biases[static_cast<size_t>(i)], 1, pad,
                             static_cast<int>(branch_in.dim(-1))));
  }
  return s == 1 ? ys[0] : ops::concat_channels(ys);
}

template <typename T>
Tensor<T> linear_gelu(const Tensor<T>& x, const LinearGeluParams<T>& p) {
  Tensor<T> h = ops::gelu(ops::linear(x, p.w1, p.b1));
  if (p.w2.defined()) h = ops::linear(h, p.w2, p.b2);
  return h;
}

template <typename T>
Tensor<T> hdconv_encoder_forward(const Tensor<T>& x, const HdconvEncoderParams<T>& p) {
  Tensor<T> h = hierarchical_dwconv(x, p.dw_weights, p.dw_biases);
  h = ops::layer_norm(h, p.ln_gamma, p.ln_beta, static_cast<T>(kLayerNormEps));
  h = linear_gelu(h, p.pw);
  if (p.layer_scale.defined()) h = ops::channel_scale(h, p.layer_scale);
  return ops::add(x, h);
}

template <typename T>
Tensor<T> multihead_self_attention(const Tensor<T>& x, const MhaParams<T>& p, int heads,
                                   Tensor<T>* probs_out) {
  Tensor<T> q = ops::linear(x, p.wq, p.bq);
  Tensor<T> k = ops::linear(x, p.wk, p.bk);
  Tensor<T> v = ops::linear(x, p.wv, p.bv);
  Tensor<T> a = ops::scaled_dot_attention(q, k, v, heads, probs_out);
  return ops::linear(a, p.wo, p.bo);
}

template <typename T>
Tensor<T> mhsatten_encoder_forward(const Tensor<T>& x, const MhsattenEncoderParams<T>& p,
                                   int heads) {
  Tensor<T> a = ops::layer_norm(x, p.ln1_gamma, p.ln1_beta, static_cast<T>(kLayerNormEps));
  a = multihead_self_attention(a, p.mha, heads);
  if (p.ls1.defined()) a = ops::channel_scale(a, p.ls1);
  Tensor<T> r = ops::add(x, a);
  Tensor<T> h = ops::layer_norm(r, p.ln2_gamma, p.ln2_beta, static_cast<T>(kLayerNormEps));
  h = linear_gelu(h, p.pw);
  if (p.ls2.defined()) h = ops::channel_scale(h, p.ls2);
  return ops::add(x, h);
}

template <typename T>
Tensor<T> stem_forward(const Tensor<T>& x, const Tensor<T>& conv_w, const Tensor<T>& conv_b,
                       const Tensor<T>& ln_gamma, const Tensor<T>& ln_beta) {
  if (x.dim(-2) < 10)
    throw ConfigError("stem: input length " + std::to_string(x.dim(-2)) +
                      " is shorter than the 10-sample patch");
  Tensor<T> h = ops::conv1d(x, conv_w, conv_b, 10, 0, 1);
  return ops::layer_norm(h, ln_gamma, ln_beta, static_cast<T>(kLayerNormEps));
}

template <typename T>
Tensor<T> downsample_forward(const Tensor<T>& x, const Tensor<T>& ln_gamma,
                             const Tensor<T>& ln_beta, const Tensor<T>& conv_w,
                             const Tensor<T>& conv_b) {
  if (x.dim(-2) < 2)
    throw ConfigError("downsample: input length " + std::to_string(x.dim(-2)) + " < 2");
  Tensor<T> h = ops::layer_norm(x, ln_gamma, ln_beta, static_cast<T>(kLayerNormEps));
  return ops::conv1d(h, conv_w, conv_b, 2, 0, 1);
}

// ---- model ----

template <typename T>
Tensor<T> HdcamModel<T>::reg(const std::string& name, Tensor<T> t) {
  for (const auto& [n, unused] : params_)
    if (n == name) throw ConfigError("duplicate parameter name '" + name + "'");
  t.set_requires_grad(true);
  params_.emplace_back(name, t);
  return t;
}

template <typename T>
HdcamModel<T>::HdcamModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  require_valid(cfg_);
  build(seed);
}

template <typename T>
void HdcamModel<T>::build(uint64_t seed) {
  Rng rng(mix_seed(seed, 0xA0DE1));
  const bool bias = cfg_.toggles.biases;
  const bool affine = cfg_.toggles.ln_affine;
  const bool ls = cfg_.toggles.layer_scale;
  const int e = cfg_.toggles.expansion;

  auto conv_init = [&](Shape shape, int64_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor<T>::uniform(std::move(shape), rng, static_cast<T>(-bound),
                              static_cast<T>(bound));
  };
  auto proj_init = [&](Shape shape) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i)
      t.data()[i] = static_cast<T>(rng.truncated_normal(0.02));
    return t;
  };
  auto maybe_bias = [&](const std::string& name, int64_t n) -> Tensor<T> {
    if (!bias) return {};
    return reg(name, Tensor<T>({n}));
  };
  auto maybe_affine = [&](const std::string& prefix, int64_t n, Tensor<T>& g, Tensor<T>& b) {
    if (!affine) return;
    g = reg(prefix + ".gamma", Tensor<T>::full({n}, T(1)));
    b = reg(prefix + ".beta", Tensor<T>({n}));
  };

  const int cin = cfg_.input_channels;
  const auto& ch = cfg_.stage_channels;

  // Stem: 10x1 stride-10 conv + LN.
  stem_w_ = reg("stem.conv.weight", conv_init({10, cin, ch[0]}, 10 * cin));
  stem_b_ = maybe_bias("stem.conv.bias", ch[0]);
  maybe_affine("stem.ln", ch[0], stem_g_, stem_be_);

  auto make_linear_gelu = [&](const std::string& prefix, int c) {
    LinearGeluParams<T> p;
    p.w1 = reg(prefix + ".pw1.weight", proj_init({c, c * e}));
    p.b1 = maybe_bias(prefix + ".pw1.bias", c * e);
    if (e > 1) {
      p.w2 = reg(prefix + ".pw2.weight", proj_init({c * e, c}));
      p.b2 = maybe_bias(prefix + ".pw2.bias", c);
    }
    return p;
  };

  auto make_hdconv = [&](const std::string& prefix, int c, int s) {
    Encoder enc;
    enc.is_attention = false;
    const int branches = cfg_.hierarchical ? s : 1;
    const int cs = c / branches;
    for (int i = 0; i < branches; ++i) {
      const std::string wname = prefix + ".dw" + std::to_string(i);
      enc.hd.dw_weights.push_back(reg(wname + ".weight", conv_init({3, 1, cs}, 3)));
      enc.hd.dw_biases.push_back(maybe_bias(wname + ".bias", cs));
    }
    maybe_affine(prefix + ".ln", c, enc.hd.ln_gamma, enc.hd.ln_beta);
    enc.hd.pw = make_linear_gelu(prefix, c);
    if (ls) enc.hd.layer_scale = reg(prefix + ".layer_scale", Tensor<T>::full({c}, T(1)));
    return enc;
  };

  auto make_attention = [&](const std::string& prefix, int c) {
    Encoder enc;
    enc.is_attention = true;
    maybe_affine(prefix + ".ln1", c, enc.at.ln1_gamma, enc.at.ln1_beta);
    enc.at.mha.wq = reg(prefix + ".q.weight", proj_init({c, c}));
    enc.at.mha.bq = maybe_bias(prefix + ".q.bias", c);
    enc.at.mha.wk = reg(prefix + ".k.weight", proj_init({c, c}));
    enc.at.mha.bk = maybe_bias(prefix + ".k.bias", c);
    enc.at.mha.wv = reg(prefix + ".v.weight", proj_init({c, c}));
    enc.at.mha.bv = maybe_bias(prefix + ".v.bias", c);
    enc.at.mha.wo = reg(prefix + ".proj.weight", proj_init({c, c}));
    enc.at.mha.bo = maybe_bias(prefix + ".proj.bias", c);
    if (ls) enc.at.ls1 = reg(prefix + ".ls1", Tensor<T>::full({c}, T(1)));
    maybe_affine(prefix + ".ln2", c, enc.at.ln2_gamma, enc.at.ln2_beta);
    enc.at.pw = make_linear_gelu(prefix, c);
    if (ls) enc.at.ls2 = reg(prefix + ".ls2", Tensor<T>::full({c}, T(1)));
    return enc;
  };

  for (int stage = 0; stage < 3; ++stage) {
    const std::string sp = "stage" + std::to_string(stage + 1);
    if (stage > 0) {
      Downsample& dn = stage == 1 ? down2_ : down3_;
      maybe_affine(sp + ".down.ln", ch[stage - 1], dn.ln_gamma, dn.ln_beta);
      dn.conv_w = reg(sp + ".down.conv.weight",
                      conv_init({2, ch[stage - 1], ch[stage]}, 2 * ch[stage - 1]));
      dn.conv_b = maybe_bias(sp + ".down.conv.bias", ch[stage]);
    }
    const int n = cfg_.hdconv_counts[static_cast<size_t>(stage)];
    const int m = cfg_.mhsatten_counts[static_cast<size_t>(stage)];
    const int c = ch[static_cast<size_t>(stage)];
    auto& blocks = stages_[static_cast<size_t>(stage)];
    int idx = 0;
    auto add_hdconvs = [&] {
      for (int i = 0; i < n; ++i, ++idx)
        blocks.push_back(
            make_hdconv(sp + ".block" + std::to_string(idx), c,
                        cfg_.scales[static_cast<size_t>(stage)]));
    };
    auto add_attns = [&] {
      for (int i = 0; i < m; ++i, ++idx)
        blocks.push_back(make_attention(sp + ".block" + std::to_string(idx), c));
    };
    if (cfg_.mhsatten_position == MhsattenPosition::stage_end) {
      add_hdconvs();
      add_attns();
    } else {
      add_attns();
      add_hdconvs();
    }
  }

  if (cfg_.toggles.final_ln) maybe_affine("head.ln", ch[2], head_g_, head_be_);
  head_w_ = reg("head.linear.weight", proj_init({ch[2], cfg_.num_classes}));
  head_b_ = maybe_bias("head.linear.bias", cfg_.num_classes);
}

template <typename T>
ForwardTrace<T> HdcamModel<T>::forward_trace(const Tensor<T>& x) const {
  if (x.rank() != 2 && x.rank() != 3)
    throw ConfigError("forward: input must be [L,C] or [B,L,C], got " +
                      shape_str(x.shape()));
  if (x.dim(-1) != cfg_.input_channels)
    throw ConfigError("forward: expected " + std::to_string(cfg_.input_channels) +
                      " channels, got " + std::to_string(x.dim(-1)));
  const int64_t expect_l = cfg_.expected_input_length();
  if (x.dim(-2) != expect_l)
    throw ConfigError("forward: expected input length L=" + std::to_string(expect_l) +
                      " for window " + std::to_string(cfg_.window_ms) + " ms, got " +
                      std::to_string(x.dim(-2)));

  ForwardTrace<T> tr;
  tr.stem = stem_forward(x, stem_w_, stem_b_, stem_g_, stem_be_);
  Tensor<T> h = tr.stem;
  for (int stage = 0; stage < 3; ++stage) {
    if (stage == 1) h = downsample_forward(h, down2_.ln_gamma, down2_.ln_beta, down2_.conv_w,
                                           down2_.conv_b);
    if (stage == 2) h = downsample_forward(h, down3_.ln_gamma, down3_.ln_beta, down3_.conv_w,
                                           down3_.conv_b);
    tr.stage_input[static_cast<size_t>(stage)] = h;
    for (const Encoder& enc : stages_[static_cast<size_t>(stage)]) {
      if (enc.is_attention)
        h = mhsatten_encoder_forward(h, enc.at, cfg_.heads[static_cast<size_t>(stage)]);
      else
        h = hdconv_encoder_forward(h, enc.hd);
    }
    tr.stage_output[static_cast<size_t>(stage)] = h;
  }
  h = ops::global_avg_pool(h);
  if (cfg_.toggles.final_ln)
    h = ops::layer_norm(h, head_g_, head_be_, static_cast<T>(kLayerNormEps));
  tr.pooled = h;
  tr.logits = ops::linear(h, head_w_, head_b_);
  return tr;
}

template <typename T>
Tensor<T> HdcamModel<T>::forward(const Tensor<T>& x) const {
  return forward_trace(x).logits;
}

template <typename T>
Tensor<T>* HdcamModel<T>::find_parameter(const std::string& name) {
  for (auto& [n, t] : params_)
    if (n == name) return &t;
  return nullptr;
}

template <typename T>
void HdcamModel<T>::set_requires_grad(bool on) {
  for (auto& [n, t] : params_) t.set_requires_grad(on);
}

template <typename T>
void HdcamModel<T>::zero_grad() {
  for (auto& [n, t] : params_) t.zero_grad();
}

template <typename T>
int64_t HdcamModel<T>::parameter_count() const {
  int64_t total = 0;
  for (const auto& [n, t] : params_) total += t.numel();
  return total;
}

template <typename T>
ParamCountReport HdcamModel<T>::count_parameters() const {
  ParamCountReport rep;
  static const char* kStages[] = {"stem", "stage1", "stage2", "stage3", "head"};
  std::vector<int64_t> subtotal(5, 0);
  for (const auto& [name, t] : params_) {
    rep.per_layer.emplace_back(name, t.numel());
    for (size_t i = 0; i < 5; ++i)
      if (name.rfind(kStages[i], 0) == 0) subtotal[i] += t.numel();
    rep.total += t.numel();
  }
  for (size_t i = 0; i < 5; ++i) rep.per_stage.emplace_back(kStages[i], subtotal[i]);
  return rep;
}

ParamCountReport count_parameters(const ModelConfig& cfg) {
  return HdcamModel<float>(cfg).count_parameters();
}

#define HDCAM_INSTANTIATE_MODEL(T)                                                       \
  template Tensor<T> hierarchical_dwconv<T>(const Tensor<T>&,                            \
                                            const std::vector<Tensor<T>>&,              \
                                            const std::vector<Tensor<T>>&);             \
  template Tensor<T> linear_gelu<T>(const Tensor<T>&, const LinearGeluParams<T>&);      \
  template Tensor<T> hdconv_encoder_forward<T>(const Tensor<T>&,                        \
                                               const HdconvEncoderParams<T>&);          \
  template Tensor<T> multihead_self_attention<T>(const Tensor<T>&, const MhaParams<T>&, \
                                                 int, Tensor<T>*);                      \
  template Tensor<T> mhsatten_encoder_forward<T>(const Tensor<T>&,                      \
                                                 const MhsattenEncoderParams<T>&, int); \
  template Tensor<T> stem_forward<T>(const Tensor<T>&, const Tensor<T>&,                \
                                     const Tensor<T>&, const Tensor<T>&,                \
                                     const Tensor<T>&);                                 \
  template Tensor<T> downsample_forward<T>(const Tensor<T>&, const Tensor<T>&,          \
                                           const Tensor<T>&, const Tensor<T>&,          \
                                           const Tensor<T>&);                           \
  template class HdcamModel<T>;

HDCAM_INSTANTIATE_MODEL(float)
HDCAM_INSTANTIATE_MODEL(double)

}  // namespace hdcam

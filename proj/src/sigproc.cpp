#include "hdcam/sigproc.hpp"

#include <cmath>
#include <complex>
#include <string>

#include "hdcam/dataset.hpp"

namespace hdcam::sigproc {

FirstOrderIirCoeffs design_butterworth_lowpass(double fc, double fs) {
  if (!(fc > 0.0) || !(fc < fs / 2.0))
    throw ConfigError("butterworth: cutoff " + std::to_string(fc) +
                      " Hz must satisfy 0 < fc < fs/2 (fs = " + std::to_string(fs) + ")");
  const double k = std::tan(3.14159265358979323846 * fc / fs);
  FirstOrderIirCoeffs c;
  c.b0 = k / (1.0 + k);
  c.b1 = c.b0;
  c.a1 = (k - 1.0) / (k + 1.0);
  c.fs = fs;
  c.fc = fc;
  return c;
}

double magnitude_response(const FirstOrderIirCoeffs& c, double freq_hz) {
  const double w = 2.0 * 3.14159265358979323846 * freq_hz / c.fs;
  const std::complex<double> zinv = std::exp(std::complex<double>(0.0, -w));
  return std::abs((c.b0 + c.b1 * zinv) / (1.0 + c.a1 * zinv));
}

namespace {
template <typename T>
std::vector<T> filter_impl(const FirstOrderIirCoeffs& c, std::span<const T> x) {
  std::vector<T> y(x.size());
  double xprev = 0.0, yprev = 0.0;
  for (size_t n = 0; n < x.size(); ++n) {
    const double xn = static_cast<double>(x[n]);
    const double yn = c.b0 * xn + c.b1 * xprev - c.a1 * yprev;
    y[n] = static_cast<T>(yn);
    xprev = xn;
    yprev = yn;
  }
  return y;
}
}  // namespace

std::vector<double> filter_apply(const FirstOrderIirCoeffs& c, std::span<const double> x) {
  return filter_impl<double>(c, x);
}

std::vector<float> filter_apply(const FirstOrderIirCoeffs& c, std::span<const float> x) {
  return filter_impl<float>(c, x);
}

std::vector<double> filter_apply_zero_phase(const FirstOrderIirCoeffs& c,
                                            std::span<const double> x) {
  std::vector<double> fwd = filter_impl<double>(c, x);
  std::vector<double> rev(fwd.rbegin(), fwd.rend());
  std::vector<double> bwd = filter_impl<double>(c, std::span<const double>(rev));
  return {bwd.rbegin(), bwd.rend()};
}

double mu_law_compress(double x, double mu) {
  if (!(mu > 0.0)) throw ConfigError("mu-law: mu must be positive");
  if (std::abs(x) > 1.0)
    throw DataError("mu-law: |x| = " + std::to_string(std::abs(x)) + " exceeds 1");
  const double sign = x < 0.0 ? -1.0 : 1.0;
  return sign * std::log1p(mu * std::abs(x)) / std::log1p(mu);
}

ChannelScales fit_channel_scales(const EmgRecording& rec, const std::set<int>& test_reps) {
  if (rec.n_samples == 0) throw DataError("fit_channel_scales: empty recording");
  ChannelScales out;
  out.scale.assign(static_cast<size_t>(rec.n_channels), 0.0);
  for (int64_t i = 0; i < rec.n_samples; ++i) {
    if (test_reps.count(rec.repetition_label[static_cast<size_t>(i)]) > 0) continue;
    const float* row = rec.samples.data() + i * rec.n_channels;
    for (int64_t ch = 0; ch < rec.n_channels; ++ch) {
      const double a = std::abs(static_cast<double>(row[ch]));
      if (a > out.scale[static_cast<size_t>(ch)]) out.scale[static_cast<size_t>(ch)] = a;
    }
  }
  for (int64_t ch = 0; ch < rec.n_channels; ++ch) {
    if (out.scale[static_cast<size_t>(ch)] == 0.0) {
      log::warn("channel " + std::to_string(ch) + " is all-zero on the training split; scale 1");
      out.scale[static_cast<size_t>(ch)] = 1.0;
    }
  }
  return out;
}

namespace {

PipelineResult run_pipeline(EmgRecording& rec, const PipelineConfig& cfg,
                            const ChannelScales* fixed_scales) {
  if (!rec.pipeline_stamp.empty())
    throw DataError("recording already preprocessed (stamp '" + rec.pipeline_stamp +
                    "'); refusing to apply the pipeline twice");
  if (rec.n_samples == 0) throw DataError("pipeline: empty recording");

  const FirstOrderIirCoeffs coeffs = design_butterworth_lowpass(cfg.cutoff_hz, rec.fs);

  // Channels are filtered independently.
  std::vector<double> chan(static_cast<size_t>(rec.n_samples));
  for (int64_t ch = 0; ch < rec.n_channels; ++ch) {
    for (int64_t i = 0; i < rec.n_samples; ++i)
      chan[static_cast<size_t>(i)] = static_cast<double>(rec.at(i, ch));
    std::vector<double> f = cfg.zero_phase
                                ? filter_apply_zero_phase(coeffs, chan)
                                : filter_apply(coeffs, std::span<const double>(chan));
    for (int64_t i = 0; i < rec.n_samples; ++i)
      rec.samples[static_cast<size_t>(i * rec.n_channels + ch)] =
          static_cast<float>(f[static_cast<size_t>(i)]);
  }

  PipelineResult res;
  res.scales = fixed_scales != nullptr ? *fixed_scales : fit_channel_scales(rec, cfg.test_reps);
  if (static_cast<int64_t>(res.scales.scale.size()) != rec.n_channels)
    throw DataError("pipeline: " + std::to_string(res.scales.scale.size()) +
                    " scale factors for " + std::to_string(rec.n_channels) + " channels");

  // Normalize by training-split max-abs; anything beyond (test-time samples,
  // or all samples when replaying foreign scales) clips to [-1,1].
  int64_t clipped = 0;
  const double log1p_mu = std::log1p(cfg.mu);
  for (int64_t i = 0; i < rec.n_samples; ++i) {
    float* row = rec.samples.data() + i * rec.n_channels;
    for (int64_t ch = 0; ch < rec.n_channels; ++ch) {
      double v = static_cast<double>(row[ch]) / res.scales.scale[static_cast<size_t>(ch)];
      if (v > 1.0) {
        v = 1.0;
        ++clipped;
      } else if (v < -1.0) {
        v = -1.0;
        ++clipped;
      }
      const double sign = v < 0.0 ? -1.0 : 1.0;
      row[ch] = static_cast<float>(sign * std::log1p(cfg.mu * std::abs(v)) / log1p_mu);
    }
  }
  res.clip_rate = static_cast<double>(clipped) /
                  static_cast<double>(rec.n_samples * rec.n_channels);
  rec.pipeline_stamp = "butterworth(" + std::to_string(cfg.cutoff_hz) + "Hz" +
                       (cfg.zero_phase ? ",zero-phase" : "") + ")+maxabs+mulaw(" +
                       std::to_string(cfg.mu) + ")";
  return res;
}

}  // namespace

PipelineResult apply_pipeline(EmgRecording& rec, const PipelineConfig& cfg) {
  return run_pipeline(rec, cfg, nullptr);
}

PipelineResult apply_pipeline_with_scales(EmgRecording& rec, const PipelineConfig& cfg,
                                          const ChannelScales& scales) {
  return run_pipeline(rec, cfg, &scales);
}

}  // namespace hdcam::sigproc

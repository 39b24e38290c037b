#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "hdcam/common.hpp"

namespace hdcam {

struct EmgRecording;  // dataset.hpp

namespace sigproc {

// First-order low-pass realization. Direct form:
//   y[n] = b0*x[n] + b1*x[n-1] - a1*y[n-1]
// Invariants: unity DC gain (b0+b1)/(1+a1) == 1, |a1| < 1.
struct FirstOrderIirCoeffs {
  double b0 = 0;
  double b1 = 0;
  double a1 = 0;
  double fs = 0;  // Hz
  double fc = 0;  // Hz
};

// Bilinear transform with prewarping: K = tan(pi*fc/fs),
// b0 = b1 = K/(1+K), a1 = (K-1)/(K+1). Pins the -3 dB point at fc.
FirstOrderIirCoeffs design_butterworth_lowpass(double fc, double fs);

// Magnitude of H(e^{j*2*pi*f/fs}) for the designed filter.
double magnitude_response(const FirstOrderIirCoeffs& c, double freq_hz);

// Causal filtering with zero initial state.
std::vector<double> filter_apply(const FirstOrderIirCoeffs& c, std::span<const double> x);
std::vector<float> filter_apply(const FirstOrderIirCoeffs& c, std::span<const float> x);

// Forward-backward pass; zero phase, squared magnitude response.
std::vector<double> filter_apply_zero_phase(const FirstOrderIirCoeffs& c,
                                            std::span<const double> x);

// y = sign(x) * ln(1 + mu*|x|) / ln(1 + mu). Requires |x| <= 1.
double mu_law_compress(double x, double mu);

struct ChannelScales {
  std::vector<double> scale;  // per channel, divisor
};

// Max-abs per channel over samples whose repetition label is NOT in
// test_reps (rest samples carry repetition 0 and are included).
// All-zero channels get scale 1 and a warning.
ChannelScales fit_channel_scales(const EmgRecording& rec, const std::set<int>& test_reps);

struct PipelineConfig {
  double cutoff_hz = 1.0;
  double mu = 256.0;
  bool zero_phase = false;
  std::set<int> test_reps = {2, 5};
};

struct PipelineResult {
  ChannelScales scales;
  double clip_rate = 0;  // fraction of samples clipped to [-1,1] post-scaling
};

// In-place preprocessing: Butterworth smoothing, per-channel max-abs
// normalization fitted on the training repetitions, then mu-law companding.
// Stamps the recording; a second application is an error.
PipelineResult apply_pipeline(EmgRecording& rec, const PipelineConfig& cfg);

// Same pipeline with externally fitted scales (checkpoint replay on new data).
PipelineResult apply_pipeline_with_scales(EmgRecording& rec, const PipelineConfig& cfg,
                                          const ChannelScales& scales);

}  // namespace sigproc
}  // namespace hdcam

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "hdcam/common.hpp"

namespace hdcam {

// One subject's continuous multichannel sEMG stream with per-sample labels.
// movement_label: 0 = rest, 1..N = gesture; repetition_label: 0 = rest, 1..R.
// Invariant: movement_label == 0 <=> repetition_label == 0.
struct EmgRecording {
  int subject_id = 0;
  double fs = 2000.0;
  int64_t n_channels = 0;
  int64_t n_samples = 0;
  std::vector<float> samples;  // row-major [n_samples, n_channels]
  std::vector<int16_t> movement_label;
  std::vector<int16_t> repetition_label;
  std::string pipeline_stamp;  // empty = raw

  float at(int64_t sample, int64_t channel) const {
    return samples[static_cast<size_t>(sample * n_channels + channel)];
  }
  void validate() const;  // throws DataError on invariant violations
};

// One labeled window: X is [length, channels] row-major float32.
struct Window {
  std::vector<float> x;
  int64_t length = 0;
  int64_t channels = 0;
  int label = 0;  // class index
  int subject_id = 0;
  int repetition = 0;
};

struct WindowSet {
  std::vector<Window> windows;
  int64_t length = 0;     // L, uniform
  int64_t channels = 0;   // C, uniform
  int num_classes = 0;

  size_t size() const { return windows.size(); }
  bool empty() const { return windows.empty(); }
};

// --- semg-bin container ---
// Little-endian: magic "SEMG", version u16 = 1, header-length u32, header as
// UTF-8 JSON {subject_id, fs, n_channels, n_samples}, then
// n_samples*n_channels float32 row-major samples, then n_samples int16
// movement labels, then n_samples int16 repetition labels.
void write_recording(const EmgRecording& rec, const std::string& path);
EmgRecording load_recording(const std::string& path);  // dispatches on .csv extension

// CSV alternative: one header row ch0..ch{C-1},movement,repetition. The CSV
// carries no sample-rate or subject metadata; pass them explicitly.
EmgRecording load_recording_csv(const std::string& path, double fs = 2000.0,
                                int subject_id = 0);
void write_recording_csv(const EmgRecording& rec, const std::string& path);

// Sliding-window segmentation. Windows are taken only from maximal runs of
// constant nonzero movement label; the window label is movement-1. No window
// crosses a run boundary. With include_rest, rest runs also emit windows as
// one extra trailing class (rest windows inherit repetition 0).
struct SegmentOptions {
  double window_ms = 300;
  double stride_ms = 50;
  bool include_rest = false;
};
WindowSet segment_windows(const EmgRecording& rec, const SegmentOptions& opt);

// Partition by the window's repetition field. Throws ProtocolError when a
// side ends up empty or test_reps is not a subset of {1..6}.
struct SplitResult {
  WindowSet train;
  WindowSet test;
};
SplitResult split_by_repetition(const WindowSet& ws, const std::set<int>& test_reps);

// Synthetic recording that mimics the acquisition protocol: for every class,
// `reps` repetitions of 5 s movement followed by 3 s rest, at the given rate.
// Each class has a per-channel amplitude signature over a plateau plus
// band-limited oscillations and noise, so classes are linearly separable on
// mean-absolute-value features and the class content survives low-pass
// smoothing. Deterministic under seed.
EmgRecording synth_generate(int num_classes, int channels, double fs, int reps,
                            uint64_t seed);

}  // namespace hdcam

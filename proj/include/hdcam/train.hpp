#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "hdcam/dataset.hpp"
#include "hdcam/model.hpp"
#include "hdcam/sigproc.hpp"

namespace hdcam {

struct TrainConfig {
  double learning_rate = 0.0001;
  int batch_size = 32;
  int epochs = 120;
  uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool shuffle = true;
  // When > 0, stop once the epoch's train accuracy reaches this fraction.
  double stop_at_train_accuracy = 0.0;
};

// One optimizer slot (m, v) per parameter, index-aligned with the model's
// parameter list.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  int64_t t = 0;
};

template <typename T>
AdamState<T> make_adam_state(const std::vector<std::pair<std::string, Tensor<T>>>& params);

// In-place:
//   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
// t is the 1-based step index; pass grads index-aligned with params.
template <typename T>
void adam_step(std::vector<std::pair<std::string, Tensor<T>>>& params, AdamState<T>& state,
               const TrainConfig& cfg);

struct TrainResult {
  std::vector<double> loss_curve;       // per-epoch mean train loss
  std::vector<double> train_acc_curve;  // per-epoch online train accuracy
  int epochs_run = 0;
  int64_t steps = 0;
};

template <typename T>
TrainResult train_model(HdcamModel<T>& model, const WindowSet& train, const TrainConfig& cfg);

struct EvalResult {
  double accuracy = 0;
  std::vector<int64_t> confusion;  // [num_classes, num_classes], row = true class
  int num_classes = 0;
  int64_t total = 0;
};

// Top-1 accuracy; argmax ties break toward the lowest class index.
template <typename T>
EvalResult evaluate(const HdcamModel<T>& model, const WindowSet& test);

struct Metrics {
  std::map<int, double> per_subject_accuracy;
  double mean_accuracy = 0;
  double std_accuracy = 0;  // population STD over subjects
  std::vector<int64_t> confusion;
  int num_classes = 0;
  std::vector<std::vector<double>> loss_curves;  // per subject, subject-id order
  int64_t param_count = 0;
  double runtime_seconds = 0;
};

struct ProtocolSpec {
  ModelConfig model;
  double window_ms = 200;
  double train_stride_ms = 50;
  double eval_stride_ms = 100;
  std::set<int> test_reps = {2, 5};
  bool include_rest = false;
  sigproc::PipelineConfig pipeline;
  TrainConfig train;
  int jobs = 1;
  // Invoked per subject after training (checkpoint writing etc.).
  std::function<void(int subject_id, const HdcamModel<float>& model,
                     const sigproc::ChannelScales& scales, const EvalResult& eval)>
      on_subject_done;
};

// Trains one independent model per subject recording and aggregates
// accuracy mean/STD over the subject population. Missing files are skipped
// with a warning; ProtocolError if nothing is trainable. Deterministic:
// each subject's seed is derived from (seed, subject_id), so results do not
// depend on processing order or job count.
Metrics run_protocol(const ProtocolSpec& spec, const std::vector<std::string>& subject_paths);

// Windows -> batch tensor [B, L, C] (+ labels), order taken from `order`.
template <typename T>
Tensor<T> make_batch(const WindowSet& ws, const std::vector<int64_t>& order, size_t begin,
                     size_t end, std::vector<int>* labels);

}  // namespace hdcam

#pragma once

#include <set>
#include <string>

#include "hdcam/model.hpp"
#include "hdcam/sigproc.hpp"

namespace hdcam {

// Checkpoint container: magic "HDCK", version u16 = 1, header-length u32,
// header JSON (config, pipeline scale factors, seed, protocol fields), then
// tensor count u32 and per tensor a length-prefixed name, u32 rank, u64
// extents, and float32 data. Little-endian throughout.
struct CheckpointMeta {
  ModelConfig config;
  sigproc::ChannelScales scales;
  sigproc::PipelineConfig pipeline;
  uint64_t seed = 0;
  int subject_id = 0;
  double window_ms = 0;
  double train_stride_ms = 0;
  double eval_stride_ms = 0;
  std::set<int> test_reps;
  bool include_rest = false;
  double test_accuracy = -1;  // as reported by the training run
};

void save_checkpoint(const std::string& path, const HdcamModel<float>& model,
                     const CheckpointMeta& meta);

CheckpointMeta load_checkpoint_meta(const std::string& path);

// Rebuilds the model from the stored config and restores every parameter.
// Throws CheckpointError on any structural mismatch.
HdcamModel<float> load_checkpoint_model(const std::string& path,
                                        CheckpointMeta* meta_out = nullptr);

}  // namespace hdcam

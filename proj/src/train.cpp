#include "hdcam/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "hdcam/kernels.hpp"

namespace hdcam {

template <typename T>
AdamState<T> make_adam_state(const std::vector<std::pair<std::string, Tensor<T>>>& params) {
  AdamState<T> st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const auto& [name, p] : params) {
    st.m.push_back(Tensor<T>(p.shape()));
    st.v.push_back(Tensor<T>(p.shape()));
  }
  return st;
}

template <typename T>
void adam_step(std::vector<std::pair<std::string, Tensor<T>>>& params, AdamState<T>& state,
               const TrainConfig& cfg) {
  if (state.m.size() != params.size())
    throw std::runtime_error("adam_step: state has " + std::to_string(state.m.size()) +
                             " slots for " + std::to_string(params.size()) + " parameters");
  state.t += 1;
  const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.t)));
  const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.t)));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = params[i].second;
    if (state.m[i].shape() != p.shape())
      throw std::runtime_error("adam_step: state/param shape mismatch at '" +
                               params[i].first + "'");
    kernels::adam_update(p.data(), p.grad(), state.m[i].data(), state.v[i].data(),
                         static_cast<size_t>(p.numel()), static_cast<T>(cfg.learning_rate),
                         static_cast<T>(cfg.beta1), static_cast<T>(cfg.beta2),
                         static_cast<T>(cfg.eps), bc1, bc2);
  }
}

template <typename T>
Tensor<T> make_batch(const WindowSet& ws, const std::vector<int64_t>& order, size_t begin,
                     size_t end, std::vector<int>* labels) {
  const int64_t b = static_cast<int64_t>(end - begin);
  Tensor<T> x({b, ws.length, ws.channels});
  if (labels != nullptr) labels->resize(static_cast<size_t>(b));
  const int64_t per = ws.length * ws.channels;
  for (size_t i = begin; i < end; ++i) {
    const Window& w = ws.windows[static_cast<size_t>(order[i])];
    T* dst = x.data() + static_cast<int64_t>(i - begin) * per;
    for (int64_t j = 0; j < per; ++j) dst[j] = static_cast<T>(w.x[static_cast<size_t>(j)]);
    if (labels != nullptr) (*labels)[i - begin] = w.label;
  }
  return x;
}

namespace {

template <typename T>
int argmax_row(const T* row, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

}  // namespace

template <typename T>
TrainResult train_model(HdcamModel<T>& model, const WindowSet& train, const TrainConfig& cfg) {
  if (train.empty()) throw ProtocolError("train_model: empty training set");
  if (cfg.batch_size < 1 || !(cfg.learning_rate > 0))
    throw ConfigError("train_model: batch_size must be >= 1 and learning_rate > 0");
  if (train.length != model.config().expected_input_length())
    throw ConfigError("train_model: window length " + std::to_string(train.length) +
                      " does not match model input length " +
                      std::to_string(model.config().expected_input_length()));

  const size_t n = train.size();
  const int classes = model.config().num_classes;
  Rng shuffle_rng(mix_seed(cfg.seed, 0x5u));
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  AdamState<T> state = make_adam_state(model.parameters());
  TrainResult result;
  std::vector<int> labels;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) shuffle_rng.shuffle(order);
    double epoch_loss = 0;
    int64_t correct = 0;
    for (size_t begin = 0; begin < n; begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(n, begin + static_cast<size_t>(cfg.batch_size));
      Tensor<T> x = make_batch<T>(train, order, begin, end, &labels);
      Tape<T> tape;
      Tensor<T> loss;
      {
        TapeScope<T> scope(tape);
        Tensor<T> logits = model.forward(x);
        loss = ops::cross_entropy(logits, labels);
        const int64_t bsz = static_cast<int64_t>(end - begin);
        for (int64_t i = 0; i < bsz; ++i)
          if (argmax_row(logits.data() + i * classes, classes) == labels[static_cast<size_t>(i)])
            ++correct;
      }
      if (!std::isfinite(static_cast<double>(loss.item()))) {
        std::ostringstream os;
        os << "train_model: non-finite loss at epoch " << epoch << ", batch "
           << begin / static_cast<size_t>(cfg.batch_size) << "; parameter grad norms:";
        for (const auto& [name, p] : model.parameters()) os << " " << name << "=" << p.grad_norm();
        throw NumericsError(os.str());
      }
      model.zero_grad();
      tape.backward(loss);
      adam_step(model.parameters(), state, cfg);
      result.steps += 1;
      epoch_loss += static_cast<double>(loss.item()) * static_cast<double>(end - begin);
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(n));
    result.train_acc_curve.push_back(static_cast<double>(correct) / static_cast<double>(n));
    result.epochs_run = epoch;
    log::debug("epoch " + std::to_string(epoch) + ": loss " +
               std::to_string(result.loss_curve.back()) + ", online train acc " +
               std::to_string(result.train_acc_curve.back()));
    if (cfg.stop_at_train_accuracy > 0 &&
        result.train_acc_curve.back() >= cfg.stop_at_train_accuracy)
      break;
  }
  return result;
}

template <typename T>
EvalResult evaluate(const HdcamModel<T>& model, const WindowSet& test) {
  if (test.empty()) throw ProtocolError("evaluate: empty test set");
  const int classes = model.config().num_classes;
  EvalResult res;
  res.num_classes = classes;
  res.confusion.assign(static_cast<size_t>(classes) * classes, 0);
  const size_t n = test.size();
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> labels;
  constexpr size_t kEvalBatch = 64;
  int64_t correct = 0;
  for (size_t begin = 0; begin < n; begin += kEvalBatch) {
    const size_t end = std::min(n, begin + kEvalBatch);
    Tensor<T> x = make_batch<T>(test, order, begin, end, &labels);
    Tensor<T> logits = model.forward(x);
    for (size_t i = 0; i < end - begin; ++i) {
      const int truth = labels[i];
      if (truth < 0 || truth >= classes)
        throw DataError("evaluate: window label " + std::to_string(truth) +
                        " out of range for " + std::to_string(classes) + " classes");
      const int pred = argmax_row(logits.data() + static_cast<int64_t>(i) * classes, classes);
      res.confusion[static_cast<size_t>(truth) * classes + pred] += 1;
      if (pred == truth) ++correct;
    }
  }
  res.total = static_cast<int64_t>(n);
  res.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return res;
}

namespace {

struct SubjectOutcome {
  int subject_id = 0;
  double accuracy = 0;
  std::vector<int64_t> confusion;
  std::vector<double> loss_curve;
};

SubjectOutcome run_subject(const ProtocolSpec& spec, const std::string& path) {
  EmgRecording rec = load_recording(path);
  sigproc::PipelineConfig pcfg = spec.pipeline;
  pcfg.test_reps = spec.test_reps;
  const sigproc::PipelineResult pres = sigproc::apply_pipeline(rec, pcfg);

  SegmentOptions seg;
  seg.window_ms = spec.window_ms;
  seg.include_rest = spec.include_rest;
  seg.stride_ms = spec.train_stride_ms;
  WindowSet train_ws = split_by_repetition(segment_windows(rec, seg), spec.test_reps).train;
  seg.stride_ms = spec.eval_stride_ms;
  WindowSet test_ws = split_by_repetition(segment_windows(rec, seg), spec.test_reps).test;

  TrainConfig tcfg = spec.train;
  tcfg.seed = mix_seed(spec.train.seed, static_cast<uint64_t>(rec.subject_id));
  HdcamModel<float> model(spec.model, tcfg.seed);
  const TrainResult tres = train_model(model, train_ws, tcfg);
  const EvalResult eres = evaluate(model, test_ws);

  log::info("subject " + std::to_string(rec.subject_id) + ": " +
            std::to_string(train_ws.size()) + " train / " + std::to_string(test_ws.size()) +
            " test windows, accuracy " + std::to_string(eres.accuracy * 100.0) + "% after " +
            std::to_string(tres.epochs_run) + " epochs");

  if (spec.on_subject_done) {
    sigproc::ChannelScales scales = pres.scales;
    spec.on_subject_done(rec.subject_id, model, scales, eres);
  }
  SubjectOutcome out;
  out.subject_id = rec.subject_id;
  out.accuracy = eres.accuracy;
  out.confusion = eres.confusion;
  out.loss_curve = tres.loss_curve;
  return out;
}

}  // namespace

Metrics run_protocol(const ProtocolSpec& spec, const std::vector<std::string>& subject_paths) {
  const auto t0 = std::chrono::steady_clock::now();
  require_valid(spec.model);

  std::vector<std::string> available;
  for (const auto& p : subject_paths) {
    std::ifstream probe(p);
    if (probe.good()) {
      available.push_back(p);
    } else {
      log::warn("subject file '" + p + "' missing; skipped");
    }
  }
  if (available.empty()) throw ProtocolError("run_protocol: no subject recordings available");

  std::vector<SubjectOutcome> outcomes(available.size());
  std::exception_ptr first_error;
  std::mutex err_mutex;
  const int jobs = std::max(1, spec.jobs);
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= available.size()) return;
      try {
        outcomes[i] = run_subject(spec, available[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::sort(outcomes.begin(), outcomes.end(),
            [](const SubjectOutcome& a, const SubjectOutcome& b) {
              return a.subject_id < b.subject_id;
            });

  Metrics m;
  m.num_classes = spec.model.num_classes;
  m.confusion.assign(static_cast<size_t>(m.num_classes) * m.num_classes, 0);
  for (const auto& o : outcomes) {
    if (m.per_subject_accuracy.count(o.subject_id) > 0)
      throw ProtocolError("run_protocol: duplicate subject id " + std::to_string(o.subject_id));
    m.per_subject_accuracy[o.subject_id] = o.accuracy;
    for (size_t i = 0; i < o.confusion.size(); ++i) m.confusion[i] += o.confusion[i];
    m.loss_curves.push_back(o.loss_curve);
  }
  double mean = 0;
  for (const auto& [id, acc] : m.per_subject_accuracy) mean += acc;
  mean /= static_cast<double>(m.per_subject_accuracy.size());
  double var = 0;
  for (const auto& [id, acc] : m.per_subject_accuracy) var += (acc - mean) * (acc - mean);
  var /= static_cast<double>(m.per_subject_accuracy.size());
  m.mean_accuracy = mean;
  m.std_accuracy = std::sqrt(var);
  m.param_count = count_parameters(spec.model).total;
  m.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

#define HDCAM_INSTANTIATE_TRAIN(T)                                                       \
  template AdamState<T> make_adam_state<T>(                                              \
      const std::vector<std::pair<std::string, Tensor<T>>>&);                            \
  template void adam_step<T>(std::vector<std::pair<std::string, Tensor<T>>>&,            \
                             AdamState<T>&, const TrainConfig&);                         \
  template Tensor<T> make_batch<T>(const WindowSet&, const std::vector<int64_t>&,        \
                                   size_t, size_t, std::vector<int>*);                   \
  template TrainResult train_model<T>(HdcamModel<T>&, const WindowSet&,                  \
                                      const TrainConfig&);                               \
  template EvalResult evaluate<T>(const HdcamModel<T>&, const WindowSet&);

HDCAM_INSTANTIATE_TRAIN(float)
HDCAM_INSTANTIATE_TRAIN(double)

}  // namespace hdcam

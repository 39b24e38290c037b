#include "hdcam/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hdcam {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'M', 'G'};
constexpr uint16_t kVersion = 1;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void EmgRecording::validate() const {
  if (n_samples != static_cast<int64_t>(movement_label.size()) ||
      n_samples != static_cast<int64_t>(repetition_label.size()) ||
      n_samples * n_channels != static_cast<int64_t>(samples.size()))
    throw DataError("recording: samples/labels length mismatch (n_samples=" +
                    std::to_string(n_samples) + ", movement=" +
                    std::to_string(movement_label.size()) + ", repetition=" +
                    std::to_string(repetition_label.size()) + ")");
  for (int64_t i = 0; i < n_samples; ++i) {
    const bool m0 = movement_label[static_cast<size_t>(i)] == 0;
    const bool r0 = repetition_label[static_cast<size_t>(i)] == 0;
    if (m0 != r0)
      throw DataError("recording: movement/repetition rest mismatch at row " +
                      std::to_string(i));
    if (movement_label[static_cast<size_t>(i)] < 0 ||
        repetition_label[static_cast<size_t>(i)] < 0)
      throw DataError("recording: negative label at row " + std::to_string(i));
  }
}

void write_recording(const EmgRecording& rec, const std::string& path) {
  rec.validate();
  nlohmann::json header = {{"subject_id", rec.subject_id},
                           {"fs", rec.fs},
                           {"n_channels", rec.n_channels},
                           {"n_samples", rec.n_samples}};
  const std::string hjson = header.dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(kMagic, 4);
  const uint16_t ver = kVersion;
  f.write(reinterpret_cast<const char*>(&ver), 2);
  const uint32_t hlen = static_cast<uint32_t>(hjson.size());
  f.write(reinterpret_cast<const char*>(&hlen), 4);
  f.write(hjson.data(), static_cast<std::streamsize>(hjson.size()));
  f.write(reinterpret_cast<const char*>(rec.samples.data()),
          static_cast<std::streamsize>(rec.samples.size() * sizeof(float)));
  f.write(reinterpret_cast<const char*>(rec.movement_label.data()),
          static_cast<std::streamsize>(rec.movement_label.size() * sizeof(int16_t)));
  f.write(reinterpret_cast<const char*>(rec.repetition_label.data()),
          static_cast<std::streamsize>(rec.repetition_label.size() * sizeof(int16_t)));
  if (!f) throw IoError("short write to '" + path + "'");
}

namespace {

EmgRecording load_semg_bin(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open '" + path + "'");
  const int64_t fsize = static_cast<int64_t>(f.tellg());
  f.seekg(0);
  std::vector<char> buf(static_cast<size_t>(fsize));
  f.read(buf.data(), fsize);
  if (!f) throw IoError("short read from '" + path + "'");

  if (fsize < 10) throw DataError(path + ": truncated header (file is " +
                                  std::to_string(fsize) + " bytes)");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw DataError(path + ": bad magic at byte 0");
  uint16_t ver;
  std::memcpy(&ver, buf.data() + 4, 2);
  if (ver != kVersion)
    throw DataError(path + ": unsupported version " + std::to_string(ver) + " at byte 4");
  uint32_t hlen;
  std::memcpy(&hlen, buf.data() + 6, 4);
  if (10 + static_cast<int64_t>(hlen) > fsize)
    throw DataError(path + ": header length " + std::to_string(hlen) +
                    " at byte 6 exceeds file size");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.data() + 10, buf.data() + 10 + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid header JSON at byte 10: " + e.what());
  }
  static const char* kKeys[] = {"subject_id", "fs", "n_channels", "n_samples"};
  if (!header.is_object() || header.size() != 4)
    throw DataError(path + ": header must contain exactly subject_id, fs, n_channels, n_samples");
  for (const char* key : kKeys)
    if (!header.contains(key))
      throw DataError(path + ": header missing key '" + std::string(key) + "'");
  if (!header["fs"].is_number() || !header["n_channels"].is_number_integer() ||
      !header["n_samples"].is_number_integer() || !header["subject_id"].is_number_integer())
    throw DataError(path + ": header field has wrong type");

  EmgRecording rec;
  rec.subject_id = header["subject_id"].get<int>();
  rec.fs = header["fs"].get<double>();
  rec.n_channels = header["n_channels"].get<int64_t>();
  rec.n_samples = header["n_samples"].get<int64_t>();
  if (!(rec.fs > 0) || rec.n_channels < 1 || rec.n_samples < 0)
    throw DataError(path + ": header values out of range (fs=" + std::to_string(rec.fs) +
                    ", n_channels=" + std::to_string(rec.n_channels) + ", n_samples=" +
                    std::to_string(rec.n_samples) + ")");

  const int64_t data_off = 10 + hlen;
  const int64_t expect = data_off + rec.n_samples * rec.n_channels * 4 + rec.n_samples * 2 * 2;
  if (expect != fsize)
    throw DataError(path + ": payload length mismatch, expected " + std::to_string(expect) +
                    " bytes total but file has " + std::to_string(fsize));

  rec.samples.resize(static_cast<size_t>(rec.n_samples * rec.n_channels));
  std::memcpy(rec.samples.data(), buf.data() + data_off, rec.samples.size() * sizeof(float));
  for (size_t i = 0; i < rec.samples.size(); ++i)
    if (!std::isfinite(rec.samples[i]))
      throw DataError(path + ": non-finite sample at byte " +
                      std::to_string(data_off + static_cast<int64_t>(i) * 4));
  const int64_t mv_off = data_off + rec.n_samples * rec.n_channels * 4;
  rec.movement_label.resize(static_cast<size_t>(rec.n_samples));
  rec.repetition_label.resize(static_cast<size_t>(rec.n_samples));
  std::memcpy(rec.movement_label.data(), buf.data() + mv_off, rec.movement_label.size() * 2);
  std::memcpy(rec.repetition_label.data(), buf.data() + mv_off + rec.n_samples * 2,
              rec.repetition_label.size() * 2);
  rec.validate();
  return rec;
}

}  // namespace

EmgRecording load_recording(const std::string& path) {
  if (ends_with(path, ".csv")) return load_recording_csv(path);
  return load_semg_bin(path);
}

EmgRecording load_recording_csv(const std::string& path, double fs, int subject_id) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw DataError(path + ": empty file (no header row)");

  // Header row: ch0..ch{C-1},movement,repetition.
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) cols.push_back(field);
  }
  if (cols.size() < 3 || cols[cols.size() - 2] != "movement" || cols.back() != "repetition")
    throw DataError(path + ": header row must be ch0..chN,movement,repetition");
  const int64_t channels = static_cast<int64_t>(cols.size()) - 2;
  for (int64_t cidx = 0; cidx < channels; ++cidx)
    if (cols[static_cast<size_t>(cidx)] != "ch" + std::to_string(cidx))
      throw DataError(path + ": unexpected channel column '" +
                      cols[static_cast<size_t>(cidx)] + "'");

  EmgRecording rec;
  rec.subject_id = subject_id;
  rec.fs = fs;
  rec.n_channels = channels;
  int64_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    int64_t field_idx = 0;
    for (; field_idx < channels + 2; ++field_idx) {
      if (p > end) break;
      double value;
      auto [next, ec] = std::from_chars(p, end, value);
      if (ec != std::errc())
        throw DataError(path + ": row " + std::to_string(row) + ": cannot parse field " +
                        std::to_string(field_idx));
      if (field_idx < channels) {
        if (!std::isfinite(value))
          throw DataError(path + ": row " + std::to_string(row) + ": non-finite sample");
        rec.samples.push_back(static_cast<float>(value));
      } else if (field_idx == channels) {
        rec.movement_label.push_back(static_cast<int16_t>(value));
      } else {
        rec.repetition_label.push_back(static_cast<int16_t>(value));
      }
      p = next;
      if (field_idx < channels + 1) {
        if (p >= end || *p != ',')
          throw DataError(path + ": row " + std::to_string(row) + ": expected " +
                          std::to_string(channels + 2) + " comma-separated fields");
        ++p;
      }
    }
    if (p != end)
      throw DataError(path + ": row " + std::to_string(row) + ": trailing characters");
  }
  rec.n_samples = static_cast<int64_t>(rec.movement_label.size());
  rec.validate();
  return rec;
}

void write_recording_csv(const EmgRecording& rec, const std::string& path) {
  rec.validate();
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  for (int64_t c = 0; c < rec.n_channels; ++c) f << "ch" << c << ",";
  f << "movement,repetition\n";
  f << std::setprecision(9);
  for (int64_t i = 0; i < rec.n_samples; ++i) {
    for (int64_t c = 0; c < rec.n_channels; ++c) f << rec.at(i, c) << ",";
    f << rec.movement_label[static_cast<size_t>(i)] << ","
      << rec.repetition_label[static_cast<size_t>(i)] << "\n";
  }
  if (!f) throw IoError("short write to '" + path + "'");
}

WindowSet segment_windows(const EmgRecording& rec, const SegmentOptions& opt) {
  rec.validate();
  const double exact_len = opt.window_ms * rec.fs / 1000.0;
  const int64_t L = static_cast<int64_t>(std::llround(exact_len));
  if (L < 1 || std::abs(exact_len - static_cast<double>(L)) > 1e-9)
    throw ConfigError("window of " + std::to_string(opt.window_ms) + " ms at fs=" +
                      std::to_string(rec.fs) + " is not an integer sample count");
  const double exact_stride = opt.stride_ms * rec.fs / 1000.0;
  const int64_t stride = static_cast<int64_t>(std::llround(exact_stride));
  if (stride < 1 || std::abs(exact_stride - static_cast<double>(stride)) > 1e-9)
    throw ConfigError("stride of " + std::to_string(opt.stride_ms) + " ms at fs=" +
                      std::to_string(rec.fs) + " is not a positive integer sample count");

  int max_movement = 0;
  for (int16_t m : rec.movement_label) max_movement = std::max(max_movement, static_cast<int>(m));
  WindowSet ws;
  ws.length = L;
  ws.channels = rec.n_channels;
  ws.num_classes = max_movement + (opt.include_rest ? 1 : 0);

  // Maximal runs of a constant (movement, repetition) pair.
  int64_t run_start = 0;
  while (run_start < rec.n_samples) {
    const int16_t mv = rec.movement_label[static_cast<size_t>(run_start)];
    const int16_t rp = rec.repetition_label[static_cast<size_t>(run_start)];
    int64_t run_end = run_start + 1;
    while (run_end < rec.n_samples &&
           rec.movement_label[static_cast<size_t>(run_end)] == mv &&
           rec.repetition_label[static_cast<size_t>(run_end)] == rp)
      ++run_end;
    const bool wanted = mv > 0 || opt.include_rest;
    const int64_t run_len = run_end - run_start;
    if (wanted && run_len >= L) {
      const int label = mv > 0 ? mv - 1 : max_movement;
      for (int64_t start = run_start; start + L <= run_end; start += stride) {
        Window w;
        w.length = L;
        w.channels = rec.n_channels;
        w.label = label;
        w.subject_id = rec.subject_id;
        w.repetition = rp;
        w.x.assign(rec.samples.begin() + start * rec.n_channels,
                   rec.samples.begin() + (start + L) * rec.n_channels);
        ws.windows.push_back(std::move(w));
      }
    }
    run_start = run_end;
  }
  if (ws.windows.empty())
    log::warn("segmentation produced no windows (window " + std::to_string(opt.window_ms) +
              " ms longer than every movement run?)");
  return ws;
}

SplitResult split_by_repetition(const WindowSet& ws, const std::set<int>& test_reps) {
  if (test_reps.empty()) throw ProtocolError("split: empty test repetition set");
  for (int r : test_reps)
    if (r < 1 || r > 6)
      throw ProtocolError("split: test repetition " + std::to_string(r) +
                          " outside {1..6}");
  SplitResult out;
  out.train.length = out.test.length = ws.length;
  out.train.channels = out.test.channels = ws.channels;
  out.train.num_classes = out.test.num_classes = ws.num_classes;
  for (const Window& w : ws.windows) {
    if (test_reps.count(w.repetition) > 0)
      out.test.windows.push_back(w);
    else
      out.train.windows.push_back(w);
  }
  if (out.train.empty() || out.test.empty())
    throw ProtocolError("split: " + std::string(out.train.empty() ? "train" : "test") +
                        " side is empty for test repetitions");
  return out;
}

EmgRecording synth_generate(int num_classes, int channels, double fs, int reps,
                            uint64_t seed) {
  if (num_classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (channels < 1 || reps < 1 || !(fs > 0)) throw ConfigError("synth: bad parameters");

  Rng rng(mix_seed(seed, 0x5EB6));
  const int64_t move_len = static_cast<int64_t>(std::llround(5.0 * fs));
  const int64_t rest_len = static_cast<int64_t>(std::llround(3.0 * fs));
  const int64_t total =
      rest_len + static_cast<int64_t>(num_classes) * reps * (move_len + rest_len);

  EmgRecording rec;
  rec.fs = fs;
  rec.n_channels = channels;
  rec.n_samples = total;
  rec.samples.assign(static_cast<size_t>(total * channels), 0.0f);
  rec.movement_label.assign(static_cast<size_t>(total), 0);
  rec.repetition_label.assign(static_cast<size_t>(total), 0);

  // Class signatures: signed plateau amplitude per channel, one slow and one
  // fast oscillation. The plateau carries the class identity through a 1 Hz
  // low-pass; the fast component adds realistic broadband content.
  std::vector<std::vector<double>> amp(static_cast<size_t>(num_classes));
  std::vector<double> f_slow(static_cast<size_t>(num_classes));
  std::vector<double> f_fast(static_cast<size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    amp[static_cast<size_t>(c)].resize(static_cast<size_t>(channels));
    for (int ch = 0; ch < channels; ++ch) {
      const double mag = rng.uniform(0.25, 1.0);
      amp[static_cast<size_t>(c)][static_cast<size_t>(ch)] =
          rng.uniform() < 0.5 ? -mag : mag;
    }
    f_slow[static_cast<size_t>(c)] = rng.uniform(0.3, 0.9);
    f_fast[static_cast<size_t>(c)] = rng.uniform(20.0, 120.0);
  }

  const double noise_amp = 0.03;
  const int64_t ramp = static_cast<int64_t>(std::llround(0.25 * fs));
  const double two_pi = 2.0 * 3.14159265358979323846;

  auto fill_rest = [&](int64_t start, int64_t len) {
    for (int64_t i = start; i < start + len; ++i) {
      float* row = rec.samples.data() + i * channels;
      for (int ch = 0; ch < channels; ++ch)
        row[ch] = static_cast<float>(noise_amp * (rng.uniform() * 2.0 - 1.0));
    }
  };

  int64_t pos = 0;
  fill_rest(pos, rest_len);
  pos += rest_len;
  for (int c = 1; c <= num_classes; ++c) {
    const auto& a = amp[static_cast<size_t>(c - 1)];
    const double fs1 = f_slow[static_cast<size_t>(c - 1)];
    const double fs2 = f_fast[static_cast<size_t>(c - 1)];
    for (int r = 1; r <= reps; ++r) {
      const double phi1 = rng.uniform(0.0, two_pi);
      const double phi2 = rng.uniform(0.0, two_pi);
      for (int64_t i = 0; i < move_len; ++i) {
        const double t = static_cast<double>(i) / fs;
        double env = 1.0;
        if (i < ramp) env = 0.5 - 0.5 * std::cos(3.14159265358979323846 * i / ramp);
        else if (i >= move_len - ramp)
          env = 0.5 - 0.5 * std::cos(3.14159265358979323846 * (move_len - 1 - i) / ramp);
        const double slow = 0.8 + 0.2 * std::sin(two_pi * fs1 * t + phi1);
        const double fast = 0.15 * std::sin(two_pi * fs2 * t + phi2);
        float* row = rec.samples.data() + (pos + i) * channels;
        for (int ch = 0; ch < channels; ++ch) {
          const double v = a[static_cast<size_t>(ch)] * env * (slow + fast) +
                           noise_amp * (rng.uniform() * 2.0 - 1.0);
          row[ch] = static_cast<float>(v);
        }
        rec.movement_label[static_cast<size_t>(pos + i)] = static_cast<int16_t>(c);
        rec.repetition_label[static_cast<size_t>(pos + i)] = static_cast<int16_t>(r);
      }
      pos += move_len;
      fill_rest(pos, rest_len);
      pos += rest_len;
    }
  }
  rec.validate();
  return rec;
}

}  // namespace hdcam

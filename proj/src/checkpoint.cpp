#include "hdcam/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "hdcam/model_json.hpp"

namespace hdcam {

namespace {

constexpr char kMagic[4] = {'H', 'D', 'C', 'K'};
constexpr uint16_t kVersion = 1;

nlohmann::json meta_to_json(const CheckpointMeta& m) {
  return {{"config", m.config},
          {"scales", m.scales.scale},
          {"pipeline",
           {{"cutoff_hz", m.pipeline.cutoff_hz},
            {"mu", m.pipeline.mu},
            {"zero_phase", m.pipeline.zero_phase}}},
          {"seed", m.seed},
          {"subject_id", m.subject_id},
          {"window_ms", m.window_ms},
          {"train_stride_ms", m.train_stride_ms},
          {"eval_stride_ms", m.eval_stride_ms},
          {"test_reps", std::vector<int>(m.test_reps.begin(), m.test_reps.end())},
          {"include_rest", m.include_rest},
          {"test_accuracy", m.test_accuracy}};
}

CheckpointMeta meta_from_json(const nlohmann::json& j) {
  CheckpointMeta m;
  j.at("config").get_to(m.config);
  j.at("scales").get_to(m.scales.scale);
  m.pipeline.cutoff_hz = j.at("pipeline").at("cutoff_hz").get<double>();
  m.pipeline.mu = j.at("pipeline").at("mu").get<double>();
  m.pipeline.zero_phase = j.at("pipeline").at("zero_phase").get<bool>();
  m.seed = j.at("seed").get<uint64_t>();
  m.subject_id = j.at("subject_id").get<int>();
  m.window_ms = j.at("window_ms").get<double>();
  m.train_stride_ms = j.at("train_stride_ms").get<double>();
  m.eval_stride_ms = j.at("eval_stride_ms").get<double>();
  const auto reps = j.at("test_reps").get<std::vector<int>>();
  m.test_reps = std::set<int>(reps.begin(), reps.end());
  m.include_rest = j.at("include_rest").get<bool>();
  m.test_accuracy = j.at("test_accuracy").get<double>();
  m.pipeline.test_reps = m.test_reps;
  return m;
}

struct Reader {
  std::vector<char> buf;
  size_t pos = 0;
  std::string path;

  void need(size_t n, const char* what) {
    if (pos + n > buf.size())
      throw CheckpointError(path + ": truncated while reading " + std::string(what));
  }
  template <typename T>
  T take(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string take_str(size_t n, const char* what) {
    need(n, what);
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const HdcamModel<float>& model,
                     const CheckpointMeta& meta) {
  const std::string header = meta_to_json(meta).dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(kMagic, 4);
  const uint16_t ver = kVersion;
  f.write(reinterpret_cast<const char*>(&ver), 2);
  const uint32_t hlen = static_cast<uint32_t>(header.size());
  f.write(reinterpret_cast<const char*>(&hlen), 4);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  const uint32_t count = static_cast<uint32_t>(model.parameters().size());
  f.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& [name, t] : model.parameters()) {
    const uint32_t nlen = static_cast<uint32_t>(name.size());
    f.write(reinterpret_cast<const char*>(&nlen), 4);
    f.write(name.data(), nlen);
    const uint32_t rank = static_cast<uint32_t>(t.rank());
    f.write(reinterpret_cast<const char*>(&rank), 4);
    for (int64_t d : t.shape()) {
      const uint64_t dd = static_cast<uint64_t>(d);
      f.write(reinterpret_cast<const char*>(&dd), 8);
    }
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(float))));
  }
  if (!f) throw IoError("short write to '" + path + "'");
}

namespace {

Reader read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  Reader r;
  r.path = path;
  const auto size = f.tellg();
  f.seekg(0);
  r.buf.resize(static_cast<size_t>(size));
  f.read(r.buf.data(), size);
  if (!f) throw IoError("short read from '" + path + "'");
  return r;
}

nlohmann::json read_header(Reader& r) {
  if (r.take_str(4, "magic") != std::string(kMagic, 4))
    throw CheckpointError(r.path + ": not a checkpoint file (bad magic)");
  const uint16_t ver = r.take<uint16_t>("version");
  if (ver != kVersion)
    throw CheckpointError(r.path + ": unsupported checkpoint version " + std::to_string(ver));
  const uint32_t hlen = r.take<uint32_t>("header length");
  const std::string header = r.take_str(hlen, "header");
  try {
    return nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(r.path + ": invalid header JSON: " + e.what());
  }
}

}  // namespace

CheckpointMeta load_checkpoint_meta(const std::string& path) {
  Reader r = read_file(path);
  try {
    return meta_from_json(read_header(r));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": header field error: " + e.what());
  }
}

HdcamModel<float> load_checkpoint_model(const std::string& path, CheckpointMeta* meta_out) {
  Reader r = read_file(path);
  CheckpointMeta meta;
  try {
    meta = meta_from_json(read_header(r));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": header field error: " + e.what());
  }
  HdcamModel<float> model(meta.config, meta.seed);
  const uint32_t count = r.take<uint32_t>("tensor count");
  if (count != model.parameters().size())
    throw CheckpointError(path + ": " + std::to_string(count) + " tensors stored but config builds " +
                          std::to_string(model.parameters().size()));
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t nlen = r.take<uint32_t>("tensor name length");
    const std::string name = r.take_str(nlen, "tensor name");
    const uint32_t rank = r.take<uint32_t>("tensor rank");
    Shape shape;
    for (uint32_t d = 0; d < rank; ++d)
      shape.push_back(static_cast<int64_t>(r.take<uint64_t>("tensor extent")));
    Tensor<float>* param = model.find_parameter(name);
    if (param == nullptr)
      throw CheckpointError(path + ": unknown parameter '" + name + "'");
    if (param->shape() != shape)
      throw CheckpointError(path + ": parameter '" + name + "' stored as " + shape_str(shape) +
                            " but config builds " + shape_str(param->shape()));
    const size_t bytes = static_cast<size_t>(param->numel()) * sizeof(float);
    r.need(bytes, name.c_str());
    std::memcpy(param->data(), r.buf.data() + r.pos, bytes);
    r.pos += bytes;
  }
  if (r.pos != r.buf.size())
    throw CheckpointError(path + ": trailing bytes after tensor payload");
  if (meta_out != nullptr) *meta_out = meta;
  return model;
}

}  // namespace hdcam

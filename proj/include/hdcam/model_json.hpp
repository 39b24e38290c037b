#pragma once

#include <set>

#include "json.hpp"

#include "hdcam/model.hpp"

// JSON (de)serialization for model configuration. Unknown keys are rejected
// so config files cannot silently misspell a field.

namespace hdcam {

inline void to_json(nlohmann::json& j, const LedgerToggles& t) {
  j = {{"biases", t.biases},
       {"ln_affine", t.ln_affine},
       {"layer_scale", t.layer_scale},
       {"final_ln", t.final_ln},
       {"expansion", t.expansion}};
}

inline void from_json(const nlohmann::json& j, LedgerToggles& t) {
  static const std::set<std::string> known = {"biases", "ln_affine", "layer_scale",
                                             "final_ln", "expansion"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (known.count(it.key()) == 0)
      throw ConfigError("unknown toggles key '" + it.key() + "'");
  t = LedgerToggles{};
  if (j.contains("biases")) j.at("biases").get_to(t.biases);
  if (j.contains("ln_affine")) j.at("ln_affine").get_to(t.ln_affine);
  if (j.contains("layer_scale")) j.at("layer_scale").get_to(t.layer_scale);
  if (j.contains("final_ln")) j.at("final_ln").get_to(t.final_ln);
  if (j.contains("expansion")) j.at("expansion").get_to(t.expansion);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"stage_channels", c.stage_channels},
       {"hdconv_counts", c.hdconv_counts},
       {"mhsatten_counts", c.mhsatten_counts},
       {"scales", c.scales},
       {"heads", c.heads},
       {"mhsatten_position",
        c.mhsatten_position == MhsattenPosition::stage_end ? "stage_end" : "stage_begin"},
       {"hierarchical", c.hierarchical},
       {"num_classes", c.num_classes},
       {"input_channels", c.input_channels},
       {"window_ms", c.window_ms},
       {"toggles", c.toggles}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const std::set<std::string> known = {
      "stage_channels", "hdconv_counts", "mhsatten_counts", "scales",
      "heads",          "mhsatten_position", "hierarchical", "num_classes",
      "input_channels", "window_ms",     "toggles"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (known.count(it.key()) == 0)
      throw ConfigError("unknown model config key '" + it.key() + "'");
  c = ModelConfig{};
  if (j.contains("stage_channels")) j.at("stage_channels").get_to(c.stage_channels);
  if (j.contains("hdconv_counts")) j.at("hdconv_counts").get_to(c.hdconv_counts);
  if (j.contains("mhsatten_counts")) j.at("mhsatten_counts").get_to(c.mhsatten_counts);
  if (j.contains("scales")) j.at("scales").get_to(c.scales);
  if (j.contains("heads")) j.at("heads").get_to(c.heads);
  if (j.contains("mhsatten_position")) {
    const std::string pos = j.at("mhsatten_position").get<std::string>();
    if (pos == "stage_end") {
      c.mhsatten_position = MhsattenPosition::stage_end;
    } else if (pos == "stage_begin") {
      c.mhsatten_position = MhsattenPosition::stage_begin;
    } else {
      throw ConfigError("mhsatten_position must be stage_end or stage_begin, got '" + pos +
                        "'");
    }
  }
  if (j.contains("hierarchical")) j.at("hierarchical").get_to(c.hierarchical);
  if (j.contains("num_classes")) j.at("num_classes").get_to(c.num_classes);
  if (j.contains("input_channels")) j.at("input_channels").get_to(c.input_channels);
  if (j.contains("window_ms")) j.at("window_ms").get_to(c.window_ms);
  if (j.contains("toggles")) j.at("toggles").get_to(c.toggles);
}

}  // namespace hdcam

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "simagent/json_fields.hpp"

namespace simagent::model {

struct ModelConfig {
  int encoder_layers = 2;
  int decoder_layers = 2;
  int hidden = 64;
  int heads = 4;
  int feed_forward = 128;
  int vocab = 169;
  int max_steps = 80;        // size of the decoder time-embedding table
  int map_points = 8;        // map polylines are resampled to this many points
  double position_scale = 20.0;
  double velocity_scale = 10.0;
  std::uint64_t init_seed = 1;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("model: " + m); };
    if (encoder_layers < 1 || decoder_layers < 1) fail("layer counts must be >= 1");
    if (hidden < 1 || heads < 1 || hidden % heads != 0) fail("hidden must be a positive multiple of heads");
    if (feed_forward < 1) fail("feed_forward must be >= 1");
    if (vocab != 169) fail("vocab must be 169 (13x13 action grid)");
    if (max_steps < 1) fail("max_steps must be >= 1");
    if (map_points < 2) fail("map_points must be >= 2");
    if (!(position_scale > 0.0) || !(velocity_scale > 0.0)) fail("scales must be positive");
  }

  static ModelConfig desk() { return {}; }

  /// Larger preset: 4+4 layers, hidden 256, 4 heads, feed-forward 1024.
  static ModelConfig full_scale() {
    ModelConfig c;
    c.encoder_layers = 4;
    c.decoder_layers = 4;
    c.hidden = 256;
    c.feed_forward = 1024;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
       {"hidden", c.hidden},                 {"heads", c.heads},
       {"feed_forward", c.feed_forward},     {"vocab", c.vocab},
       {"max_steps", c.max_steps},           {"map_points", c.map_points},
       {"position_scale", c.position_scale}, {"velocity_scale", c.velocity_scale},
       {"init_seed", c.init_seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  FieldReader r(j, "model");
  r("encoder_layers", c.encoder_layers)("decoder_layers", c.decoder_layers)("hidden", c.hidden)("heads", c.heads)(
      "feed_forward", c.feed_forward)("vocab", c.vocab)("max_steps", c.max_steps)("map_points", c.map_points)(
      "position_scale", c.position_scale)("velocity_scale", c.velocity_scale)("init_seed", c.init_seed);
  r.finish();
}

/// Canonical serialization used for checkpoint fingerprints.
inline std::string canonical_json(const ModelConfig& c) { return nlohmann::json(c).dump(); }

}  // namespace simagent::model

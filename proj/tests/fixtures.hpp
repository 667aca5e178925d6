#pragma once

#include "gated_price/data_pipeline.hpp"
#include "gated_price/synth.hpp"
#include "gated_price/trainer.hpp"

namespace fixtures {

inline gprice::SynthData small_corpus(double rho = 0.3, std::size_t n = 2000, std::size_t dim = 8) {
  gprice::SynthConfig cfg;
  cfg.n = n;
  cfg.visual_dim = dim;
  cfg.noise_fraction = rho;
  cfg.n_sellers = 30;
  cfg.seed = 5;
  return gprice::generate(cfg);
}

inline gprice::TrainConfig tiny_config(std::size_t warmup = 3, std::size_t joint = 6) {
  gprice::TrainConfig cfg;
  cfg.batch_size = 128;
  cfg.hidden_dims = {16, 8};
  cfg.schedule = {{gprice::Stage::Warmup, 2e-3, warmup}, {gprice::Stage::Joint, 2e-3, joint}};
  return cfg;
}

}  // namespace fixtures

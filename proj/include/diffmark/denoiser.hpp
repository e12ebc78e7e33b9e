#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffmark/schedule.hpp"
#include "diffmark/tensor.hpp"
#include "diffmark/watermark.hpp"

namespace diffmark {

// Flat parameter storage; order is fixed by the owning model.
using ParamSet = std::vector<std::vector<double>>;

// Small convolutional encoder-decoder for noise prediction:
//   [x, coords] -> conv3x3 -> FiLM(t) -> SiLU
//               -> conv3x3 -> FiLM(t) -> SiLU -> conv3x3
// plus a time-gated skip from the input. The coordinate channels carry raw
// ramps and sin/cos Fourier features (sharp spatial biases are otherwise not
// representable this shallow); FiLM scales/shifts and the skip gate come from
// an MLP over a sinusoidal step embedding. Trained by explicit backprop; no
// autograd involved.
struct ToyDenoiserConfig {
    int channels = 1;
    int hidden_channels = 12;
    int time_embed_dim = 32;
    int time_hidden_dim = 64;
};

class ToyDenoiser {
  public:
    ToyDenoiser(const ToyDenoiserConfig& config, uint64_t init_seed);

    const ToyDenoiserConfig& config() const { return config_; }
    std::string descriptor() const;

    // Deterministic forward pass; per-element step indices.
    ImageBatch forward(const ImageBatch& x, const std::vector<int>& t) const;
    ImageBatch forward(const ImageBatch& x, int t) const;

    // MSE loss over the batch and its gradient with respect to every
    // parameter. `grads` is resized/zeroed to match the parameter layout.
    // `per_element_loss`, when given, receives each element's own MSE.
    double loss_and_gradients(const ImageBatch& x, const std::vector<int>& t,
                              const ImageBatch& target, ParamSet& grads,
                              std::vector<double>* per_element_loss = nullptr) const;

    ParamSet& parameters() { return params_; }
    const ParamSet& parameters() const { return params_; }
    const std::vector<std::string>& parameter_names() const { return names_; }

    void set_parameters(const ParamSet& params);

  private:
    ToyDenoiserConfig config_;
    ParamSet params_;
    std::vector<std::string> names_;
};

// Bayes-optimal noise predictor for a single-image corpus with a statically
// scaled pattern; verifies the sampler and the verification pipeline without
// any training. Supports both f1 modes.
class OracleDenoiser {
  public:
    OracleDenoiser(Image x0, const WatermarkSpec& spec, const VarianceSchedule& schedule,
                   double pattern_scale);

    ImageBatch predict(const ImageBatch& x, int t) const;

  private:
    Image x0_prime_;          // gamma x0 + (1-gamma) b_0
    Image scaled_pattern_;
    WatermarkSpec spec_;
    const VarianceSchedule* schedule_;
};

}  // namespace diffmark

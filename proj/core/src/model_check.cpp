#include "hdnet/model_check.hpp"

#include <algorithm>
#include <vector>

#include "hdnet/random.hpp"
#include "hdnet/synth.hpp"

namespace hdnet {

GradCheckReport check_model_gradients(ModelConfig config, const ModelCheckOptions& options) {
  config.classes = std::max<std::size_t>(config.classes, 2);
  config.strategy = SamplingStrategy::dfs;
  config.sampler.hard = false;

  std::vector<GaitSample> batch;
  std::vector<ad::Matrix> noise;
  for (std::size_t s = 0; s < options.samples; ++s) {
    const std::size_t label = s % config.classes;
    const SubjectProfile profile = generate_subject(label, options.seed);
    const PointStream stream =
        generate_stream(profile, options.frames, 10.0, mix_seed(options.seed, 100 + s));
    batch.push_back(build_sample(stream, options.points, mix_seed(options.seed, 200 + s),
                                 static_cast<int>(label)));
    Rng noise_rng(mix_seed(options.seed, 300 + s));
    noise.push_back(sample_gumbel_noise(options.frames, noise_rng));
  }

  ParamStore store;
  const HdNet net(config, store, mix_seed(options.seed, 400));
  const Objective objective = [&](ad::Tape& tape) {
    ad::Value total;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      ForwardOptions fwd;
      fwd.training = true;
      fwd.gumbel_noise = &noise[s];
      fwd.temperature = config.sampler.temperature;
      const ad::Value loss = net.forward(tape, store, batch[s], fwd).loss;
      total = s == 0 ? loss : ad::add(total, loss);
    }
    return ad::scale(total, 1.0 / static_cast<double>(batch.size()));
  };
  GradCheckOptions grad = options.grad;
  if (grad.seed == 0) grad.seed = mix_seed(options.seed, 500);
  return grad_check(objective, store, grad);
}

}  // namespace hdnet

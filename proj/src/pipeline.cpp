#include "mtu/pipeline.hpp"

#include <stdexcept>

#include "mtu/ops.hpp"

namespace mtu {

namespace {

template <typename T, typename Fn>
void visit_layers(const StackedModel<T>& model, Fn&& fn) {
  fn(std::string("structure_conv"), model.structure_conv);
  fn(std::string("pair_conv"), model.pair_conv);
  for (const auto& unit : model.units) {
    const std::string u = "unit" + std::to_string(unit.index) + ".";
    const auto& d = unit.detail;
    fn(u + "detail.input", d.input);
    fn(u + "detail.down1", d.down1);
    fn(u + "detail.down2", d.down2);
    for (std::size_t i = 0; i < d.blocks.size(); ++i) {
      const std::string b = u + "detail.block" + std::to_string(i + 1) + ".";
      fn(b + "first", d.blocks[i].first);
      fn(b + "second", d.blocks[i].second);
    }
    fn(u + "detail.up1", d.up1);
    fn(u + "detail.up2", d.up2);
    fn(u + "detail.output", d.output);
    fn(u + "deblur", unit.deblur);
    fn(u + "motion", unit.motion);
  }
}

template <typename T>
Var<T> frame_var(const Tensor<T>& frame) {
  return Var<T>(frame, false);
}

}  // namespace

template <typename T>
StackedModel<T> StackedModel<T>::create(const ModelConfig& cfg, std::uint64_t seed) {
  StackedModel model;
  model.config = validate_config(cfg);
  std::mt19937_64 rng(seed);
  const std::int64_t c = cfg.feature_channels;
  model.structure_conv = ConvLayer<T>::conv(3, c, 3, 1, rng, kLinearGain);
  model.pair_conv = ConvLayer<T>::conv(6, c, 3, 1, rng, kLinearGain);
  for (int n = 1; n <= cfg.num_stacks; ++n) model.units.push_back(build_unit<T>(n, c, rng));
  return model;
}

template <typename T>
std::vector<std::pair<std::string, Var<T>>> StackedModel<T>::named_parameters() const {
  std::vector<std::pair<std::string, Var<T>>> out;
  visit_layers(*this, [&](const std::string& name, const ConvLayer<T>& layer) {
    out.emplace_back(name + ".weight", layer.weight);
    out.emplace_back(name + ".bias", layer.bias);
  });
  return out;
}

template <typename T>
std::int64_t StackedModel<T>::parameter_count(bool inference_only) const {
  std::int64_t n = structure_conv.parameter_count() + pair_conv.parameter_count();
  for (const auto& unit : units) {
    n += unit.parameter_count();
    if (inference_only && unit.index != config.num_stacks) n -= unit.deblur.parameter_count();
  }
  return n;
}

template <typename T>
template <typename U>
StackedModel<U> StackedModel<T>::cast() const {
  auto out = StackedModel<U>::create(config, 0);
  auto src = named_parameters();
  auto dst = out.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].second.value() = src[i].second.value().template cast<U>();
  return out;
}

template <typename T>
StackedModel<T> StackedModel<T>::half_precision_copy() const {
  auto out = cast<T>();
  for (auto& [name, p] : out.named_parameters()) round_to_half_inplace(p.value());
  out.config.precision = Precision::half;
  return out;
}

template <typename T>
RecurrentState<T> init_state(const StackedModel<T>& model, const Tensor<T>& first_frame, bool half) {
  const auto& s = first_frame.shape();
  if (s.rank() != 3 || s.channels() != 3) throw ShapeError("init_state: expected a (3, H, W) frame, got " + s.str());
  const auto& cfg = model.config;
  RecurrentState<T> state;
  state.prev_blurry = first_frame;
  state.prev_restored = frame_var(first_frame);
  state.prev_final_detail = {Var<T>(Tensor<T>(Shape{cfg.feature_channels, s.height(), s.width()})), FeatureRole::detail};

  Var<T> structure = model.structure_conv(frame_var(first_frame));
  if (half) round_to_half_inplace(structure.value());
  for (const auto& unit : model.units) {
    state.prev_injected.push_back(
        {structure_inject(unit, state.prev_final_detail.values, structure, cfg, half), FeatureRole::structure_injected});
  }
  return state;
}

template <typename T>
StepResult<T> step(const StackedModel<T>& model, const RecurrentState<T>& state, const Tensor<T>& frame,
                   const StepOptions& opts) {
  const auto& cfg = model.config;
  const auto& s = frame.shape();
  if (s.rank() != 3 || s.channels() != 3) throw ShapeError("step: expected a (3, H, W) frame, got " + s.str());
  if (s.height() % cfg.motion_stride != 0 || s.width() % cfg.motion_stride != 0) {
    throw ShapeError("step: frame size " + s.str() + " is not a multiple of 4; pad the input first");
  }
  state.check(cfg, s.height(), s.width());
  const bool half = opts.half_activations;

  const Var<T> blurry = frame_var(frame);
  Var<T> structure = model.structure_conv(blurry);
  Var<T> pair = model.pair_conv(ops::concat_channels(frame_var(state.prev_blurry), state.prev_restored));
  if (half) {
    round_to_half_inplace(structure.value());
    round_to_half_inplace(pair.value());
  }

  StepResult<T> result;
  result.state.prev_blurry = frame;
  Var<T> first = structure;
  Var<T> second = pair;
  std::optional<DisplacementMap> shared_w;
  for (const auto& unit : model.units) {
    const std::size_t n = static_cast<std::size_t>(unit.index - 1);
    ForwardOptions fo;
    fo.half_activations = half;
    fo.compute_deblur_head = opts.all_heads || unit.index == cfg.num_stacks;
    fo.probe_alignment = opts.probe_alignment;
    const DisplacementMap* reuse = (cfg.skip_matching && shared_w) ? &*shared_w : nullptr;

    auto out = unit_forward(unit, first, second, structure, state.prev_injected[n].values,
                            state.prev_final_detail.values, blurry, cfg, reuse, fo);
    if (cfg.skip_matching && !shared_w && out.displacement) shared_w = out.displacement;

    result.state.prev_injected.push_back({out.injected, FeatureRole::structure_injected});
    result.stacks.push_back({out.restored, std::move(out.cost), std::move(out.displacement)});
    first = out.detail;
    second = out.warped;
    if (unit.index == cfg.num_stacks) {
      result.restored = out.restored;
      result.state.prev_final_detail = {out.detail, FeatureRole::detail};
    }
  }
  result.state.prev_restored = result.restored;
  return result;
}

void run_video_streaming(const StackedModel<float>& model, const FrameSource& source, const FrameSink& sink,
                         const VideoOptions& opts) {
  NoGradGuard no_grad;
  const bool half = opts.precision == Precision::half;
  const StackedModel<float> half_model = half ? model.half_precision_copy() : StackedModel<float>{};
  const StackedModel<float>& net = half ? half_model : model;

  StepOptions so;
  so.half_activations = half;
  so.probe_alignment = opts.probe_alignment;

  std::optional<RecurrentState<float>> state;
  std::size_t index = 0;
  std::int64_t h0 = 0;
  std::int64_t w0 = 0;
  while (auto frame = source()) {
    if (!state) {
      h0 = frame->height;
      w0 = frame->width;
    } else if (frame->height != h0 || frame->width != w0) {
      throw ShapeError("run_video: frame " + std::to_string(index) + " has a different size than the first frame");
    }
    auto input = pad_reflect_to_multiple(*frame, ModelConfig::kMotionStride).to_tensor<float>();
    if (half) round_to_half_inplace(input);
    if (!state) state = init_state(net, input, half);
    auto result = step(net, *state, input, so);
    state = std::move(result.state);

    std::optional<DisplacementMap> quarter;
    if (const auto& w = result.stacks.back().displacement) quarter = mc::downsample_displacement(*w, ModelConfig::kMotionStride);
    ImagePlane restored = ImagePlane::from_tensor(result.restored.value());
    if (restored.height != h0 || restored.width != w0) restored = crop(restored, 0, 0, h0, w0);
    sink(index++, std::move(restored), quarter);
  }
  if (index == 0) throw std::invalid_argument("run_video: empty frame sequence");
}

std::vector<ImagePlane> run_video(const StackedModel<float>& model, const std::vector<ImagePlane>& frames,
                                  const VideoOptions& opts) {
  if (frames.empty()) throw std::invalid_argument("run_video: empty frame sequence");
  std::size_t next = 0;
  std::vector<ImagePlane> out;
  out.reserve(frames.size());
  run_video_streaming(
      model, [&]() -> std::optional<ImagePlane> { return next < frames.size() ? std::optional(frames[next++]) : std::nullopt; },
      [&](std::size_t, ImagePlane img, const std::optional<DisplacementMap>&) { out.push_back(std::move(img)); }, opts);
  return out;
}

template struct StackedModel<float>;
template struct StackedModel<double>;
template StackedModel<double> StackedModel<float>::cast<double>() const;
template StackedModel<float> StackedModel<double>::cast<float>() const;

#define MTU_INSTANTIATE_PIPELINE(T)                                                                   \
  template RecurrentState<T> init_state<T>(const StackedModel<T>&, const Tensor<T>&, bool);           \
  template StepResult<T> step<T>(const StackedModel<T>&, const RecurrentState<T>&, const Tensor<T>&, \
                                 const StepOptions&);

MTU_INSTANTIATE_PIPELINE(float)
MTU_INSTANTIATE_PIPELINE(double)

}  // namespace mtu

#include "unidg/model.hpp"

#include <bit>
#include <cmath>
#include <random>
#include <string>

#include "unidg/error.hpp"

namespace unidg {

namespace {

void fill_uniform(std::span<double> out, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : out) v = dist(rng);
}

}  // namespace

std::vector<std::span<const double>> EncoderGrads::views(ParamSubset subset) const {
  std::vector<std::span<const double>> out;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    if (subset == ParamSubset::all) {
      out.emplace_back(weight[l].values());
      out.emplace_back(bias[l]);
    }
    if (l < gamma.size()) {
      out.emplace_back(gamma[l]);
      out.emplace_back(beta[l]);
    }
  }
  return out;
}

MlpEncoder::MlpEncoder(std::vector<DenseLayer> layers, std::vector<NormLayerState> norms)
    : layers_(std::move(layers)), norms_(std::move(norms)) {
  if (layers_.empty()) throw ConfigError("MlpEncoder: needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    if (L.bias.size() != L.weight.cols()) throw DimensionError("MlpEncoder: bias width mismatch");
    if (l > 0 && layers_[l - 1].weight.cols() != L.weight.rows()) {
      throw DimensionError("MlpEncoder: layer " + std::to_string(l) +
                           " input width does not match previous output");
    }
  }
  if (!norms_.empty()) {
    if (norms_.size() + 1 != layers_.size()) {
      throw DimensionError("MlpEncoder: expected one norm layer per hidden layer");
    }
    for (std::size_t l = 0; l < norms_.size(); ++l)
      if (norms_[l].width() != layers_[l].weight.cols())
        throw DimensionError("MlpEncoder: norm width mismatch at layer " + std::to_string(l));
  }
}

MlpEncoder MlpEncoder::initialized(const std::vector<std::size_t>& dims, bool with_norm,
                                   std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("MlpEncoder: need at least input and output dims");
  for (std::size_t d : dims)
    if (d == 0) throw ConfigError("MlpEncoder: layer dims must be positive");
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  std::vector<NormLayerState> norms;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer L{Tensor2(dims[l], dims[l + 1]), std::vector<double>(dims[l + 1])};
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    fill_uniform(L.weight.values(), bound, rng);
    fill_uniform(L.bias, bound, rng);
    layers.push_back(std::move(L));
    if (with_norm && l + 2 < dims.size()) norms.push_back(NormLayerState::identity(dims[l + 1]));
  }
  return MlpEncoder(std::move(layers), std::move(norms));
}

std::vector<std::size_t> MlpEncoder::dims() const {
  std::vector<std::size_t> d;
  if (layers_.empty()) return d;
  d.push_back(layers_.front().weight.rows());
  for (const auto& L : layers_) d.push_back(L.weight.cols());
  return d;
}

std::size_t MlpEncoder::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().weight.rows();
}

std::size_t MlpEncoder::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().weight.cols();
}

Tensor2 MlpEncoder::forward(const Tensor2& x, NormMode mode, EncoderTrace* trace) const {
  if (x.cols() != input_dim()) {
    throw DimensionError("encode: input has " + std::to_string(x.cols()) + " features, encoder expects " +
                         std::to_string(input_dim()));
  }
  if (trace != nullptr) {
    *trace = EncoderTrace{};
    trace->mode = mode;
  }
  Tensor2 h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    Tensor2 z = linear_forward(h, L.weight, L.bias);
    if (trace != nullptr) trace->inputs.push_back(std::move(h));
    if (l + 1 == layers_.size()) return z;
    if (has_norm()) {
      NormCache cache;
      z = batchnorm_apply(z, norms_[l], mode, trace != nullptr ? &cache : nullptr);
      if (trace != nullptr) trace->norms.push_back(std::move(cache));
    }
    h = relu_forward(z);
    if (trace != nullptr) trace->pre_activation.push_back(std::move(z));
  }
  return h;  // unreachable: layers_ is never empty
}

EncoderGrads MlpEncoder::backward(const EncoderTrace& trace, const Tensor2& upstream) const {
  if (trace.inputs.size() != layers_.size()) throw StateError("encoder backward: trace is incomplete");
  EncoderGrads g;
  const std::size_t n = layers_.size();
  g.weight.resize(n);
  g.bias.resize(n);
  g.gamma.resize(norms_.size());
  g.beta.resize(norms_.size());

  Tensor2 up = upstream;
  for (std::size_t l = n; l-- > 0;) {
    if (l + 1 < n) {
      up = relu_backward(trace.pre_activation[l], up);
      if (has_norm()) {
        auto bn = batchnorm_backward(norms_[l], trace.norms[l], up);
        g.gamma[l] = std::move(bn.gamma);
        g.beta[l] = std::move(bn.beta);
        up = std::move(bn.input);
      }
    }
    auto lg = linear_backward(trace.inputs[l], layers_[l].weight, up);
    g.weight[l] = std::move(lg.weight);
    g.bias[l] = std::move(lg.bias);
    up = std::move(lg.input);
  }
  g.input = std::move(up);
  return g;
}

void MlpEncoder::absorb_batch_statistics(const EncoderTrace& trace) {
  if (trace.mode != NormMode::batch) return;
  for (std::size_t l = 0; l < norms_.size() && l < trace.norms.size(); ++l)
    unidg::absorb_batch_statistics(norms_[l], trace.norms[l]);
}

std::vector<std::span<double>> MlpEncoder::parameters(ParamSubset subset) {
  std::vector<std::span<double>> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (subset == ParamSubset::all) {
      out.emplace_back(layers_[l].weight.values());
      out.emplace_back(layers_[l].bias);
    }
    if (l < norms_.size()) {
      out.emplace_back(norms_[l].gamma);
      out.emplace_back(norms_[l].beta);
    }
  }
  return out;
}

std::vector<std::span<const double>> MlpEncoder::parameters(ParamSubset subset) const {
  std::vector<std::span<const double>> out;
  for (auto s : const_cast<MlpEncoder*>(this)->parameters(subset)) out.emplace_back(s);
  return out;
}

std::size_t MlpEncoder::parameter_count(ParamSubset subset) const {
  std::size_t n = 0;
  for (auto s : parameters(subset)) n += s.size();
  return n;
}

Tensor2 encode(const MlpEncoder& encoder, const Tensor2& x, NormMode mode) {
  return encoder.forward(x, mode);
}

LinearClassifier::LinearClassifier(Tensor2 omega, std::vector<double> bias)
    : omega_(std::move(omega)), bias_(std::move(bias)) {
  if (omega_.cols() < 2) throw ConfigError("LinearClassifier: need at least 2 classes");
  if (bias_.size() != omega_.cols()) throw DimensionError("LinearClassifier: bias width mismatch");
}

LinearClassifier LinearClassifier::initialized(std::size_t feature_dim, std::size_t num_classes,
                                               std::uint64_t seed) {
  if (feature_dim == 0) throw ConfigError("LinearClassifier: feature dim must be positive");
  std::mt19937_64 rng(seed);
  Tensor2 w(feature_dim, num_classes);
  std::vector<double> b(num_classes);
  const double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  fill_uniform(w.values(), bound, rng);
  fill_uniform(b, bound, rng);
  return LinearClassifier(std::move(w), std::move(b));
}

Tensor2 LinearClassifier::logits(const Tensor2& features) const {
  return linear_forward(features, omega_, bias_);
}

LinearGrads LinearClassifier::backward(const Tensor2& features, const Tensor2& upstream) const {
  return linear_backward(features, omega_, upstream);
}

std::vector<std::span<double>> LinearClassifier::parameters() {
  return {std::span<double>(omega_.values()), std::span<double>(bias_)};
}

std::vector<std::span<const double>> LinearClassifier::parameters() const {
  return {std::span<const double>(omega_.values()), std::span<const double>(bias_)};
}

ModelPair::ModelPair(MlpEncoder enc, LinearClassifier cls)
    : source_encoder_(enc),
      source_classifier_(cls),
      adapted_encoder_(std::move(enc)),
      adapted_classifier_(std::move(cls)) {}

ModelPair ModelPair::clone_for_adaptation(const MlpEncoder& encoder,
                                          const LinearClassifier& classifier) {
  if (encoder.output_dim() != classifier.feature_dim()) {
    throw DimensionError("clone_for_adaptation: encoder emits " +
                         std::to_string(encoder.output_dim()) + " features, classifier expects " +
                         std::to_string(classifier.feature_dim()));
  }
  return ModelPair(encoder, classifier);
}

Tensor2 predict_probs(const MlpEncoder& encoder, const LinearClassifier& classifier,
                      const Tensor2& x, NormMode mode) {
  return softmax_rows(classifier.logits(encoder.forward(x, mode)));
}

Tensor2 predict_probs(const ModelPair& pair, const Tensor2& x, NormMode mode) {
  return predict_probs(pair.adapted_encoder(), pair.adapted_classifier(), x, mode);
}

namespace {

class Fnv1a {
 public:
  void mix(std::span<const double> values) {
    for (double v : values) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h_ ^= (bits >> (8 * b)) & 0xffu;
        h_ *= 1099511628211ull;
      }
    }
  }
  void mix(const MlpEncoder& encoder) {
    for (auto s : encoder.parameters()) mix(s);
    for (const auto& n : encoder.norms()) {
      mix(n.running_mean);
      mix(n.running_var);
    }
  }
  std::uint64_t value() const noexcept { return h_; }

 private:
  std::uint64_t h_ = 1469598103934665603ull;
};

}  // namespace

std::uint64_t fingerprint(const MlpEncoder& encoder) {
  Fnv1a h;
  h.mix(encoder);
  return h.value();
}

std::uint64_t fingerprint(const MlpEncoder& encoder, const LinearClassifier& classifier) {
  Fnv1a h;
  h.mix(encoder);
  for (auto s : classifier.parameters()) h.mix(s);
  return h.value();
}

}  // namespace unidg

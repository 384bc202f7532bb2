#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "unidg/layers.hpp"
#include "unidg/tensor.hpp"

namespace unidg {

enum class ParamSubset { all, norm_only };

struct DenseLayer {
  Tensor2 weight;  // din × dout
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Intermediate values of one encoder forward pass, kept for backward.
struct EncoderTrace {
  NormMode mode = NormMode::running;
  std::vector<Tensor2> inputs;          // input of each dense layer
  std::vector<Tensor2> pre_activation;  // hidden layers: value fed to the ReLU
  std::vector<NormCache> norms;         // hidden layers, when normalisation is enabled
};

struct EncoderGrads {
  std::vector<Tensor2> weight;
  std::vector<std::vector<double>> bias;
  std::vector<std::vector<double>> gamma;
  std::vector<std::vector<double>> beta;
  Tensor2 input;

  /// Same order as MlpEncoder::parameters(subset).
  std::vector<std::span<const double>> views(ParamSubset subset = ParamSubset::all) const;
};

/// ReLU MLP: dense layers of widths dims[0] → … → dims.back(); hidden layers
/// are dense → [batch norm] → ReLU, the output layer is a bare dense map.
class MlpEncoder {
 public:
  MlpEncoder() = default;
  MlpEncoder(std::vector<DenseLayer> layers, std::vector<NormLayerState> norms);

  /// Weights and biases uniform in ±1/√din per layer, drawn from `seed`.
  static MlpEncoder initialized(const std::vector<std::size_t>& dims, bool with_norm,
                                std::uint64_t seed);

  std::vector<std::size_t> dims() const;
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t num_layers() const noexcept { return layers_.size(); }
  bool has_norm() const noexcept { return !norms_.empty(); }

  Tensor2 forward(const Tensor2& x, NormMode mode = NormMode::running,
                  EncoderTrace* trace = nullptr) const;
  EncoderGrads backward(const EncoderTrace& trace, const Tensor2& upstream) const;

  /// Folds the batch statistics recorded in `trace` into the running averages.
  void absorb_batch_statistics(const EncoderTrace& trace);

  std::vector<std::span<double>> parameters(ParamSubset subset = ParamSubset::all);
  std::vector<std::span<const double>> parameters(ParamSubset subset = ParamSubset::all) const;
  std::size_t parameter_count(ParamSubset subset = ParamSubset::all) const;

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<NormLayerState>& norms() const noexcept { return norms_; }
  std::vector<NormLayerState>& norms() noexcept { return norms_; }

 private:
  std::vector<DenseLayer> layers_;
  std::vector<NormLayerState> norms_;
};

Tensor2 encode(const MlpEncoder& encoder, const Tensor2& x, NormMode mode = NormMode::running);

class LinearClassifier {
 public:
  LinearClassifier() = default;
  LinearClassifier(Tensor2 omega, std::vector<double> bias);

  static LinearClassifier initialized(std::size_t feature_dim, std::size_t num_classes,
                                      std::uint64_t seed);

  std::size_t feature_dim() const noexcept { return omega_.rows(); }
  std::size_t num_classes() const noexcept { return omega_.cols(); }

  Tensor2 logits(const Tensor2& features) const;
  LinearGrads backward(const Tensor2& features, const Tensor2& upstream) const;

  const Tensor2& omega() const noexcept { return omega_; }
  Tensor2& omega() noexcept { return omega_; }
  const std::vector<double>& bias() const noexcept { return bias_; }
  std::vector<double>& bias() noexcept { return bias_; }

  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  std::size_t parameter_count() const noexcept { return omega_.size() + bias_.size(); }

  friend bool operator==(const LinearClassifier&, const LinearClassifier&) = default;

 private:
  Tensor2 omega_;  // d × C, column j is ω^j
  std::vector<double> bias_;
};

/// Frozen source model plus a learnable copy. Only the adapted half is exposed
/// mutably; the source half can be read but never written after construction.
class ModelPair {
 public:
  static ModelPair clone_for_adaptation(const MlpEncoder& encoder,
                                        const LinearClassifier& classifier);

  const MlpEncoder& source_encoder() const noexcept { return source_encoder_; }
  const LinearClassifier& source_classifier() const noexcept { return source_classifier_; }
  MlpEncoder& adapted_encoder() noexcept { return adapted_encoder_; }
  const MlpEncoder& adapted_encoder() const noexcept { return adapted_encoder_; }
  LinearClassifier& adapted_classifier() noexcept { return adapted_classifier_; }
  const LinearClassifier& adapted_classifier() const noexcept { return adapted_classifier_; }

 private:
  ModelPair(MlpEncoder enc, LinearClassifier cls);

  MlpEncoder source_encoder_;
  LinearClassifier source_classifier_;
  MlpEncoder adapted_encoder_;
  LinearClassifier adapted_classifier_;
};

/// softmax(q′(f′(x))) from the adapted half.
Tensor2 predict_probs(const ModelPair& pair, const Tensor2& x, NormMode mode = NormMode::running);
Tensor2 predict_probs(const MlpEncoder& encoder, const LinearClassifier& classifier,
                      const Tensor2& x, NormMode mode = NormMode::running);

/// FNV-1a over the bit patterns of every parameter and running statistic.
std::uint64_t fingerprint(const MlpEncoder& encoder, const LinearClassifier& classifier);
std::uint64_t fingerprint(const MlpEncoder& encoder);

}  // namespace unidg

#include "unidg/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "unidg/error.hpp"
#include "unidg/layers.hpp"
#include "unidg/optimizer.hpp"
#include "unidg/train.hpp"

namespace unidg {

const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::none: return "none";
    case Method::entropy_norm: return "entropy_norm";
    case Method::pseudo_label: return "pseudo_label";
    case Method::unidg: return "unidg";
  }
  return "none";
}

Method parse_method(const std::string& text) {
  if (text == "none") return Method::none;
  if (text == "entropy_norm") return Method::entropy_norm;
  if (text == "pseudo_label") return Method::pseudo_label;
  if (text == "unidg") return Method::unidg;
  throw ConfigError("unknown method '" + text + "' (none|entropy_norm|pseudo_label|unidg)");
}

void AdaptConfig::validate() const {
  if (!(sigma >= 0.0)) throw ConfigError("adapt: sigma must be >= 0");
  if (!std::isfinite(lambda_weight) || lambda_weight < 0.0) throw ConfigError("adapt: lambda must be finite and >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("adapt: lr must be > 0");
  if (batch_size < 2) throw ConfigError("adapt: batch_size must be at least 2");
  if (top_k == 0) throw ConfigError("adapt: top_k must be positive");
  if (capacity == 0) throw ConfigError("adapt: capacity must be positive");
}

std::vector<std::size_t> predict_labels(const MlpEncoder& encoder, const LinearClassifier& classifier,
                                        const Tensor2& x, NormMode mode, std::size_t batch_size) {
  std::vector<std::size_t> out;
  out.reserve(x.rows());
  auto score = [&](const Tensor2& chunk, NormMode m) {
    const Tensor2 logits = classifier.logits(encoder.forward(chunk, m));
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      const auto row = logits.row(i);
      out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  };
  if (mode == NormMode::running || x.rows() < 2) {
    score(x, NormMode::running);
    return out;
  }
  std::size_t start = 0;
  while (start < x.rows()) {
    std::size_t stop = std::min(x.rows(), start + batch_size);
    if (x.rows() - stop < 2) stop = x.rows();
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    score(gather_rows(x, idx), NormMode::batch);
    start = stop;
  }
  return out;
}

namespace {

struct SourceScore {
  std::optional<double> pooled;
  std::map<std::string, double> by_domain;
};

SourceScore score_sources(const MlpEncoder& enc, const LinearClassifier& cls,
                          std::span<const DomainDataset> sets, NormMode mode, std::size_t batch_size) {
  SourceScore out;
  std::size_t hits = 0, total = 0;
  for (const auto& ds : sets) {
    const auto pred = predict_labels(enc, cls, ds.features, mode, batch_size);
    std::size_t h = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) h += pred[i] == ds.labels[i];
    out.by_domain[ds.domain_id] = ds.size() ? static_cast<double>(h) / static_cast<double>(ds.size()) : 0.0;
    hits += h;
    total += ds.size();
  }
  if (total > 0) out.pooled = static_cast<double>(hits) / static_cast<double>(total);
  return out;
}

// Collects parameter and gradient views of the adapted model in one order.
struct ParamGrads {
  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> grads;
};

void check_finite(const Tensor2& probs, std::size_t step) {
  if (!all_finite(probs)) throw NumericalError("non-finite prediction", step);
}

void check_finite(const LossReport& rep, const ParamGrads& pg, std::size_t step) {
  if (!std::isfinite(rep.total)) throw NumericalError("non-finite loss", step);
  for (auto g : pg.grads)
    if (!all_finite(g)) throw NumericalError("non-finite gradient", step);
}

class Stepper {
 public:
  Stepper(ModelPair& pair, const AdaptConfig& cfg)
      : pair_(pair), cfg_(cfg) {
    if (cfg.method == Method::unidg) {
      bank_ = MemoryBank::init_from_classifier(pair.adapted_classifier(), cfg.capacity, cfg.top_k);
    }
  }

  // Mode used to score a batch of `rows` before it is adapted on.
  NormMode predict_mode(std::size_t rows, bool adapting) const {
    return cfg_.method == Method::entropy_norm && adapting && rows >= 2 ? NormMode::batch
                                                                        : NormMode::running;
  }

  LossReport step(const Tensor2& x, std::size_t index) {
    switch (cfg_.method) {
      case Method::unidg: return unidg_step(x, index);
      case Method::entropy_norm: return entropy_norm_step(x, index);
      case Method::pseudo_label: return pseudo_label_step(x, index);
      case Method::none: break;
    }
    return base_report();
  }

  std::optional<MemoryBank> take_bank() { return std::move(bank_); }

 private:
  LossReport base_report() const {
    LossReport r;
    r.sigma = cfg_.sigma;
    r.lambda_weight = cfg_.lambda_weight;
    return r;
  }

  LossReport unidg_step(const Tensor2& x, std::size_t index) {
    MlpEncoder& enc = pair_.adapted_encoder();
    LinearClassifier& cls = pair_.adapted_classifier();
    LossReport rep = base_report();

    EncoderTrace trace;
    const Tensor2 feats = enc.forward(x, NormMode::running, &trace);
    Tensor2 probs = softmax_rows(cls.logits(feats));
    check_finite(probs, index);

    const bool use_bank = cfg_.enable_bank || cfg_.enable_refresh || cfg_.enable_li;
    PseudoLabels pl;
    if (use_bank) {
      pl = pseudo_label(probs);
      if (!cfg_.enable_bank) bank_->clear_supports();
      bank_->insert(feats, pl.labels, pl.entropies);
      bank_->compute_prototypes();
      if (cfg_.enable_refresh) {
        bank_->refresh(cls);
        probs = softmax_rows(cls.logits(feats));
        check_finite(probs, index);
      }
    }

    const bool any_loss = cfg_.enable_le || cfg_.enable_lm || cfg_.enable_li;
    if (!any_loss) return rep;

    const std::size_t n = x.rows();
    const std::size_t c = cls.num_classes();
    Tensor2 g_logits(n, c);
    Tensor2 g_feats(n, feats.cols());
    std::vector<std::vector<double>> g_proto;

    if (cfg_.enable_le) {
      const LossValue le = entropy_loss(probs);
      rep.l_e = le.value;
      g_logits = le.grad;
    }
    if (cfg_.enable_lm) {
      const Tensor2 src = pair_.source_encoder().forward(x, NormMode::running);
      const LossValue lm = marginal_loss(feats, src, cfg_.sigma);
      rep.l_m = lm.value;
      g_feats += cfg_.lambda_weight * lm.grad;
    }
    if (cfg_.enable_li) {
      std::vector<std::vector<double>> protos;
      if (cfg_.enable_refresh) {
        for (std::size_t j = 0; j < c; ++j) protos.push_back(cls.omega().column(j));
      } else {
        protos = bank_->prototypes();
      }
      const MemoryTermValue li = memory_term_loss(feats, protos, pl.labels);
      rep.l_i = li.value;
      g_feats += li.grad_features;
      if (cfg_.enable_refresh) g_proto = li.grad_prototypes;
    }
    rep.total = combined_loss(rep.l_e, rep.l_m, rep.l_i, cfg_.lambda_weight, cfg_.enable_li);

    LinearGrads cg = cls.backward(feats, g_logits);
    g_feats += cg.input;
    for (std::size_t j = 0; j < g_proto.size(); ++j) {
      if (g_proto[j].empty()) continue;
      for (std::size_t k = 0; k < cg.weight.rows(); ++k) cg.weight(k, j) += g_proto[j][k];
    }
    const EncoderGrads eg = enc.backward(trace, g_feats);

    ParamGrads pg{enc.parameters(), eg.views()};
    for (auto p : cls.parameters()) pg.params.push_back(p);
    pg.grads.emplace_back(cg.weight.values());
    pg.grads.emplace_back(cg.bias);
    check_finite(rep, pg, index);
    adam_step(pg.params, pg.grads, adam_, cfg_.lr);
    return rep;
  }

  LossReport entropy_norm_step(const Tensor2& x, std::size_t index) {
    MlpEncoder& enc = pair_.adapted_encoder();
    const LinearClassifier& cls = pair_.adapted_classifier();
    LossReport rep = base_report();

    EncoderTrace trace;
    const Tensor2 feats = enc.forward(x, NormMode::batch, &trace);
    const Tensor2 probs = softmax_rows(cls.logits(feats));
    check_finite(probs, index);
    const LossValue le = entropy_loss(probs);
    rep.l_e = le.value;
    rep.total = le.value;
    const LinearGrads cg = cls.backward(feats, le.grad);
    const EncoderGrads eg = enc.backward(trace, cg.input);

    ParamGrads pg{enc.parameters(ParamSubset::norm_only), eg.views(ParamSubset::norm_only)};
    check_finite(rep, pg, index);
    adam_step(pg.params, pg.grads, adam_, cfg_.lr);
    return rep;
  }

  LossReport pseudo_label_step(const Tensor2& x, std::size_t index) {
    MlpEncoder& enc = pair_.adapted_encoder();
    LinearClassifier& cls = pair_.adapted_classifier();
    LossReport rep = base_report();

    EncoderTrace trace;
    const Tensor2 feats = enc.forward(x, NormMode::running, &trace);
    const Tensor2 logits = cls.logits(feats);
    const Tensor2 probs = softmax_rows(logits);
    check_finite(probs, index);
    const PseudoLabels pl = pseudo_label(probs);
    const LossValue ce = cross_entropy_from_logits(logits, pl.labels);
    rep.l_ce = ce.value;
    rep.total = ce.value;
    const LinearGrads cg = cls.backward(feats, ce.grad);
    const EncoderGrads eg = enc.backward(trace, cg.input);

    ParamGrads pg{enc.parameters(), eg.views()};
    for (auto p : cls.parameters()) pg.params.push_back(p);
    pg.grads.emplace_back(cg.weight.values());
    pg.grads.emplace_back(cg.bias);
    check_finite(rep, pg, index);
    adam_step(pg.params, pg.grads, adam_, cfg_.lr);
    return rep;
  }

  ModelPair& pair_;
  const AdaptConfig& cfg_;
  AdamState adam_;
  std::optional<MemoryBank> bank_;
};

AdaptResult drive(ModelPair pair, const DomainDataset& target, const AdaptConfig& cfg,
                  std::span<const DomainDataset> source_eval) {
  cfg.validate();
  const std::size_t classes = pair.adapted_classifier().num_classes();
  validate(target, classes);
  if (target.input_dim() != pair.adapted_encoder().input_dim()) {
    throw DimensionError("adapt: target has " + std::to_string(target.input_dim()) +
                         " features, model expects " + std::to_string(pair.adapted_encoder().input_dim()));
  }
  for (const auto& s : source_eval) {
    validate(s, classes);
    if (s.input_dim() != target.input_dim()) throw DimensionError("adapt: source eval width mismatch");
  }

  const std::size_t n = target.size();
  const std::size_t b = cfg.batch_size;
  std::size_t per_pass = 0;
  for (std::size_t start = 0; start < n; start += b) per_pass += std::min(b, n - start) >= 2;
  const std::size_t budget = cfg.method == Method::none ? 0 : cfg.steps.value_or(per_pass);

  AdaptResult result{pair, {}, {}, std::nullopt, 0};
  const SourceScore before = score_sources(pair.source_encoder(), pair.source_classifier(), source_eval,
                                           NormMode::running, b);
  result.curve.source_before = before.pooled;
  result.curve.source_before_by_domain = before.by_domain;

  Stepper stepper(result.pair, cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::size_t hits = 0, seen = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> by_domain;

  for (std::size_t pass = 0; pass == 0 || (result.steps_taken < budget && per_pass > 0); ++pass) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += b) {
      const std::size_t stop = std::min(n, start + b);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Tensor2 x = gather_rows(target.features, idx);
      const bool adapting = result.steps_taken < budget && idx.size() >= 2;

      // Score first; the update below only affects later batches.
      const auto pred = predict_labels(result.pair.adapted_encoder(), result.pair.adapted_classifier(), x,
                                       stepper.predict_mode(idx.size(), budget > 0), b);
      std::size_t h = 0;
      for (std::size_t i = 0; i < idx.size(); ++i) h += pred[i] == target.labels[idx[i]];
      hits += h;
      seen += idx.size();
      auto& dom = by_domain[target.domain_id];
      dom.first += h;
      dom.second += idx.size();
      result.curve.cumulative.push_back(static_cast<double>(hits) / static_cast<double>(seen));

      if (adapting) {
        result.losses.push_back(stepper.step(x, result.steps_taken));
        ++result.steps_taken;
      }
    }
  }

  result.curve.final_accuracy = seen ? static_cast<double>(hits) / static_cast<double>(seen) : 0.0;
  for (const auto& [id, hs] : by_domain)
    result.curve.per_domain[id] = static_cast<double>(hs.first) / static_cast<double>(hs.second);
  const NormMode after_mode = stepper.predict_mode(b, budget > 0);
  const SourceScore after = score_sources(result.pair.adapted_encoder(), result.pair.adapted_classifier(),
                                          source_eval, after_mode, b);
  result.curve.source_after = after.pooled;
  result.curve.source_after_by_domain = after.by_domain;
  result.bank = stepper.take_bank();
  return result;
}

}  // namespace

AdaptResult adapt_stream(ModelPair pair, const DomainDataset& target, const AdaptConfig& cfg,
                         std::span<const DomainDataset> source_eval) {
  AdaptConfig c = cfg;
  c.method = Method::unidg;
  return drive(std::move(pair), target, c, source_eval);
}

AdaptResult adapt_entropy_norm(ModelPair pair, const DomainDataset& target, const AdaptConfig& cfg,
                               std::span<const DomainDataset> source_eval) {
  if (!pair.adapted_encoder().has_norm()) {
    throw ConfigError("entropy_norm: the encoder has no normalisation layers");
  }
  AdaptConfig c = cfg;
  c.method = Method::entropy_norm;
  return drive(std::move(pair), target, c, source_eval);
}

AdaptResult adapt_pseudo_label(ModelPair pair, const DomainDataset& target, const AdaptConfig& cfg,
                               std::span<const DomainDataset> source_eval) {
  AdaptConfig c = cfg;
  c.method = Method::pseudo_label;
  return drive(std::move(pair), target, c, source_eval);
}

AdaptResult run_adaptation(ModelPair pair, const DomainDataset& target, const AdaptConfig& cfg,
                           std::span<const DomainDataset> source_eval) {
  switch (cfg.method) {
    case Method::unidg: return adapt_stream(std::move(pair), target, cfg, source_eval);
    case Method::entropy_norm: return adapt_entropy_norm(std::move(pair), target, cfg, source_eval);
    case Method::pseudo_label: return adapt_pseudo_label(std::move(pair), target, cfg, source_eval);
    case Method::none: break;
  }
  AdaptConfig c = cfg;
  c.method = Method::none;
  return drive(std::move(pair), target, c, source_eval);
}

}  // namespace unidg

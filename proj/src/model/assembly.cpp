#include "cdanet/model/assembly.hpp"

#include <algorithm>
#include <cmath>

#include "cdanet/data/random.hpp"
#include "cdanet/error.hpp"

namespace cdanet {
namespace {

constexpr double kEmbeddingInitScale = 0.05;

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += '|';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::size_t> widths(std::size_t in, const std::vector<std::size_t>& hidden,
                                std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

}  // namespace

std::string_view to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

std::string_view to_string(ExtractorKind kind) {
  switch (kind) {
    case ExtractorKind::indep_mlp: return "indep_mlp";
    case ExtractorKind::shared_mlp: return "shared_mlp";
    case ExtractorKind::mmoe: return "mmoe";
    case ExtractorKind::ple: return "ple";
  }
  return "?";
}

ExtractorKind parse_extractor_kind(std::string_view text) {
  for (auto k : {ExtractorKind::indep_mlp, ExtractorKind::shared_mlp, ExtractorKind::mmoe,
                 ExtractorKind::ple}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown extractor kind '" + std::string(text) +
                    "' (expected indep_mlp, shared_mlp, mmoe or ple)");
}

std::string_view to_string(Stage stage) {
  return stage == Stage::translation ? "translation" : "augmentation";
}

void ModelConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("model.latent_dim must be >= 1");
  if (emb_dim < 1) throw ConfigError("model.emb_dim must be >= 1");
  for (auto w : extractor.hidden)
    if (w < 1) throw ConfigError("model.hidden widths must be >= 1");
  for (auto w : tower_hidden)
    if (w < 1) throw ConfigError("model.tower_hidden widths must be >= 1");
  if (extractor.kind == ExtractorKind::mmoe && extractor.n_experts < 1) {
    throw ConfigError("model.n_experts must be >= 1 for mmoe");
  }
  if (extractor.kind == ExtractorKind::ple &&
      extractor.n_experts + extractor.n_private_experts < 1) {
    throw ConfigError("ple needs at least one shared or private expert");
  }
}

std::string ModelConfig::describe() const {
  return "extractor=" + std::string(to_string(extractor.kind)) +
         ";hidden=" + join(extractor.hidden) +
         ";n_experts=" + std::to_string(extractor.n_experts) +
         ";n_private_experts=" + std::to_string(extractor.n_private_experts) +
         ";adapter_width=" + std::to_string(extractor.adapter_width) +
         ";latent_dim=" + std::to_string(latent_dim) +
         ";emb_dim=" + std::to_string(emb_dim) +
         ";tower_hidden=" + join(tower_hidden);
}

ModelAssembly ModelAssembly::build(const Schema& source, const Schema& target,
                                   const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  check_overlap_compatible(source, target);
  ModelAssembly m;
  m.config_ = config;
  const ExtractorConfig& ex = config.extractor;
  const std::size_t d = config.latent_dim;
  std::array<std::size_t, 2> input_width{};

  for (Domain dom : {Domain::source, Domain::target}) {
    DomainNet& net = m.domain(dom);
    net.schema = dom == Domain::source ? source : target;
    const std::string prefix(to_string(dom));
    for (const FieldSpec& f : net.schema.fields()) {
      const std::string name =
          (f.overlapped ? std::string("shared") : prefix) + ".embedding." + f.name;
      FieldEmbedding fe;
      if (f.kind == FieldKind::dense) {
        if (auto w = m.params_.index_of(name + ".weight")) {
          fe.table = *w;
          fe.bias = m.params_.index_of(name + ".bias");
        } else {
          const Linear proj = make_linear(m.params_, seed, name, f.dense_dim, config.emb_dim);
          fe.table = proj.weight;
          fe.bias = proj.bias;
        }
      } else if (auto t = m.params_.index_of(name)) {
        fe.table = *t;
      } else {
        Rng rng(derive_seed(seed, name));
        fe.table = m.params_.add(
            name, uniform_matrix(rng, f.vocab_size, config.emb_dim, kEmbeddingInitScale));
      }
      net.fields.push_back(fe);
    }
    std::size_t width = net.schema.size() * config.emb_dim;
    if (ex.adapter_width > 0) {
      net.adapter = make_linear(m.params_, seed, prefix + ".adapter", width, ex.adapter_width);
      width = ex.adapter_width;
    }
    input_width[static_cast<int>(dom)] = width;
  }

  if (ex.kind != ExtractorKind::indep_mlp && input_width[0] != input_width[1]) {
    throw ConfigError("shared extractor components need equal input widths, got " +
                      std::to_string(input_width[0]) + " and " +
                      std::to_string(input_width[1]) + "; set model.adapter_width");
  }
  const std::size_t in = input_width[0];
  switch (ex.kind) {
    case ExtractorKind::indep_mlp:
      for (Domain dom : {Domain::source, Domain::target}) {
        const auto w = widths(input_width[static_cast<int>(dom)], ex.hidden, d);
        m.domain(dom).private_mlp =
            make_mlp(m.params_, seed, std::string(to_string(dom)) + ".extractor", w, true);
      }
      break;
    case ExtractorKind::shared_mlp: {
      const auto w = widths(in, ex.hidden, d);
      m.shared_mlp_ = make_mlp(m.params_, seed, "shared.extractor", w, true);
      break;
    }
    case ExtractorKind::mmoe:
    case ExtractorKind::ple: {
      const auto w = widths(in, ex.hidden, d);
      for (std::size_t j = 0; j < ex.n_experts; ++j) {
        m.shared_experts_.push_back(
            make_mlp(m.params_, seed, "shared.expert" + std::to_string(j), w, true));
      }
      const std::size_t n_private = ex.kind == ExtractorKind::ple ? ex.n_private_experts : 0;
      for (Domain dom : {Domain::source, Domain::target}) {
        const std::string prefix(to_string(dom));
        DomainNet& net = m.domain(dom);
        for (std::size_t j = 0; j < n_private; ++j) {
          net.private_experts.push_back(
              make_mlp(m.params_, seed, prefix + ".expert" + std::to_string(j), w, true));
        }
        net.gate = make_linear(m.params_, seed, prefix + ".gate", in,
                               n_private + ex.n_experts);
      }
      break;
    }
  }

  for (Domain dom : {Domain::source, Domain::target}) {
    m.domain(dom).translator =
        m.params_.add(std::string(to_string(dom)) + ".translator", Tensor::identity(d));
  }
  return m;
}

ModelAssembly ModelAssembly::create(const Schema& source, const Schema& target,
                                    const ModelConfig& config, std::uint64_t seed) {
  ModelAssembly m = build(source, target, config, seed);
  m.stage_ = Stage::translation;
  const auto w = widths(config.latent_dim, config.tower_hidden, 1);
  for (Domain dom : {Domain::source, Domain::target}) {
    m.domain(dom).tower =
        make_mlp(m.params_, seed, std::string(to_string(dom)) + ".tower", w, false);
  }
  return m;
}

ModelAssembly ModelAssembly::create_augmentation(const Schema& source, const Schema& target,
                                                 const ModelConfig& config,
                                                 std::uint64_t seed, Domain augmented) {
  ModelAssembly m = build(source, target, config, seed);
  m.stage_ = Stage::augmentation;
  m.augmented_ = augmented;
  const auto w = widths(2 * config.latent_dim, config.tower_hidden, 1);
  m.augmented_tower_ =
      make_mlp(m.params_, seed, std::string(to_string(augmented)) + ".aug_tower", w, false);
  return m;
}

std::size_t ModelAssembly::embedding_width(Domain d) const {
  return domain(d).schema.size() * config_.emb_dim;
}

std::uint64_t ModelAssembly::fingerprint() const {
  std::string text = config_.describe();
  text += ";stage=" + std::string(to_string(stage_));
  if (stage_ == Stage::augmentation) text += ";augmented=" + std::string(to_string(augmented_));
  for (const auto& net : domains_) text += "\n" + net.schema.serialize();
  for (const auto& p : params_) text += "\n" + p.name + shape_to_string(p.tensor.shape());
  return fnv1a64(text);
}

Var ModelAssembly::embed(Tape& tape, Domain d, const Dataset& data,
                         std::span<const std::size_t> rows) const {
  const DomainNet& net = domain(d);
  if (!(data.schema() == net.schema)) {
    throw DataError("dataset schema '" + data.schema().domain_name() +
                    "' does not match the model's " + std::string(to_string(d)) + " schema");
  }
  data.note_access();
  const std::size_t n = rows.size();
  std::vector<Var> parts;
  parts.reserve(net.fields.size());
  std::vector<std::size_t> indices, offsets;
  for (std::size_t f = 0; f < net.fields.size(); ++f) {
    const FieldSpec& spec = net.schema.field(f);
    const FieldEmbedding& fe = net.fields[f];
    Var table = tape.leaf(params_.tensor(fe.table));
    switch (spec.kind) {
      case FieldKind::id:
      case FieldKind::one_hot:
        indices.resize(n);
        for (std::size_t i = 0; i < n; ++i)
          indices[i] = std::get<std::size_t>(data[rows[i]].values[f]);
        parts.push_back(ad::gather_rows(table, indices, spec.name));
        break;
      case FieldKind::multi_hot:
        indices.clear();
        offsets.assign(1, 0);
        for (std::size_t i = 0; i < n; ++i) {
          const auto& bag = std::get<std::vector<std::size_t>>(data[rows[i]].values[f]);
          indices.insert(indices.end(), bag.begin(), bag.end());
          offsets.push_back(indices.size());
        }
        parts.push_back(ad::gather_mean(table, offsets, indices, spec.name));
        break;
      case FieldKind::dense: {
        Tensor x({n, spec.dense_dim});
        for (std::size_t i = 0; i < n; ++i) {
          const auto& v = std::get<std::vector<double>>(data[rows[i]].values[f]);
          std::copy(v.begin(), v.end(), x.values().begin() + i * spec.dense_dim);
        }
        parts.push_back(ad::add_bias(ad::matmul(tape.constant(std::move(x)), table),
                                     tape.leaf(params_.tensor(*fe.bias))));
        break;
      }
    }
  }
  return ad::concat(parts);
}

Var ModelAssembly::extract(Tape& tape, Domain d, Var embedded) const {
  const DomainNet& net = domain(d);
  if (embedded.cols() != embedding_width(d)) {
    throw DimensionError("extract(" + std::string(to_string(d)) + "): expected width " +
                         std::to_string(embedding_width(d)) + ", got " +
                         shape_to_string(embedded.shape()));
  }
  Var x = embedded;
  if (net.adapter) x = ad::relu(apply(tape, params_, *net.adapter, x));
  switch (config_.extractor.kind) {
    case ExtractorKind::indep_mlp:
      return apply(tape, params_, *net.private_mlp, x);
    case ExtractorKind::shared_mlp:
      return apply(tape, params_, *shared_mlp_, x);
    case ExtractorKind::mmoe:
    case ExtractorKind::ple: {
      std::vector<Var> experts;
      for (const Mlp& e : net.private_experts) experts.push_back(apply(tape, params_, e, x));
      for (const Mlp& e : shared_experts_) experts.push_back(apply(tape, params_, e, x));
      Var gates = ad::softmax_rows(apply(tape, params_, *net.gate, x));
      return ad::gated_sum(gates, experts);
    }
  }
  throw ContractError("unknown extractor kind");
}

Var ModelAssembly::translator(Tape& tape, Domain d) const {
  return tape.leaf(params_.tensor(domain(d).translator));
}

Var ModelAssembly::translate(Tape& tape, Domain d, Var z) const {
  return ad::matmul(z, ad::transpose(translator(tape, d)));
}

Var ModelAssembly::tower_logit(Tape& tape, Domain d, Var z) const {
  const DomainNet& net = domain(d);
  if (!net.tower) {
    throw ContractError("the augmentation-stage model has no " + std::string(to_string(d)) +
                        " stage-1 tower");
  }
  if (z.cols() != config_.latent_dim) {
    throw DimensionError("tower expects width " + std::to_string(config_.latent_dim) +
                         ", got " + shape_to_string(z.shape()));
  }
  return apply(tape, params_, *net.tower, z);
}

Var ModelAssembly::augmented_logit(Tape& tape, Var augmented) const {
  if (!augmented_tower_) {
    throw ContractError("the translation-stage model has no augmented tower of width " +
                        std::to_string(2 * config_.latent_dim));
  }
  if (augmented.cols() != 2 * config_.latent_dim) {
    throw DimensionError("augmented tower expects width " +
                         std::to_string(2 * config_.latent_dim) + ", got " +
                         shape_to_string(augmented.shape()));
  }
  return apply(tape, params_, *augmented_tower_, augmented);
}

Var ModelAssembly::augmented_features(Tape& tape, Var z) const {
  if (mask_translated_) {
    return augment(z, tape.constant(Tensor({z.rows(), z.cols()})));
  }
  return augment(z, translate(tape, augmented_, z));
}

Var ModelAssembly::latent(Tape& tape, Domain d, const Dataset& data,
                          std::span<const std::size_t> rows) const {
  return extract(tape, d, embed(tape, d, data, rows));
}

Var augment(Var z, Var translated) {
  if (z.cols() != translated.cols() || z.rows() != translated.rows()) {
    throw DimensionError("augment: " + shape_to_string(z.shape()) + " vs " +
                         shape_to_string(translated.shape()));
  }
  return ad::concat(z, translated);
}

std::vector<double> predict_logits(const ModelAssembly& model, Domain d, const Dataset& data,
                                   Stage path, std::size_t chunk) {
  if (path == Stage::augmentation && model.stage() == Stage::augmentation &&
      d != model.augmented_domain()) {
    throw ContractError("the augmented tower belongs to the " +
                        std::string(to_string(model.augmented_domain())) + " domain");
  }
  std::vector<double> scores;
  scores.reserve(data.size());
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    rows.resize(end - start);
    for (std::size_t i = start; i < end; ++i) rows[i - start] = i;
    Tape tape(false);
    Var z = model.latent(tape, d, data, rows);
    Var logits = path == Stage::translation
                     ? model.tower_logit(tape, d, z)
                     : model.augmented_logit(tape, model.augmented_features(tape, z));
    for (double v : logits.value().values()) scores.push_back(v);
  }
  return scores;
}

std::vector<double> predict(const ModelAssembly& model, Domain d, const Dataset& data,
                            Stage path, std::size_t chunk) {
  std::vector<double> p = predict_logits(model, d, data, path, chunk);
  for (double& v : p) v = 1.0 / (1.0 + std::exp(-v));
  return p;
}

}  // namespace cdanet

#include "cdanet/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cdanet/data/random.hpp"
#include "cdanet/error.hpp"

namespace cdanet {
namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, std::vector<double>(cols));
  for (auto& row : m)
    for (double& v : row) v = scale * rng.normal();
  return m;
}

std::vector<double> project(const Matrix& p, const std::vector<double>& x) {
  std::vector<double> out(p.size(), 0.0);
  for (std::size_t r = 0; r < p.size(); ++r)
    for (std::size_t c = 0; c < x.size(); ++c) out[r] += p[r][c] * x[c];
  return out;
}

std::size_t bucket_of(double x, double sd, std::size_t buckets) {
  const double cdf = 0.5 * std::erfc(-x / (sd * std::sqrt(2.0)));
  const auto b = static_cast<std::size_t>(std::floor(cdf * static_cast<double>(buckets)));
  return std::min(b, buckets - 1);
}

struct DomainView {
  Matrix user_obs;  // per user
  Matrix item_obs;  // per item
};

DomainView observe(const SyntheticConfig& cfg, const std::string& domain,
                   const Matrix& users, const Matrix& items) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  Rng proj_rng(derive_seed(cfg.seed, "projection/" + domain));
  const Matrix pu = normal_matrix(proj_rng, cfg.user_feature_dim, cfg.latent_dim, scale);
  const Matrix pv = normal_matrix(proj_rng, cfg.item_feature_dim, cfg.latent_dim, scale);
  Rng noise_rng(derive_seed(cfg.seed, "noise/" + domain));
  DomainView view;
  for (const auto& u : users) {
    auto obs = project(pu, u);
    for (double& v : obs) v += cfg.feature_noise_sigma * noise_rng.normal();
    view.user_obs.push_back(std::move(obs));
  }
  for (const auto& v : items) {
    auto obs = project(pv, v);
    for (double& x : obs) x += cfg.feature_noise_sigma * noise_rng.normal();
    view.item_obs.push_back(std::move(obs));
  }
  return view;
}

Dataset make_domain(const SyntheticConfig& cfg, const std::string& domain,
                    const Matrix& users, const Matrix& items,
                    const std::vector<std::size_t>& eligible_users) {
  const DomainView view = observe(cfg, domain, users, items);
  const double sd = std::sqrt(1.0 + cfg.feature_noise_sigma * cfg.feature_noise_sigma);
  Rng rng(derive_seed(cfg.seed, "examples/" + domain));
  std::vector<Example> examples;
  examples.reserve(cfg.n_examples);
  for (std::size_t i = 0; i < cfg.n_examples; ++i) {
    const std::size_t user = eligible_users[rng.below(eligible_users.size())];
    const std::size_t item = static_cast<std::size_t>(rng.below(cfg.n_items));
    const double p = click_probability(users[user], items[item], cfg.label_bias);
    Example ex;
    ex.label = rng.bernoulli(p) ? 1 : 0;
    ex.timestamp = static_cast<std::int64_t>(i);
    ex.values.emplace_back(user);
    ex.values.emplace_back(item);
    for (double x : view.user_obs[user]) ex.values.emplace_back(bucket_of(x, sd, cfg.bucket_count));
    for (double x : view.item_obs[item]) ex.values.emplace_back(bucket_of(x, sd, cfg.bucket_count));
    std::vector<double> dense = view.user_obs[user];
    dense.insert(dense.end(), view.item_obs[item].begin(), view.item_obs[item].end());
    ex.values.emplace_back(std::move(dense));
    examples.push_back(std::move(ex));
  }
  return Dataset(synthetic_schema(cfg, domain), std::move(examples));
}

}  // namespace

void SyntheticConfig::validate() const {
  if (latent_dim < 1 || n_users < 1 || n_items < 1 || bucket_count < 1 ||
      n_examples < 1 || user_feature_dim < 1 || item_feature_dim < 1) {
    throw ConfigError("synthetic: all counts must be >= 1");
  }
  if (!(overlap_user_fraction >= 0.0 && overlap_user_fraction <= 1.0)) {
    throw ConfigError("synthetic: overlap_user_fraction must be in [0, 1]");
  }
  if (!(feature_noise_sigma >= 0.0)) {
    throw ConfigError("synthetic: feature_noise_sigma must be >= 0");
  }
  if (!std::isfinite(label_bias)) throw ConfigError("synthetic: label_bias must be finite");
}

bool Correspondence::injective() const {
  std::vector<std::size_t> sorted = target_to_source;
  std::sort(sorted.begin(), sorted.end());
  return std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
}

std::string Correspondence::to_csv() const {
  std::string out = "target_item,source_item\n";
  for (std::size_t j = 0; j < target_to_source.size(); ++j) {
    out += std::to_string(j) + "," + std::to_string(target_to_source[j]) + "\n";
  }
  return out;
}

Correspondence Correspondence::parse_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::getline(in, line);
  Correspondence c;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t t = 0, s = 0;
    char comma = 0;
    std::istringstream row(line);
    if (!(row >> t >> comma >> s) || comma != ',') {
      throw DataError("correspondence line " + std::to_string(line_no) + ": malformed");
    }
    if (t != c.target_to_source.size()) {
      throw DataError("correspondence line " + std::to_string(line_no) +
                      ": target items must be listed in order");
    }
    c.target_to_source.push_back(s);
  }
  if (!c.injective()) throw DataError("correspondence is not injective");
  return c;
}

Correspondence Correspondence::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

Schema synthetic_schema(const SyntheticConfig& cfg, const std::string& domain) {
  std::vector<FieldSpec> fields;
  fields.push_back({kUserField, FieldKind::id, cfg.n_users, 0, true});
  fields.push_back({kItemField, FieldKind::id, cfg.n_items, 0, false});
  for (std::size_t c = 0; c < cfg.user_feature_dim; ++c)
    fields.push_back({"user_bucket_" + std::to_string(c), FieldKind::one_hot,
                      cfg.bucket_count, 0, false});
  for (std::size_t c = 0; c < cfg.item_feature_dim; ++c)
    fields.push_back({"item_bucket_" + std::to_string(c), FieldKind::one_hot,
                      cfg.bucket_count, 0, false});
  fields.push_back({"profile", FieldKind::dense, 0,
                    cfg.user_feature_dim + cfg.item_feature_dim, false});
  return Schema(domain, std::move(fields));
}

double click_probability(const std::vector<double>& user,
                         const std::vector<double>& item, double label_bias) {
  double a = label_bias;
  for (std::size_t i = 0; i < user.size(); ++i) a += user[i] * item[i];
  return 1.0 / (1.0 + std::exp(-a));
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticData out;

  Rng user_rng(derive_seed(cfg.seed, "users"));
  out.user_latents = normal_matrix(user_rng, cfg.n_users, cfg.latent_dim, 1.0);
  Rng item_rng(derive_seed(cfg.seed, "items"));
  out.source_item_latents = normal_matrix(item_rng, cfg.n_items, cfg.latent_dim, 1.0);

  Rng corr_rng(derive_seed(cfg.seed, "correspondence"));
  out.correspondence.target_to_source.resize(cfg.n_items);
  std::iota(out.correspondence.target_to_source.begin(),
            out.correspondence.target_to_source.end(), 0);
  corr_rng.shuffle(std::span<std::size_t>(out.correspondence.target_to_source));
  for (std::size_t j = 0; j < cfg.n_items; ++j) {
    out.target_item_latents.push_back(
        out.source_item_latents[out.correspondence.target_to_source[j]]);
  }

  // Shared users first, then the rest alternate between the domains.
  Rng assign_rng(derive_seed(cfg.seed, "user_assignment"));
  std::vector<std::size_t> order(cfg.n_users);
  std::iota(order.begin(), order.end(), 0);
  assign_rng.shuffle(std::span<std::size_t>(order));
  const auto shared = static_cast<std::size_t>(
      std::floor(cfg.overlap_user_fraction * static_cast<double>(cfg.n_users)));
  for (std::size_t i = 0; i < cfg.n_users; ++i) {
    if (i < shared) {
      out.source_users.push_back(order[i]);
      out.target_users.push_back(order[i]);
    } else if ((i - shared) % 2 == 0) {
      out.source_users.push_back(order[i]);
    } else {
      out.target_users.push_back(order[i]);
    }
  }
  if (out.source_users.empty() || out.target_users.empty()) {
    throw ConfigError("synthetic: each domain needs at least one user");
  }
  std::sort(out.source_users.begin(), out.source_users.end());
  std::sort(out.target_users.begin(), out.target_users.end());

  out.source = make_domain(cfg, "source", out.user_latents,
                           out.source_item_latents, out.source_users);
  out.target = make_domain(cfg, "target", out.user_latents,
                           out.target_item_latents, out.target_users);
  return out;
}

}  // namespace cdanet

#include "cdanet/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "cdanet/error.hpp"

namespace cdanet {
namespace {

namespace fs = std::filesystem;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

/// Thrown by value parsers; the caller adds the key path and line.
struct BadValue {
  std::string expected;
};

std::uint64_t to_uint(std::string_view v) {
  std::uint64_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size()) {
    throw BadValue{"a non-negative integer"};
  }
  return out;
}

std::size_t to_size(std::string_view v) { return static_cast<std::size_t>(to_uint(v)); }

double to_double(std::string_view v) {
  double out = 0.0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size() || !std::isfinite(out)) {
    throw BadValue{"a finite number"};
  }
  return out;
}

bool to_bool(std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw BadValue{"true or false"};
}

template <typename T, typename F>
std::vector<T> to_list(std::string_view v, F item) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(item(trim(v.substr(start, comma - start))));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += fmt(items[i]);
  }
  return out;
}

std::string num(double v) { return format_number(v); }
std::string num(std::uint64_t v) { return std::to_string(v); }
std::string flag(bool v) { return v ? "true" : "false"; }
std::string sizes(const std::vector<std::size_t>& v) {
  return join(v, [](std::size_t x) { return std::to_string(x); });
}

template <typename E, typename P>
E parse_enum(std::string_view v, P parse) {
  try {
    return parse(v);
  } catch (const ConfigError& e) {
    throw BadValue{e.what()};
  }
}

struct Binding {
  std::string_view key;  // section.name, or name for top-level keys
  std::function<void(ExperimentConfig&, std::string_view)> set;
  /// Empty when the key is absent from the dump.
  std::function<std::optional<std::string>(const ExperimentConfig&)> get;
};

SyntheticConfig& synth(ExperimentConfig& c) { return *c.data.synthetic; }
CsvSource& csv(ExperimentConfig& c) { return *c.data.csv; }

template <typename Get>
auto when_synthetic(Get get) {
  return [get](const ExperimentConfig& c) -> std::optional<std::string> {
    if (!c.data.synthetic) return std::nullopt;
    return get(*c.data.synthetic);
  };
}

template <typename Get>
auto when_csv(Get get) {
  return [get](const ExperimentConfig& c) -> std::optional<std::string> {
    if (!c.data.csv) return std::nullopt;
    return get(*c.data.csv);
  };
}

const std::vector<Binding>& bindings() {
  using C = ExperimentConfig;
  using SV = std::string_view;
  static const std::vector<Binding> table = {
      {"seed", [](C& c, SV v) { c.seed = to_uint(v); }, [](const C& c) { return num(c.seed); }},
      {"seeds",
       [](C& c, SV v) { c.seeds = to_list<std::uint64_t>(v, to_uint); },
       [](const C& c) { return join(c.seeds, [](std::uint64_t s) { return num(s); }); }},
      {"output_dir", [](C& c, SV v) { c.output_dir = fs::path(v); },
       [](const C& c) { return c.output_dir.string(); }},

      {"data.train_ratio", [](C& c, SV v) { c.data.train_ratio = to_double(v); },
       [](const C& c) { return num(c.data.train_ratio); }},
      {"data.val_ratio", [](C& c, SV v) { c.data.val_ratio = to_double(v); },
       [](const C& c) { return num(c.data.val_ratio); }},
      {"data.test_ratio", [](C& c, SV v) { c.data.test_ratio = to_double(v); },
       [](const C& c) { return num(c.data.test_ratio); }},

      {"synthetic.latent_dim", [](C& c, SV v) { synth(c).latent_dim = to_size(v); },
       when_synthetic([](const SyntheticConfig& s) { return num(s.latent_dim); })},
      {"synthetic.n_users", [](C& c, SV v) { synth(c).n_users = to_size(v); },
       when_synthetic([](const SyntheticConfig& s) { return num(s.n_users); })},
      {"synthetic.n_items", [](C& c, SV v) { synth(c).n_items = to_size(v); },
       when_synthetic([](const SyntheticConfig& s) { return num(s.n_items); })},
      {"synthetic.n_examples", [](C& c, SV v) { synth(c).n_examples = to_size(v); },
       when_synthetic([](const SyntheticConfig& s) { return num(s.n_examples); })},
      {"synthetic.overlap_user_fraction",
       [](C& c, SV v) { synth(c).overlap_user_fraction = to_double(v); },
       when_synthetic([](const SyntheticConfig& s) { return num(s.overlap_user_fraction); })},
      {"synthetic.feature_noise_sigma",
       [](C& c, SV v) { synth(c).feature_noise_sigma = to_double(v); },
       when_synthetic([](const SyntheticConfig& s) { return num(s.feature_noise_sigma); })},
      {"synthetic.bucket_count", [](C& c, SV v) { synth(c).bucket_count = to_size(v); },
       when_synthetic([](const SyntheticConfig& s) { return num(s.bucket_count); })},
      {"synthetic.label_bias", [](C& c, SV v) { synth(c).label_bias = to_double(v); },
       when_synthetic([](const SyntheticConfig& s) { return num(s.label_bias); })},
      {"synthetic.user_feature_dim", [](C& c, SV v) { synth(c).user_feature_dim = to_size(v); },
       when_synthetic([](const SyntheticConfig& s) { return num(s.user_feature_dim); })},
      {"synthetic.item_feature_dim", [](C& c, SV v) { synth(c).item_feature_dim = to_size(v); },
       when_synthetic([](const SyntheticConfig& s) { return num(s.item_feature_dim); })},

      {"csv.source_data", [](C& c, SV v) { csv(c).source_data = fs::path(v); },
       when_csv([](const CsvSource& s) { return s.source_data.string(); })},
      {"csv.source_schema", [](C& c, SV v) { csv(c).source_schema = fs::path(v); },
       when_csv([](const CsvSource& s) { return s.source_schema.string(); })},
      {"csv.target_data", [](C& c, SV v) { csv(c).target_data = fs::path(v); },
       when_csv([](const CsvSource& s) { return s.target_data.string(); })},
      {"csv.target_schema", [](C& c, SV v) { csv(c).target_schema = fs::path(v); },
       when_csv([](const CsvSource& s) { return s.target_schema.string(); })},
      {"csv.correspondence", [](C& c, SV v) { csv(c).correspondence = fs::path(v); },
       [](const C& c) -> std::optional<std::string> {
         if (!c.data.csv || !c.data.csv->correspondence) return std::nullopt;
         return c.data.csv->correspondence->string();
       }},
      {"csv.label_threshold", [](C& c, SV v) { csv(c).label_threshold = to_double(v); },
       [](const C& c) -> std::optional<std::string> {
         if (!c.data.csv || !c.data.csv->label_threshold) return std::nullopt;
         return num(*c.data.csv->label_threshold);
       }},

      {"model.extractor",
       [](C& c, SV v) {
         c.pipeline.train.model.extractor.kind =
             parse_enum<ExtractorKind>(v, parse_extractor_kind);
       },
       [](const C& c) { return std::string(to_string(c.pipeline.train.model.extractor.kind)); }},
      {"model.hidden",
       [](C& c, SV v) { c.pipeline.train.model.extractor.hidden = to_list<std::size_t>(v, to_size); },
       [](const C& c) { return sizes(c.pipeline.train.model.extractor.hidden); }},
      {"model.n_experts",
       [](C& c, SV v) { c.pipeline.train.model.extractor.n_experts = to_size(v); },
       [](const C& c) { return num(c.pipeline.train.model.extractor.n_experts); }},
      {"model.n_private_experts",
       [](C& c, SV v) { c.pipeline.train.model.extractor.n_private_experts = to_size(v); },
       [](const C& c) { return num(c.pipeline.train.model.extractor.n_private_experts); }},
      {"model.adapter_width",
       [](C& c, SV v) { c.pipeline.train.model.extractor.adapter_width = to_size(v); },
       [](const C& c) { return num(c.pipeline.train.model.extractor.adapter_width); }},
      {"model.latent_dim", [](C& c, SV v) { c.pipeline.train.model.latent_dim = to_size(v); },
       [](const C& c) { return num(c.pipeline.train.model.latent_dim); }},
      {"model.emb_dim", [](C& c, SV v) { c.pipeline.train.model.emb_dim = to_size(v); },
       [](const C& c) { return num(c.pipeline.train.model.emb_dim); }},
      {"model.tower_hidden",
       [](C& c, SV v) { c.pipeline.train.model.tower_hidden = to_list<std::size_t>(v, to_size); },
       [](const C& c) { return sizes(c.pipeline.train.model.tower_hidden); }},

      {"train.alpha", [](C& c, SV v) { c.pipeline.train.alpha = to_double(v); },
       [](const C& c) { return num(c.pipeline.train.alpha); }},
      {"train.beta", [](C& c, SV v) { c.pipeline.train.beta = to_double(v); },
       [](const C& c) { return num(c.pipeline.train.beta); }},
      {"train.lr", [](C& c, SV v) { c.pipeline.train.lr = to_double(v); },
       [](const C& c) { return num(c.pipeline.train.lr); }},
      {"train.batch_size", [](C& c, SV v) { c.pipeline.train.batch_size = to_size(v); },
       [](const C& c) { return num(c.pipeline.train.batch_size); }},
      {"train.max_epochs", [](C& c, SV v) { c.pipeline.train.max_epochs = to_size(v); },
       [](const C& c) { return num(c.pipeline.train.max_epochs); }},
      {"train.patience", [](C& c, SV v) { c.pipeline.train.patience = to_size(v); },
       [](const C& c) { return num(c.pipeline.train.patience); }},
      {"train.eval_every", [](C& c, SV v) { c.pipeline.train.eval_every = to_size(v); },
       [](const C& c) { return num(c.pipeline.train.eval_every); }},
      {"train.adam_beta1", [](C& c, SV v) { c.pipeline.train.adam.beta1 = to_double(v); },
       [](const C& c) { return num(c.pipeline.train.adam.beta1); }},
      {"train.adam_beta2", [](C& c, SV v) { c.pipeline.train.adam.beta2 = to_double(v); },
       [](const C& c) { return num(c.pipeline.train.adam.beta2); }},
      {"train.adam_eps", [](C& c, SV v) { c.pipeline.train.adam.eps = to_double(v); },
       [](const C& c) { return num(c.pipeline.train.adam.eps); }},

      // The dump writes the effective values, so a dumped config pins them.
      {"augmentation.lr", [](C& c, SV v) { c.pipeline.augmentation.lr = to_double(v); },
       [](const C& c) { return num(c.pipeline.augmentation_config().lr); }},
      {"augmentation.eval_every",
       [](C& c, SV v) { c.pipeline.augmentation.eval_every = to_size(v); },
       [](const C& c) { return num(c.pipeline.augmentation_config().eval_every); }},
      {"augmentation.patience", [](C& c, SV v) { c.pipeline.augmentation.patience = to_size(v); },
       [](const C& c) { return num(c.pipeline.augmentation_config().patience); }},
      {"augmentation.max_epochs",
       [](C& c, SV v) { c.pipeline.augmentation.max_epochs = to_size(v); },
       [](const C& c) { return num(c.pipeline.augmentation_config().max_epochs); }},

      {"eval.k", [](C& c, SV v) { c.eval.neighbors.k = to_size(v); },
       [](const C& c) { return num(c.eval.neighbors.k); }},
      {"eval.metric",
       [](C& c, SV v) {
         c.eval.neighbors.metric = parse_enum<NeighborMetric>(v, parse_neighbor_metric);
       },
       [](const C& c) { return std::string(to_string(c.eval.neighbors.metric)); }},
      {"eval.max_queries", [](C& c, SV v) { c.eval.neighbors.max_queries = to_size(v); },
       [](const C& c) { return num(c.eval.neighbors.max_queries); }},
      {"eval.item_field", [](C& c, SV v) { c.eval.neighbors.item_field = std::string(v); },
       [](const C& c) { return c.eval.neighbors.item_field; }},
      {"eval.variants",
       [](C& c, SV v) {
         c.eval.variants = to_list<Variant>(v, [](SV x) { return parse_enum<Variant>(x, parse_variant); });
       },
       [](const C& c) {
         return join(c.eval.variants, [](Variant x) { return std::string(to_string(x)); });
       }},
      {"eval.baselines",
       [](C& c, SV v) {
         c.eval.baselines =
             to_list<Baseline>(v, [](SV x) { return parse_enum<Baseline>(x, parse_baseline); });
       },
       [](const C& c) {
         return join(c.eval.baselines, [](Baseline x) { return std::string(to_string(x)); });
       }},
      {"eval.ratios", [](C& c, SV v) { c.eval.ratios = to_list<double>(v, to_double); },
       [](const C& c) { return join(c.eval.ratios, [](double x) { return num(x); }); }},
      {"eval.sparsity_mlp", [](C& c, SV v) { c.eval.sparsity_mlp = to_bool(v); },
       [](const C& c) { return flag(c.eval.sparsity_mlp); }},
      {"eval.alphas", [](C& c, SV v) { c.eval.alphas = to_list<double>(v, to_double); },
       [](const C& c) { return join(c.eval.alphas, [](double x) { return num(x); }); }},
      {"eval.betas", [](C& c, SV v) { c.eval.betas = to_list<double>(v, to_double); },
       [](const C& c) { return join(c.eval.betas, [](double x) { return num(x); }); }},
  };
  return table;
}

const std::set<std::string, std::less<>> kSections = {
    "data", "synthetic", "csv", "model", "train", "augmentation", "eval"};

std::string_view section_of(std::string_view key) {
  const auto dot = key.find('.');
  return dot == std::string_view::npos ? std::string_view{} : key.substr(0, dot);
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

void require_file(const fs::path& p, std::string_view key) {
  if (!fs::is_regular_file(p)) {
    throw ConfigError(std::string(key) + ": file not found: " + p.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(std::string_view text, const std::string& origin,
                                         const fs::path& base_dir) {
  ExperimentConfig cfg;
  std::string section;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!kSections.count(section)) throw ConfigError(where + "unknown section '" + section + "'");
      if (!seen.insert("[" + section + "]").second) {
        throw ConfigError(where + "section '" + section + "' appears twice");
      }
      if (section == "synthetic") cfg.data.synthetic.emplace();
      if (section == "csv") cfg.data.csv.emplace();
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string_view name = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const std::string key = section.empty() ? std::string(name) : section + "." + std::string(name);
    const auto& table = bindings();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Binding& b) { return b.key == key; });
    if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' set twice");
    try {
      it->set(cfg, value);
    } catch (const BadValue& bad) {
      throw ConfigError(where + key + ": expected " + bad.expected + ", got '" +
                        std::string(value) + "'");
    }
  }

  if (cfg.data.csv) {
    CsvSource& c = *cfg.data.csv;
    for (fs::path* p : {&c.source_data, &c.source_schema, &c.target_data, &c.target_schema}) {
      if (!p->empty()) *p = resolve(base_dir, *p);
    }
    if (c.correspondence) c.correspondence = resolve(base_dir, *c.correspondence);
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path();
  return parse(read_file(path), path.string(), base);
}

std::string ExperimentConfig::dump() const {
  std::string out;
  std::string_view current;
  bool first = true;
  for (const Binding& b : bindings()) {
    const auto value = b.get(*this);
    if (!value) continue;
    const std::string_view section = section_of(b.key);
    if (first || section != current) {
      if (!section.empty()) out += (first ? "" : "\n") + ("[" + std::string(section) + "]\n");
      current = section;
      first = false;
    }
    const std::string_view name = section.empty() ? b.key : b.key.substr(section.size() + 1);
    out += std::string(name) + " = " + *value + "\n";
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (data.synthetic.has_value() == data.csv.has_value()) {
    throw ConfigError("data: exactly one of the [synthetic] and [csv] sections is required");
  }
  if (data.synthetic) data.synthetic->validate();
  if (data.csv) {
    const CsvSource& c = *data.csv;
    require_file(c.source_data, "csv.source_data");
    require_file(c.source_schema, "csv.source_schema");
    require_file(c.target_data, "csv.target_data");
    require_file(c.target_schema, "csv.target_schema");
    if (c.correspondence) require_file(*c.correspondence, "csv.correspondence");
  }
  const double ratios[] = {data.train_ratio, data.val_ratio, data.test_ratio};
  double total = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("data: split ratios must be > 0");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("data: split ratios must sum to 1");
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  pipeline.validate();
  if (eval.neighbors.k < 1) throw ConfigError("eval.k must be >= 1");
  if (eval.neighbors.item_field.empty()) throw ConfigError("eval.item_field must be set");
}

PipelineConfig ExperimentConfig::pipeline_for(std::uint64_t run_seed) const {
  PipelineConfig out = pipeline;
  out.train.seed = run_seed;
  return out;
}

RawBenchmark load_raw(const DataSection& data, std::uint64_t seed) {
  if (data.synthetic) {
    SyntheticConfig c = *data.synthetic;
    c.seed = generator_seed(seed);
    SyntheticData d = generate_synthetic(c);
    return {std::move(d.source), std::move(d.target), std::move(d.correspondence)};
  }
  if (!data.csv) throw ConfigError("data: no data source configured");
  const CsvSource& c = *data.csv;
  CsvOptions options;
  options.label_threshold = c.label_threshold;
  const Schema source_schema = Schema::load("source", c.source_schema);
  const Schema target_schema = Schema::load("target", c.target_schema);
  check_overlap_compatible(source_schema, target_schema);
  RawBenchmark out{load_csv(source_schema, c.source_data, options),
                   load_csv(target_schema, c.target_data, options), std::nullopt};
  if (c.correspondence) out.correspondence = Correspondence::load(*c.correspondence);
  return out;
}

BenchmarkData load_benchmark(const DataSection& data, std::uint64_t seed) {
  RawBenchmark raw = load_raw(data, seed);
  return {chronological_split(raw.source, data.train_ratio, data.val_ratio, data.test_ratio),
          chronological_split(raw.target, data.train_ratio, data.val_ratio, data.test_ratio),
          std::move(raw.correspondence)};
}

}  // namespace cdanet

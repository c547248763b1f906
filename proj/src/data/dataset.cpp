#include "cdanet/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "cdanet/data/random.hpp"
#include "cdanet/error.hpp"

namespace cdanet {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

[[noreturn]] void data_error(std::size_t line, const std::string& msg) {
  throw DataError("line " + std::to_string(line) + ": " + msg);
}

}  // namespace

std::string_view to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::id:
      return "id";
    case FieldKind::one_hot:
      return "one_hot";
    case FieldKind::multi_hot:
      return "multi_hot";
    case FieldKind::dense:
      return "dense";
  }
  return "unknown";
}

FieldKind parse_field_kind(std::string_view text) {
  if (text == "id") return FieldKind::id;
  if (text == "one_hot") return FieldKind::one_hot;
  if (text == "multi_hot") return FieldKind::multi_hot;
  if (text == "dense") return FieldKind::dense;
  throw DataError("unknown field kind '" + std::string(text) + "'");
}

std::size_t FieldSpec::encoded_width() const {
  return categorical() ? vocab_size : dense_dim;
}

Schema::Schema(std::string domain_name, std::vector<FieldSpec> fields)
    : domain_name_(std::move(domain_name)), fields_(std::move(fields)) {
  std::set<std::string> seen;
  for (const auto& f : fields_) {
    if (f.name.empty()) throw DataError("schema: empty field name");
    if (!seen.insert(f.name).second) {
      throw DataError("schema '" + domain_name_ + "': duplicate field '" +
                      f.name + "'");
    }
    if (f.categorical() && f.vocab_size < 1) {
      throw DataError("schema: field '" + f.name + "' needs vocab_size >= 1");
    }
    if (!f.categorical() && f.dense_dim < 1) {
      throw DataError("schema: dense field '" + f.name + "' needs dense_dim >= 1");
    }
    if (f.name == "ts" || f.name == "label") {
      throw DataError("schema: field name '" + f.name + "' is reserved");
    }
  }
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < fields_.size(); ++i)
    if (fields_[i].name == name) return i;
  return std::nullopt;
}

std::size_t Schema::input_dim() const {
  std::size_t total = 0;
  for (const auto& f : fields_) total += f.encoded_width();
  return total;
}

Schema Schema::parse(std::string domain_name, std::string_view text) {
  std::vector<FieldSpec> fields;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto parts = split(line, ',');
    if (parts.size() != 4) {
      data_error(line_no, "schema line needs name,kind,size,overlapped");
    }
    FieldSpec f;
    f.name = trim(parts[0]);
    try {
      f.kind = parse_field_kind(trim(parts[1]));
    } catch (const DataError& e) {
      data_error(line_no, e.what());
    }
    std::size_t size = 0;
    if (!parse_number(parts[2], size)) data_error(line_no, "bad size '" + parts[2] + "'");
    (f.categorical() ? f.vocab_size : f.dense_dim) = size;
    const std::string ov = trim(parts[3]);
    if (ov == "1" || ov == "true") {
      f.overlapped = true;
    } else if (ov == "0" || ov == "false") {
      f.overlapped = false;
    } else {
      data_error(line_no, "bad overlapped flag '" + ov + "'");
    }
    fields.push_back(std::move(f));
  }
  return Schema(std::move(domain_name), std::move(fields));
}

Schema Schema::load(std::string domain_name, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(std::move(domain_name), ss.str());
}

std::string Schema::serialize() const {
  std::string out;
  for (const auto& f : fields_) {
    out += f.name + "," + std::string(to_string(f.kind)) + "," +
           std::to_string(f.encoded_width()) + "," + (f.overlapped ? "1" : "0") +
           "\n";
  }
  return out;
}

void check_overlap_compatible(const Schema& a, const Schema& b) {
  for (const auto& fa : a.fields()) {
    const auto j = b.index_of(fa.name);
    if (!fa.overlapped) {
      if (j && b.field(*j).overlapped) {
        throw DataError("field '" + fa.name + "' is overlapped in '" +
                        b.domain_name() + "' but not in '" + a.domain_name() + "'");
      }
      continue;
    }
    if (!j) {
      throw DataError("overlapped field '" + fa.name + "' missing from '" +
                      b.domain_name() + "'");
    }
    if (!(b.field(*j) == fa)) {
      throw DataError("overlapped field '" + fa.name +
                      "' differs between domains");
    }
  }
  for (const auto& fb : b.fields()) {
    if (fb.overlapped && !a.index_of(fb.name)) {
      throw DataError("overlapped field '" + fb.name + "' missing from '" +
                      a.domain_name() + "'");
    }
  }
}

Dataset::Dataset(Schema schema, std::vector<Example> examples)
    : schema_(std::move(schema)), examples_(std::move(examples)) {}

Dataset::Dataset(const Dataset& other)
    : schema_(other.schema_), examples_(other.examples_) {}

Dataset& Dataset::operator=(const Dataset& other) {
  schema_ = other.schema_;
  examples_ = other.examples_;
  accesses_.store(0);
  return *this;
}

Dataset::Dataset(Dataset&& other) noexcept
    : schema_(std::move(other.schema_)), examples_(std::move(other.examples_)) {}

Dataset& Dataset::operator=(Dataset&& other) noexcept {
  schema_ = std::move(other.schema_);
  examples_ = std::move(other.examples_);
  accesses_.store(0);
  return *this;
}

double Dataset::positive_rate() const {
  if (examples_.empty()) return 0.0;
  std::size_t pos = 0;
  for (const auto& e : examples_) pos += e.label == 1;
  return static_cast<double>(pos) / static_cast<double>(examples_.size());
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<Example> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(examples_.at(r));
  return Dataset(schema_, std::move(out));
}

void validate(const Dataset& data) {
  const Schema& schema = data.schema();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Example& ex = data[i];
    const std::string where = "example " + std::to_string(i);
    if (ex.values.size() != schema.size()) {
      throw DataError(where + ": expected " + std::to_string(schema.size()) +
                      " field values, got " + std::to_string(ex.values.size()));
    }
    if (ex.label != 0 && ex.label != 1) {
      throw DataError(where + ": label must be 0 or 1");
    }
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const FieldSpec& spec = schema.field(f);
      const FieldValue& v = ex.values[f];
      const std::string fw = where + ", field '" + spec.name + "'";
      switch (spec.kind) {
        case FieldKind::id:
        case FieldKind::one_hot: {
          const auto* idx = std::get_if<std::size_t>(&v);
          if (!idx) throw DataError(fw + ": expected a single index");
          if (*idx >= spec.vocab_size) throw DataError(fw + ": index out of range");
          break;
        }
        case FieldKind::multi_hot: {
          const auto* set = std::get_if<std::vector<std::size_t>>(&v);
          if (!set || set->empty()) throw DataError(fw + ": expected a non-empty index set");
          for (std::size_t idx : *set)
            if (idx >= spec.vocab_size) throw DataError(fw + ": index out of range");
          break;
        }
        case FieldKind::dense: {
          const auto* vec = std::get_if<std::vector<double>>(&v);
          if (!vec || vec->size() != spec.dense_dim) {
            throw DataError(fw + ": expected " + std::to_string(spec.dense_dim) +
                            " dense values");
          }
          break;
        }
      }
    }
  }
}

Dataset parse_csv(const Schema& schema, std::string_view text,
                  const CsvOptions& options) {
  auto lines = split(text, '\n');
  if (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) data_error(1, "missing header row");

  const auto header = split(lines[0], ',');
  std::optional<std::size_t> ts_col, label_col;
  std::vector<std::optional<std::size_t>> field_col(schema.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = trim(header[c]);
    if (name == "ts") {
      ts_col = c;
    } else if (name == "label") {
      label_col = c;
    } else if (auto f = schema.index_of(name)) {
      field_col[*f] = c;
    } else {
      data_error(1, "unknown field '" + name + "'");
    }
  }
  if (!ts_col) data_error(1, "missing 'ts' column");
  if (!label_col) data_error(1, "missing 'label' column");
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (!field_col[f]) data_error(1, "missing field '" + schema.field(f).name + "'");
  }

  std::vector<Example> examples;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    const auto cells = split(lines[li], ',');
    if (cells.size() != header.size()) {
      data_error(line_no, "expected " + std::to_string(header.size()) +
                              " columns, got " + std::to_string(cells.size()));
    }
    Example ex;
    if (!parse_number(cells[*ts_col], ex.timestamp)) {
      data_error(line_no, "bad timestamp '" + cells[*ts_col] + "'");
    }
    double raw_label = 0.0;
    if (!parse_number(cells[*label_col], raw_label)) {
      data_error(line_no, "bad label '" + cells[*label_col] + "'");
    }
    if (options.label_threshold) {
      ex.label = raw_label > *options.label_threshold ? 1 : 0;
    } else if (raw_label == 0.0 || raw_label == 1.0) {
      ex.label = static_cast<int>(raw_label);
    } else {
      data_error(line_no, "label '" + cells[*label_col] + "' is not 0 or 1");
    }
    ex.values.reserve(schema.size());
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const FieldSpec& spec = schema.field(f);
      const std::string& cell = cells[*field_col[f]];
      const std::string where = "field '" + spec.name + "'";
      switch (spec.kind) {
        case FieldKind::id:
        case FieldKind::one_hot: {
          std::size_t idx = 0;
          if (!parse_number(cell, idx)) data_error(line_no, where + ": bad index '" + cell + "'");
          if (idx >= spec.vocab_size) {
            data_error(line_no, where + ": index " + std::to_string(idx) +
                                    " >= vocab_size " + std::to_string(spec.vocab_size));
          }
          ex.values.emplace_back(idx);
          break;
        }
        case FieldKind::multi_hot: {
          std::vector<std::size_t> set;
          for (const auto& part : split(cell, '|')) {
            std::size_t idx = 0;
            if (!parse_number(part, idx)) data_error(line_no, where + ": bad index '" + part + "'");
            if (idx >= spec.vocab_size) {
              data_error(line_no, where + ": index " + std::to_string(idx) +
                                      " >= vocab_size " + std::to_string(spec.vocab_size));
            }
            set.push_back(idx);
          }
          ex.values.emplace_back(std::move(set));
          break;
        }
        case FieldKind::dense: {
          std::vector<double> vec;
          for (const auto& part : split(cell, '|')) {
            double v = 0.0;
            if (!parse_number(part, v) || !std::isfinite(v)) {
              data_error(line_no, where + ": bad value '" + part + "'");
            }
            vec.push_back(v);
          }
          if (vec.size() != spec.dense_dim) {
            data_error(line_no, where + ": expected " + std::to_string(spec.dense_dim) +
                                    " values, got " + std::to_string(vec.size()));
          }
          ex.values.emplace_back(std::move(vec));
          break;
        }
      }
    }
    examples.push_back(std::move(ex));
  }
  return Dataset(schema, std::move(examples));
}

Dataset load_csv(const Schema& schema, const std::filesystem::path& path,
                 const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(schema, ss.str(), options);
}

std::string to_csv(const Dataset& data) {
  std::string out = "ts,label";
  for (const auto& f : data.schema().fields()) out += "," + f.name;
  out += "\n";
  for (const Example& ex : data.examples()) {
    out += std::to_string(ex.timestamp) + "," + std::to_string(ex.label);
    for (const FieldValue& v : ex.values) {
      out += ",";
      if (const auto* idx = std::get_if<std::size_t>(&v)) {
        out += std::to_string(*idx);
      } else if (const auto* set = std::get_if<std::vector<std::size_t>>(&v)) {
        for (std::size_t i = 0; i < set->size(); ++i) {
          if (i) out += "|";
          out += std::to_string((*set)[i]);
        }
      } else {
        const auto& vec = std::get<std::vector<double>>(v);
        for (std::size_t i = 0; i < vec.size(); ++i) {
          if (i) out += "|";
          out += format_double(vec[i]);
        }
      }
    }
    out += "\n";
  }
  return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_csv(data);
}

std::array<std::size_t, 3> split_sizes(std::size_t n, double train_ratio,
                                       double val_ratio, double test_ratio) {
  const double ratios[3] = {train_ratio, val_ratio, test_ratio};
  double total = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw ContractError("split ratios must be positive");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractError("split ratios must sum to 1");
  }
  // Floor every split; the remainder goes to train.
  std::array<std::size_t, 3> sizes{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    sizes[i] = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[i]));
    assigned += sizes[i];
  }
  sizes[0] += n - assigned;
  return sizes;
}

Splits chronological_split(const Dataset& data, double train_ratio,
                           double val_ratio, double test_ratio) {
  if (data.empty()) throw DataError("cannot split an empty dataset");
  const auto sizes = split_sizes(data.size(), train_ratio, val_ratio, test_ratio);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data[a].timestamp < data[b].timestamp;
  });
  const std::span<const std::size_t> all(order);
  Splits out;
  out.train = data.subset(all.subspan(0, sizes[0]));
  out.val = data.subset(all.subspan(sizes[0], sizes[1]));
  out.test = data.subset(all.subspan(sizes[0] + sizes[1], sizes[2]));
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n,
                                                   std::size_t batch_size,
                                                   std::uint64_t shuffle_seed,
                                                   std::uint64_t epoch) {
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(shuffle_seed, "epoch", epoch));
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Dataset subsample_train(const Dataset& data, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw ContractError("subsample ratio must be in (0, 1]");
  }
  const std::size_t n = data.size();
  const auto keep = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "subsample"));
  // Partial Fisher-Yates: the first `keep` slots form a uniform sample.
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return data.subset(idx);
}

}  // namespace cdanet

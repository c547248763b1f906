#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cdanet {

enum class FieldKind { id, one_hot, multi_hot, dense };

std::string_view to_string(FieldKind kind);
FieldKind parse_field_kind(std::string_view text);

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::one_hot;
  std::size_t vocab_size = 0;  // categorical kinds
  std::size_t dense_dim = 0;   // dense only
  bool overlapped = false;

  bool categorical() const { return kind != FieldKind::dense; }
  /// Width of the field in the raw encoded input (vocab or dense dim).
  std::size_t encoded_width() const;
  bool operator==(const FieldSpec&) const = default;
};

/// Ordered feature fields of one domain.
class Schema {
 public:
  Schema() = default;
  Schema(std::string domain_name, std::vector<FieldSpec> fields);

  const std::string& domain_name() const { return domain_name_; }
  const std::vector<FieldSpec>& fields() const { return fields_; }
  std::size_t size() const { return fields_.size(); }
  const FieldSpec& field(std::size_t i) const { return fields_[i]; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  /// Total encoded input width F of the domain.
  std::size_t input_dim() const;

  /// One field per line: `name,kind,vocab_size|dense_dim,overlapped`.
  static Schema parse(std::string domain_name, std::string_view text);
  static Schema load(std::string domain_name, const std::filesystem::path& path);
  std::string serialize() const;

  bool operator==(const Schema&) const = default;

 private:
  std::string domain_name_;
  std::vector<FieldSpec> fields_;
};

/// Overlapped fields must agree on (name, kind, width) in both schemas and be
/// flagged overlapped on both sides. Throws DataError otherwise.
void check_overlap_compatible(const Schema& a, const Schema& b);

/// Category index, index set (multi-hot), or dense vector.
using FieldValue =
    std::variant<std::size_t, std::vector<std::size_t>, std::vector<double>>;

struct Example {
  std::vector<FieldValue> values;  // schema order
  int label = 0;
  std::int64_t timestamp = 0;

  bool operator==(const Example&) const = default;
};

/// Immutable labeled examples of one domain.
///
/// Keeps a counter of materialized batches so callers can audit which data
/// a training stage consumed.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Schema schema, std::vector<Example> examples);
  Dataset(const Dataset& other);
  Dataset& operator=(const Dataset& other);
  Dataset(Dataset&&) noexcept;
  Dataset& operator=(Dataset&&) noexcept;

  const Schema& schema() const { return schema_; }
  const std::vector<Example>& examples() const { return examples_; }
  const Example& operator[](std::size_t i) const { return examples_[i]; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  double positive_rate() const;

  std::size_t access_count() const { return accesses_.load(); }
  void note_access() const { accesses_.fetch_add(1); }
  void reset_access_count() const { accesses_.store(0); }

  /// Same schema, selected rows in the given order.
  Dataset subset(std::span<const std::size_t> rows) const;

 private:
  Schema schema_;
  std::vector<Example> examples_;
  mutable std::atomic<std::size_t> accesses_{0};
};

/// Validates every example against the schema; throws DataError naming the
/// example index and field.
void validate(const Dataset& data);

struct CsvOptions {
  /// When set, the label column holds a rating; label = rating > threshold.
  std::optional<double> label_threshold;
};

/// Header row `ts,label,<field>...` in any order; multi-hot and dense values
/// are `|`-separated. Throws DataError with the 1-based line number.
Dataset load_csv(const Schema& schema, const std::filesystem::path& path,
                 const CsvOptions& options = {});
Dataset parse_csv(const Schema& schema, std::string_view text,
                  const CsvOptions& options = {});
std::string to_csv(const Dataset& data);
void write_csv(const Dataset& data, const std::filesystem::path& path);

struct Splits {
  Dataset train, val, test;
};

/// Stable sort by timestamp, then contiguous train/val/test blocks.
/// Validation and test take floor(n * ratio); train takes the rest.
Splits chronological_split(const Dataset& data, double train_ratio = 0.8,
                           double val_ratio = 0.1, double test_ratio = 0.1);

/// Sizes produced by chronological_split for n examples.
std::array<std::size_t, 3> split_sizes(std::size_t n, double train_ratio,
                                       double val_ratio, double test_ratio);

/// Seeded permutation of [0, n) cut into batches; the last batch may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n,
                                                   std::size_t batch_size,
                                                   std::uint64_t shuffle_seed,
                                                   std::uint64_t epoch);

/// floor(ratio * n) examples drawn uniformly, original order preserved.
Dataset subsample_train(const Dataset& data, double ratio, std::uint64_t seed);

}  // namespace cdanet

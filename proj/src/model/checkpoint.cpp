#include "cdanet/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cdanet/error.hpp"

namespace cdanet {
namespace {

constexpr char kMagic[4] = {'C', 'D', 'A', '1'};

template <typename T>
void put(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  void set_context(std::string context) { context_ = std::move(context); }

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError("checkpoint truncated while reading " + context_);
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string context_ = "header";
};

}  // namespace

const CheckpointRecord* CheckpointFile::find(std::string_view name) const {
  for (const auto& r : records)
    if (r.name == name) return &r;
  return nullptr;
}

std::string encode_checkpoint(const CheckpointFile& file) {
  std::string out(kMagic, 4);
  put(out, kCheckpointVersion);
  put(out, file.fingerprint);
  put(out, static_cast<std::uint64_t>(file.records.size()));
  for (const auto& r : file.records) {
    put(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put(out, static_cast<std::uint32_t>(r.value.rank()));
    for (std::size_t d : r.value.shape()) put(out, static_cast<std::uint64_t>(d));
    for (double v : r.value.values()) put(out, v);
  }
  return out;
}

CheckpointFile decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != std::string_view(kMagic, 4)) {
    throw CheckpointError("not a checkpoint: bad magic");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointFile file;
  file.fingerprint = in.get<std::uint64_t>();
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    in.set_context("record " + std::to_string(i));
    CheckpointRecord r;
    r.name = std::string(in.take(in.get<std::uint32_t>()));
    in.set_context("record " + std::to_string(i) + " '" + r.name + "'");
    Shape shape(in.get<std::uint32_t>());
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    r.value = Tensor(shape);
    for (double& v : r.value.values()) v = in.get<double>();
    file.records.push_back(std::move(r));
  }
  if (!in.done()) throw CheckpointError("checkpoint has trailing bytes after the last record");
  return file;
}

void write_checkpoint(const CheckpointFile& file, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  const std::string bytes = encode_checkpoint(file);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

void append_parameters(const ParameterStore& params, std::vector<CheckpointRecord>& out) {
  for (const auto& p : params) {
    Tensor copy(p.tensor.shape(), std::vector<double>(p.tensor.values().begin(),
                                                      p.tensor.values().end()));
    out.push_back({std::string(kParamPrefix) + p.name, std::move(copy)});
  }
}

void restore_parameters(ParameterStore& params, const CheckpointFile& file) {
  std::size_t seen = 0;
  for (const auto& r : file.records) {
    if (!r.name.starts_with(kParamPrefix)) continue;
    const std::string_view name = std::string_view(r.name).substr(kParamPrefix.size());
    Parameter* p = params.find(name);
    if (!p) throw CheckpointError("checkpoint parameter '" + std::string(name) + "' is not in the model");
    if (p->tensor.shape() != r.value.shape()) {
      throw CheckpointError("checkpoint parameter '" + std::string(name) + "' has shape " +
                            shape_to_string(r.value.shape()) + ", model expects " +
                            shape_to_string(p->tensor.shape()));
    }
    ++seen;
  }
  if (seen != params.size()) {
    for (const auto& p : params) {
      if (!file.find(std::string(kParamPrefix) + p.name)) {
        throw CheckpointError("checkpoint lacks parameter '" + p.name + "'");
      }
    }
  }
  for (const auto& r : file.records) {
    if (!r.name.starts_with(kParamPrefix)) continue;
    Tensor& t = params.find(std::string_view(r.name).substr(kParamPrefix.size()))->tensor;
    std::copy(r.value.values().begin(), r.value.values().end(), t.values().begin());
  }
}

}  // namespace cdanet

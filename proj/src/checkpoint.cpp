#include "ulstm/checkpoint.hpp"

#include <openssl/sha.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ulstm/errors.hpp"

namespace ulstm {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[] = "ULSTMCKPT";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  template <typename U>
  U get(const char* what) {
    U v;
    std::memcpy(&v, take(sizeof(U), what), sizeof(U));
    return v;
  }
  const char* take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw FormatError(origin_ + ": truncated while reading " + what + " at byte " + std::to_string(pos_));
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

Fingerprint sha256(const std::string& text) {
  Fingerprint fp{};
  SHA256(reinterpret_cast<const unsigned char*>(text.data()), text.size(), fp.data());
  return fp;
}

std::string to_hex(const Fingerprint& fp) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::uint8_t b : fp) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 15]);
  }
  return s;
}

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32:
      return 4;
    case DType::f64:
    case DType::u64:
      return 8;
  }
  throw FormatError("unknown dtype code " + std::to_string(static_cast<int>(t)));
}

template <typename T>
Record Record::from_tensor(std::string name, const Tensor<T>& t) {
  Record r;
  r.name = std::move(name);
  r.dtype = std::is_same_v<T, float> ? DType::f32 : DType::f64;
  r.dims = t.dims();
  r.payload.resize(t.size() * sizeof(T));
  if (!r.payload.empty()) std::memcpy(r.payload.data(), t.data(), r.payload.size());
  return r;
}

Record Record::from_u64(std::string name, const std::vector<std::uint64_t>& values) {
  Record r;
  r.name = std::move(name);
  r.dtype = DType::u64;
  r.dims = {values.size()};
  r.payload.resize(values.size() * 8);
  if (!values.empty()) std::memcpy(r.payload.data(), values.data(), r.payload.size());
  return r;
}

template <typename T>
Tensor<T> Record::to_tensor() const {
  Tensor<T> out(dims);
  const std::size_t n = out.size();
  if (dtype == DType::f32) {
    for (std::size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, payload.data() + 4 * i, 4);
      out[i] = static_cast<T>(v);
    }
  } else if (dtype == DType::f64) {
    for (std::size_t i = 0; i < n; ++i) {
      double v;
      std::memcpy(&v, payload.data() + 8 * i, 8);
      out[i] = static_cast<T>(v);
    }
  } else {
    throw FormatError("record '" + name + "' holds integers, not a tensor");
  }
  return out;
}

std::vector<std::uint64_t> Record::to_u64() const {
  if (dtype != DType::u64) throw FormatError("record '" + name + "' is not a u64 array");
  std::vector<std::uint64_t> out(payload.size() / 8);
  if (!out.empty()) std::memcpy(out.data(), payload.data(), payload.size());
  return out;
}

const Record* Container::find(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

const Record& Container::at(const std::string& name) const {
  const Record* r = find(name);
  if (r == nullptr) throw FormatError("checkpoint has no record '" + name + "'");
  return *r;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  std::string out(kMagic, kMagicLen);
  put<std::uint32_t>(out, c.version);
  out.append(reinterpret_cast<const char*>(c.fingerprint.data()), c.fingerprint.size());
  for (const auto& r : c.records) {
    if (r.payload.size() != shape_numel(r.dims) * dtype_size(r.dtype)) {
      throw UsageError("record '" + r.name + "' payload size does not match its dims");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(r.dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.dims.size()));
    for (std::size_t d : r.dims) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(r.payload.data()), r.payload.size());
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();
  Reader rd(bytes, path.string());

  if (std::memcmp(rd.take(kMagicLen, "magic"), kMagic, kMagicLen) != 0) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  Container c;
  c.version = rd.get<std::uint32_t>("version");
  if (c.version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(c.version));
  }
  std::memcpy(c.fingerprint.data(), rd.take(32, "fingerprint"), 32);
  while (!rd.done()) {
    Record r;
    const auto name_len = rd.get<std::uint32_t>("name length");
    r.name.assign(rd.take(name_len, "name"), name_len);
    const auto code = rd.get<std::uint8_t>("dtype");
    if (code > 2) throw FormatError(path.string() + ": record '" + r.name + "' has unknown dtype " + std::to_string(code));
    r.dtype = static_cast<DType>(code);
    const auto rank = rd.get<std::uint32_t>("rank");
    if (rank > 8) throw FormatError(path.string() + ": record '" + r.name + "' has implausible rank");
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = rd.get<std::uint64_t>("dims");
      if (d != 0 && count > (std::size_t{1} << 40) / d) throw FormatError(path.string() + ": record too large");
      r.dims.push_back(d);
      count *= d;
    }
    const std::size_t n = count * dtype_size(r.dtype);
    const char* p = rd.take(n, "payload");
    r.payload.assign(p, p + n);
    c.records.push_back(std::move(r));
  }
  return c;
}

template Record Record::from_tensor<float>(std::string, const Tensor<float>&);
template Record Record::from_tensor<double>(std::string, const Tensor<double>&);
template Tensor<float> Record::to_tensor<float>() const;
template Tensor<double> Record::to_tensor<double>() const;

}  // namespace ulstm

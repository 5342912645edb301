#include "pvhc/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "pvhc/core.hpp"
#include "pvhc/csv.hpp"

namespace pvhc {

namespace {

constexpr char kMagic[8] = {'P', 'V', 'H', 'C', 'T', 'N', 'S', '1'};

static_assert(std::endian::native == std::endian::little, "tensor files are written in native little-endian order");

}  // namespace

std::size_t Tensor::size() const {
  std::size_t n = dims.empty() ? 0 : 1;
  for (auto d : dims) n *= d;
  return n;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor, const std::string& sidecar_json) {
  if (tensor.size() != tensor.data.size()) throw Error("tensor dims do not match its data");
  nlohmann::json meta = sidecar_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(sidecar_json);
  if (!meta.is_object()) throw Error("tensor sidecar must be a JSON object");
  meta["dims"] = tensor.dims;
  meta["dtype"] = "float64-le";

  std::string blob(kMagic, sizeof kMagic);
  const auto ndim = static_cast<std::uint64_t>(tensor.dims.size());
  blob.append(reinterpret_cast<const char*>(&ndim), sizeof ndim);
  for (auto d : tensor.dims) {
    const auto v = static_cast<std::uint64_t>(d);
    blob.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  blob.append(reinterpret_cast<const char*>(tensor.data.data()), tensor.data.size() * sizeof(double));
  write_text_file(path, blob);
  write_text_file(sidecar_path(path), meta.dump(1) + "\n");
}

Tensor read_tensor(const std::filesystem::path& path) {
  const std::string blob = read_text_file(path);
  std::size_t pos = 0;
  auto take = [&](void* dst, std::size_t n) {
    if (pos + n > blob.size()) throw Error("truncated tensor file " + path.string());
    std::memcpy(dst, blob.data() + pos, n);
    pos += n;
  };
  char magic[8];
  take(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error("not a tensor file: " + path.string());
  std::uint64_t ndim = 0;
  take(&ndim, sizeof ndim);
  if (ndim > 16) throw Error("implausible tensor rank in " + path.string());
  Tensor t;
  for (std::uint64_t i = 0; i < ndim; ++i) {
    std::uint64_t d = 0;
    take(&d, sizeof d);
    t.dims.push_back(static_cast<std::size_t>(d));
  }
  t.data.resize(t.size());
  take(t.data.data(), t.data.size() * sizeof(double));
  if (pos != blob.size()) throw Error("trailing bytes in tensor file " + path.string());
  return t;
}

std::string read_sidecar(const std::filesystem::path& path) { return read_text_file(sidecar_path(path)); }

}  // namespace pvhc

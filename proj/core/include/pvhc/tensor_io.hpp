#pragma once

// Little-endian float64 tensor files with a JSON sidecar (`<file>.json`).

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace pvhc {

struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> data;

  std::size_t size() const;
};

/// `sidecar_json` must be a JSON object; "dims" is added to it.
void write_tensor(const std::filesystem::path& path, const Tensor& tensor, const std::string& sidecar_json);
Tensor read_tensor(const std::filesystem::path& path);
std::string read_sidecar(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace pvhc

#pragma once

#include "avatar/image.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace avatar {

std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

/// Dense float tensor in row-major order.
///
/// On disk ("TRIT"): 4-byte magic `TRIT`, u32 LE rank, rank × u32 LE dims,
/// then product(dims) × f32 LE values.
struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;

    std::size_t size() const;
};

std::string encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::string_view bytes);

Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);

/// Row-major conversion helpers for 2-D tensors.
Tensor to_tensor(const Eigen::Ref<const Eigen::MatrixXd>& matrix);
Eigen::MatrixXd to_matrix(const Tensor& tensor);

/// 8-bit sRGB PNG. Values in [0,1] are quantized with rounding.
void write_png(const std::filesystem::path& path, const Image& image);
std::string encode_png(const Image& image);
Image read_png(const std::filesystem::path& path);

std::string base64_encode(std::string_view bytes);

}  // namespace avatar

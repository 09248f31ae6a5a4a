#include "avatar/io.hpp"

#include "avatar/error.hpp"

#include <png.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

namespace avatar {

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void atomic_write(const std::filesystem::path& path, std::string_view bytes)
{
    static std::atomic<unsigned> counter{0};
    const auto tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(tid % 100000) + "." + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error("cannot rename onto " + path.string() + ": " + ec.message());
    }
}

namespace {

void put_u32(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset)
{
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
    return v;
}

}  // namespace

std::size_t Tensor::size() const
{
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::string encode_tensor(const Tensor& tensor)
{
    if (tensor.values.size() != tensor.size()) throw DimensionError("tensor payload does not match its dims");
    std::string out = "TRIT";
    out.reserve(8 + 4 * tensor.dims.size() + 4 * tensor.values.size());
    put_u32(out, static_cast<std::uint32_t>(tensor.dims.size()));
    for (auto d : tensor.dims) put_u32(out, d);
    for (float f : tensor.values) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
    return out;
}

Tensor decode_tensor(std::string_view bytes)
{
    if (bytes.size() < 8 || bytes.substr(0, 4) != "TRIT") throw Error("not a TRIT tensor (bad magic)");
    Tensor t;
    const std::uint32_t rank = get_u32(bytes, 4);
    if (bytes.size() < 8 + 4ull * rank) throw Error("truncated TRIT header");
    for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(get_u32(bytes, 8 + 4 * i));
    const std::size_t offset = 8 + 4ull * rank;
    const std::size_t count = t.size();
    if (bytes.size() != offset + 4 * count) {
        throw Error("TRIT payload is " + std::to_string(bytes.size() - offset) + " bytes, expected " +
                    std::to_string(4 * count));
    }
    t.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32(bytes, offset + 4 * i);
        std::memcpy(&t.values[i], &bits, 4);
    }
    return t;
}

Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_text_file(path)); }

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) { atomic_write(path, encode_tensor(tensor)); }

Tensor to_tensor(const Eigen::Ref<const Eigen::MatrixXd>& matrix)
{
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(matrix.rows()), static_cast<std::uint32_t>(matrix.cols())};
    t.values.resize(static_cast<std::size_t>(matrix.size()));
    for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
        for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
            t.values[static_cast<std::size_t>(r * matrix.cols() + c)] = static_cast<float>(matrix(r, c));
        }
    }
    return t;
}

Eigen::MatrixXd to_matrix(const Tensor& tensor)
{
    if (tensor.dims.size() != 2) throw DimensionError("expected a rank-2 tensor, got rank " + std::to_string(tensor.dims.size()));
    Eigen::MatrixXd m(tensor.dims[0], tensor.dims[1]);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = tensor.values[static_cast<std::size_t>(r * m.cols() + c)];
    }
    return m;
}

namespace {

png_uint_32 png_format(int channels)
{
    switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 3: return PNG_FORMAT_RGB;
    case 4: return PNG_FORMAT_RGBA;
    default: throw DimensionError("PNG images need 1, 3 or 4 channels");
    }
}

std::vector<unsigned char> quantize(const Image& image)
{
    std::vector<unsigned char> bytes(static_cast<std::size_t>(image.data.size()));
    const int channels = image.channels();
    for (Eigen::Index p = 0; p < image.data.rows(); ++p) {
        for (int c = 0; c < channels; ++c) {
            const double v = std::clamp(image.data(p, c), 0.0, 1.0);
            bytes[static_cast<std::size_t>(p * channels + c)] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
    }
    return bytes;
}

}  // namespace

std::string encode_png(const Image& image)
{
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = png_format(image.channels());
    const auto bytes = quantize(image);
    png_alloc_size_t size = 0;
    if (!png_image_write_get_memory_size(png, size, 0, bytes.data(), 0, nullptr)) {
        throw Error(std::string("PNG encode failed: ") + png.message);
    }
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, bytes.data(), 0, nullptr)) {
        throw Error(std::string("PNG encode failed: ") + png.message);
    }
    out.resize(size);
    return out;
}

void write_png(const std::filesystem::path& path, const Image& image) { atomic_write(path, encode_png(image)); }

Image read_png(const std::filesystem::path& path)
{
    const std::string bytes = read_text_file(path);
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        throw Error(path.string() + ": " + png.message);
    }
    const int channels = (png.format & PNG_FORMAT_FLAG_ALPHA) ? 4 : ((png.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1);
    png.format = png_format(channels);
    std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
        throw Error(path.string() + ": " + png.message);
    }
    Image image(static_cast<int>(png.width), static_cast<int>(png.height), channels);
    for (Eigen::Index p = 0; p < image.data.rows(); ++p) {
        for (int c = 0; c < channels; ++c) image.data(p, c) = buffer[static_cast<std::size_t>(p * channels + c)] / 255.0;
    }
    return image;
}

std::string base64_encode(std::string_view bytes)
{
    static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8) | static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(kAlphabet[(n >> 18) & 63]);
        out.push_back(kAlphabet[(n >> 12) & 63]);
        out.push_back(kAlphabet[(n >> 6) & 63]);
        out.push_back(kAlphabet[n & 63]);
    }
    if (i < bytes.size()) {
        std::uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) n |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        out.push_back(kAlphabet[(n >> 18) & 63]);
        out.push_back(kAlphabet[(n >> 12) & 63]);
        out.push_back(i + 1 < bytes.size() ? kAlphabet[(n >> 6) & 63] : '=');
        out.push_back('=');
    }
    return out;
}

}  // namespace avatar

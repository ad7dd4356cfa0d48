#pragma once

// Big-endian IDX container used by the MNIST distribution: magic 0x00000803
// for images (count, rows, cols) and 0x00000801 for labels (count).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "tslab/error.hpp"
#include "tslab/linalg.hpp"

namespace tslab::mnist {

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;
inline constexpr Eigen::Index kPixels = 28 * 28;

enum class Split { train, test };

/// Images are stored one per column, pixels in row-major image order, scaled
/// to [0, 1].
struct Dataset {
    Matrix images;  // 784 x count
    std::vector<std::uint8_t> labels;
    Split split = Split::train;

    [[nodiscard]] Eigen::Index size() const { return images.cols(); }

    /// The first n samples.
    [[nodiscard]] Dataset head(Eigen::Index n) const {
        require(n >= 0 && n <= size(), ErrorCode::invalid_input,
                "cannot take " + std::to_string(n) + " of " + std::to_string(size()) + " samples");
        return {images.leftCols(n), std::vector<std::uint8_t>(labels.begin(), labels.begin() + n), split};
    }
};

namespace detail {

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorCode::io_error, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::string& what) {
    require(offset + 4 <= bytes.size(), ErrorCode::format_error,
            what + ": truncated header at byte offset " + std::to_string(offset));
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(f), ErrorCode::io_error, "cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(f), ErrorCode::io_error, "write failed for " + path.string());
}

}  // namespace detail

inline Matrix parse_idx_images(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    const std::uint32_t magic = detail::be32(bytes, 0, what);
    require(magic == kImageMagic, ErrorCode::format_error,
            what + ": bad image magic " + std::to_string(magic) + " at byte offset 0");
    const std::uint32_t count = detail::be32(bytes, 4, what);
    const std::uint32_t rows = detail::be32(bytes, 8, what);
    const std::uint32_t cols = detail::be32(bytes, 12, what);
    require(rows == 28 && cols == 28, ErrorCode::format_error,
            what + ": expected 28x28 images at byte offset 8, got " + std::to_string(rows) + "x" + std::to_string(cols));
    const std::size_t need = 16 + std::size_t{count} * kPixels;
    require(bytes.size() >= need, ErrorCode::format_error,
            what + ": truncated pixel data at byte offset " + std::to_string(bytes.size()) + ", expected " +
                std::to_string(need) + " bytes");
    Matrix images(kPixels, count);
    const std::uint8_t* p = bytes.data() + 16;
    for (std::uint32_t n = 0; n < count; ++n)
        for (Eigen::Index i = 0; i < kPixels; ++i) images(i, n) = *p++ / 255.0;
    return images;
}

inline std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    const std::uint32_t magic = detail::be32(bytes, 0, what);
    require(magic == kLabelMagic, ErrorCode::format_error,
            what + ": bad label magic " + std::to_string(magic) + " at byte offset 0");
    const std::uint32_t count = detail::be32(bytes, 4, what);
    require(bytes.size() >= 8 + std::size_t{count}, ErrorCode::format_error,
            what + ": truncated label data at byte offset " + std::to_string(bytes.size()));
    std::vector<std::uint8_t> labels(bytes.begin() + 8, bytes.begin() + 8 + count);
    for (std::size_t i = 0; i < labels.size(); ++i)
        require(labels[i] <= 9, ErrorCode::format_error,
                what + ": label " + std::to_string(labels[i]) + " out of range at byte offset " + std::to_string(8 + i));
    return labels;
}

inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        Split split = Split::train) {
    Dataset d;
    d.images = parse_idx_images(detail::read_bytes(images_path), images_path.string());
    d.labels = parse_idx_labels(detail::read_bytes(labels_path), labels_path.string());
    d.split = split;
    require(static_cast<Eigen::Index>(d.labels.size()) == d.images.cols(), ErrorCode::format_error,
            "count mismatch at byte offset 4: " + std::to_string(d.images.cols()) + " images vs " +
                std::to_string(d.labels.size()) + " labels");
    return d;
}

/// Pixels are quantized back to bytes by rounding x * 255.
inline void write_idx(const Dataset& d, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
    require(static_cast<Eigen::Index>(d.labels.size()) == d.images.cols() && d.images.rows() == kPixels,
            ErrorCode::shape_mismatch, "write_idx needs 784 x n images and n labels");
    std::vector<std::uint8_t> img;
    img.reserve(16 + static_cast<std::size_t>(d.images.size()));
    detail::put_be32(img, kImageMagic);
    detail::put_be32(img, static_cast<std::uint32_t>(d.images.cols()));
    detail::put_be32(img, 28);
    detail::put_be32(img, 28);
    for (Eigen::Index n = 0; n < d.images.cols(); ++n)
        for (Eigen::Index i = 0; i < kPixels; ++i)
            img.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(d.images(i, n), 0.0, 1.0) * 255.0)));
    std::vector<std::uint8_t> lab;
    detail::put_be32(lab, kLabelMagic);
    detail::put_be32(lab, static_cast<std::uint32_t>(d.labels.size()));
    lab.insert(lab.end(), d.labels.begin(), d.labels.end());
    detail::write_bytes(images_path, img);
    detail::write_bytes(labels_path, lab);
}

struct MnistData {
    Dataset train;
    Dataset test;
};

/// Loads the four files under their canonical names from `dir`.
inline MnistData load_mnist_dir(const std::filesystem::path& dir) {
    return {load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", Split::train),
            load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", Split::test)};
}

}  // namespace tslab::mnist

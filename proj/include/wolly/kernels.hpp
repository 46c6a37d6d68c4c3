#pragma once

// Data-parallel inner loops. Every kernel has a serial reference next to its
// OpenMP version; the two must agree exactly (same reduction order inside a
// row, deterministic tie-breaks across rows).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace wolly::kernels {

struct Nearest {
    std::size_t index = 0;
    double squared_distance = 0.0;
};

/// Nearest row of a row-major `rows` matrix (rows.size() / dim rows) to
/// `probe`. Ties go to the lowest row index. Empty matrix -> nullopt.
std::optional<Nearest> nearest_serial(std::span<const double> rows, std::size_t dim, std::span<const double> probe);
std::optional<Nearest> nearest_parallel(std::span<const double> rows, std::size_t dim, std::span<const double> probe);

struct Box {
    std::size_t x = 0, y = 0, width = 0, height = 0;
};

/// Interleaved 8-bit RGB.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // width * height * 3
};

/// Nearest-neighbour resample of `box` (clipped to the image) into an
/// out_w x out_h RGB tensor.
RgbImage crop_resize_serial(const RgbImage& src, Box box, std::size_t out_w, std::size_t out_h);
RgbImage crop_resize_parallel(const RgbImage& src, Box box, std::size_t out_w, std::size_t out_h);

/// Average precision of one ranked list: items sorted by descending score
/// (stable, so ties keep their input order); mean over positives of the
/// precision at each positive's rank. Returns nullopt when there are no
/// positives. Sizes must match.
std::optional<double> average_precision(std::span<const std::uint8_t> labels, std::span<const double> scores);

/// Per-column AP over an n x cols row-major score/label matrix.
std::vector<std::optional<double>> column_ap_serial(std::span<const double> scores,
                                                    std::span<const std::uint8_t> labels, std::size_t cols);
std::vector<std::optional<double>> column_ap_parallel(std::span<const double> scores,
                                                      std::span<const std::uint8_t> labels, std::size_t cols);

}  // namespace wolly::kernels

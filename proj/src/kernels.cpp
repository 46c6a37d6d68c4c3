#include "wolly/kernels.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <omp.h>

namespace wolly::kernels {

namespace {

double row_distance(const double* row, std::span<const double> probe) {
    double acc = 0.0;
    for (std::size_t k = 0; k < probe.size(); ++k) {
        double d = row[k] - probe[k];
        acc += d * d;
    }
    return acc;
}

bool better(double d, std::size_t i, const Nearest& best) {
    return d < best.squared_distance || (d == best.squared_distance && i < best.index);
}

void check_shape(std::span<const double> rows, std::size_t dim, std::span<const double> probe) {
    if (dim == 0 || probe.size() != dim || rows.size() % dim != 0) {
        throw std::invalid_argument("nearest: dimension mismatch");
    }
}

std::size_t sample(std::size_t out_i, std::size_t out_n, std::size_t in_n) {
    return ((2 * out_i + 1) * in_n) / (2 * out_n);
}

Box clip(const RgbImage& src, Box b) {
    b.x = std::min(b.x, src.width);
    b.y = std::min(b.y, src.height);
    b.width = std::min(b.width, src.width - b.x);
    b.height = std::min(b.height, src.height - b.y);
    return b;
}

void resample_row(const RgbImage& src, const Box& b, std::size_t oy, std::size_t out_w, std::size_t out_h,
                  std::uint8_t* out_row) {
    std::size_t sy = b.y + sample(oy, out_h, b.height);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
        std::size_t sx = b.x + sample(ox, out_w, b.width);
        const std::uint8_t* p = &src.pixels[(sy * src.width + sx) * 3];
        out_row[ox * 3 + 0] = p[0];
        out_row[ox * 3 + 1] = p[1];
        out_row[ox * 3 + 2] = p[2];
    }
}

RgbImage prepare(const RgbImage& src, Box& box, std::size_t out_w, std::size_t out_h) {
    if (src.pixels.size() != src.width * src.height * 3) throw std::invalid_argument("crop_resize: bad pixel buffer");
    box = clip(src, box);
    if (box.width == 0 || box.height == 0) throw std::invalid_argument("crop_resize: empty box");
    RgbImage out;
    out.width = out_w;
    out.height = out_h;
    out.pixels.resize(out_w * out_h * 3);
    return out;
}

void check_matrix(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t cols) {
    if (cols == 0 || scores.size() != labels.size() || scores.size() % cols != 0) {
        throw std::invalid_argument("column_ap: shape mismatch");
    }
}

std::optional<double> column_ap(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                std::size_t cols, std::size_t c) {
    std::size_t n = scores.size() / cols;
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    for (std::size_t r = 0; r < n; ++r) {
        s[r] = scores[r * cols + c];
        l[r] = labels[r * cols + c];
    }
    return average_precision(l, s);
}

}  // namespace

std::optional<Nearest> nearest_serial(std::span<const double> rows, std::size_t dim, std::span<const double> probe) {
    check_shape(rows, dim, probe);
    std::size_t n = rows.size() / dim;
    if (n == 0) return std::nullopt;
    Nearest best{0, row_distance(rows.data(), probe)};
    for (std::size_t i = 1; i < n; ++i) {
        double d = row_distance(rows.data() + i * dim, probe);
        if (better(d, i, best)) best = {i, d};
    }
    return best;
}

std::optional<Nearest> nearest_parallel(std::span<const double> rows, std::size_t dim, std::span<const double> probe) {
    check_shape(rows, dim, probe);
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(rows.size() / dim);
    if (n == 0) return std::nullopt;
    Nearest best{0, row_distance(rows.data(), probe)};
#pragma omp parallel
    {
        Nearest local = best;
#pragma omp for schedule(static) nowait
        for (std::ptrdiff_t i = 1; i < n; ++i) {
            auto ui = static_cast<std::size_t>(i);
            double d = row_distance(rows.data() + ui * dim, probe);
            if (better(d, ui, local)) local = {ui, d};
        }
#pragma omp critical(wolly_nearest_merge)
        if (better(local.squared_distance, local.index, best)) best = local;
    }
    return best;
}

RgbImage crop_resize_serial(const RgbImage& src, Box box, std::size_t out_w, std::size_t out_h) {
    RgbImage out = prepare(src, box, out_w, out_h);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        resample_row(src, box, oy, out_w, out_h, &out.pixels[oy * out_w * 3]);
    }
    return out;
}

RgbImage crop_resize_parallel(const RgbImage& src, Box box, std::size_t out_w, std::size_t out_h) {
    RgbImage out = prepare(src, box, out_w, out_h);
    const auto h = static_cast<std::ptrdiff_t>(out_h);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t oy = 0; oy < h; ++oy) {
        auto uy = static_cast<std::size_t>(oy);
        resample_row(src, box, uy, out_w, out_h, &out.pixels[uy * out_w * 3]);
    }
    return out;
}

std::optional<double> average_precision(std::span<const std::uint8_t> labels, std::span<const double> scores) {
    if (labels.size() != scores.size()) throw std::invalid_argument("average_precision: length mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]] != 0) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    if (hits == 0) return std::nullopt;
    return sum / static_cast<double>(hits);
}

std::vector<std::optional<double>> column_ap_serial(std::span<const double> scores,
                                                    std::span<const std::uint8_t> labels, std::size_t cols) {
    check_matrix(scores, labels, cols);
    std::vector<std::optional<double>> out(cols);
    for (std::size_t c = 0; c < cols; ++c) out[c] = column_ap(scores, labels, cols, c);
    return out;
}

std::vector<std::optional<double>> column_ap_parallel(std::span<const double> scores,
                                                      std::span<const std::uint8_t> labels, std::size_t cols) {
    check_matrix(scores, labels, cols);
    std::vector<std::optional<double>> out(cols);
    const auto n = static_cast<std::ptrdiff_t>(cols);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t c = 0; c < n; ++c) {
        out[static_cast<std::size_t>(c)] = column_ap(scores, labels, cols, static_cast<std::size_t>(c));
    }
    return out;
}

}  // namespace wolly::kernels

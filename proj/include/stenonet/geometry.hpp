#pragma once

#include <cstdint>
#include <vector>

#include "stenonet/tensor.hpp"

namespace stenonet {

/// Localization geometry. The image is covered by overlapping windows of
/// side `window` tiled with `stride`; confidence scores over those windows
/// form a k x k grid which is pooled to a non-overlapping n x n grid before
/// box selection. Requires window == 2 * stride (the 4-neighbour pooling
/// rule assumes it).
struct GridSpec {
    int image_size = 0;
    int window = 0;
    int stride = 0;
    int box = 0;

    int k() const { return (image_size - window) / stride + 1; }
    int n() const { return image_size / stride; }
    int box_cells() const { return box / stride; }
    int box_cells_for(int box_size) const { return box_size / stride; }
    double pos_weight() const { return static_cast<double>(k()) * k(); }

    void validate() const;

    static GridSpec paper() { return {512, 64, 32, 192}; }
    static GridSpec desk() { return {256, 32, 16, 96}; }
};

struct PixelPoint {
    int row = 0;
    int col = 0;
    bool operator==(const PixelPoint&) const = default;
};

/// k x k window scores; `post_sigmoid` tags whether the values are
/// probabilities or raw logits.
struct ConfidenceGrid {
    int k = 0;
    std::vector<double> v;
    bool post_sigmoid = false;

    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * k + j]; }
    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * k + j]; }
};

struct LabelGrid {
    int k = 0;
    std::vector<std::uint8_t> v;

    std::uint8_t at(int i, int j) const { return v[static_cast<std::size_t>(i) * k + j]; }
    int count_positive() const;
};

struct PooledGrid {
    int n = 0;
    std::vector<double> v;

    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * n + j]; }
    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * n + j]; }
};

/// Axis-aligned square box, half-open pixel extent [row, row+size) x
/// [col, col+size). row/col are multiples of the grid stride.
struct BBox {
    int row = 0;
    int col = 0;
    int size = 0;

    bool contains(PixelPoint p) const {
        return p.row >= row && p.row < row + size && p.col >= col && p.col < col + size;
    }
    bool operator==(const BBox&) const = default;
};

/// y_ab = 1 iff window (a,b) covers the point under half-open extents
/// [aT, aT+W) x [bT, bT+W). An in-bounds point lights 1 to 4 cells.
LabelGrid region_label_grid(const GridSpec& spec, PixelPoint point);

/// p_ij = max(o_ij, o_i(j-1), o_(i-1)j, o_(i-1)(j-1)); indices outside the
/// k x k grid are skipped, so boundary cells take the max over the windows
/// that exist.
PooledGrid pool_to_nonoverlap(const GridSpec& spec, const ConfidenceGrid& conf);

/// Places a (box/stride)-cell square at the maximum-sum position of the
/// pooled grid; ties go to the lexicographically smallest (i, j).
BBox select_bbox(const GridSpec& spec, const PooledGrid& pooled);
BBox select_bbox(const GridSpec& spec, const PooledGrid& pooled, int box_size);

/// Box centered on `point`, snapped to stride-aligned cells and clamped
/// inside the image.
BBox centered_box(const GridSpec& spec, PixelPoint point, int box_size);

template <typename T>
TensorT<T> crop_box(const TensorT<T>& image, const BBox& box);

/// Paste-back counterpart of crop_box (used by overlay rendering and the
/// crop round-trip tests).
template <typename T>
void paste_box(TensorT<T>& image, const TensorT<T>& crop, const BBox& box);

/// Maps an image-space point into crop coordinates. Returns false when the
/// point is not contained in the box.
bool to_crop_coords(PixelPoint point, const BBox& box, PixelPoint* out);

}  // namespace stenonet

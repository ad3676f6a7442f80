#include "stenonet/geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace stenonet {

void GridSpec::validate() const {
    if (stride < 1 || image_size < 1 || window < 1 || box < 1) throw std::invalid_argument("grid: sizes must be positive");
    if (image_size % stride || window % stride || box % stride)
        throw std::invalid_argument("grid: image, window and box must be divisible by the stride");
    if (window != 2 * stride) throw std::invalid_argument("grid: window must equal twice the stride");
    if (box_cells() > n()) throw std::invalid_argument("grid: box does not fit in the image");
}

int LabelGrid::count_positive() const {
    int c = 0;
    for (auto y : v) c += y;
    return c;
}

LabelGrid region_label_grid(const GridSpec& spec, PixelPoint point) {
    spec.validate();
    if (point.row < 0 || point.row >= spec.image_size || point.col < 0 || point.col >= spec.image_size)
        throw std::invalid_argument("region_label_grid: point out of bounds");
    const int k = spec.k();
    LabelGrid grid{k, std::vector<std::uint8_t>(static_cast<std::size_t>(k) * k, 0)};
    for (int a = 0; a < k; ++a) {
        if (!(a * spec.stride <= point.row && point.row < a * spec.stride + spec.window)) continue;
        for (int b = 0; b < k; ++b)
            if (b * spec.stride <= point.col && point.col < b * spec.stride + spec.window)
                grid.v[static_cast<std::size_t>(a) * k + b] = 1;
    }
    return grid;
}

PooledGrid pool_to_nonoverlap(const GridSpec& spec, const ConfidenceGrid& conf) {
    const int k = spec.k(), n = spec.n();
    if (conf.k != k || conf.v.size() != static_cast<std::size_t>(k) * k)
        throw std::invalid_argument("pool_to_nonoverlap: confidence grid must be k x k");
    PooledGrid pooled{n, std::vector<double>(static_cast<std::size_t>(n) * n, 0.0)};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            bool any = false;
            double best = 0.0;
            for (int di = -1; di <= 0; ++di)
                for (int dj = -1; dj <= 0; ++dj) {
                    int a = i + di, b = j + dj;
                    if (a < 0 || a >= k || b < 0 || b >= k) continue;
                    double o = conf.at(a, b);
                    if (!any || o > best) best = o;
                    any = true;
                }
            pooled.at(i, j) = best;  // every cell is covered by >= 1 window since k = n - 1
        }
    return pooled;
}

BBox select_bbox(const GridSpec& spec, const PooledGrid& pooled) { return select_bbox(spec, pooled, spec.box); }

BBox select_bbox(const GridSpec& spec, const PooledGrid& pooled, int box_size) {
    const int n = spec.n();
    const int c = spec.box_cells_for(box_size);
    if (pooled.n != n || pooled.v.size() != static_cast<std::size_t>(n) * n)
        throw std::invalid_argument("select_bbox: pooled grid must be n x n");
    if (box_size % spec.stride || c < 1 || c > n) throw std::invalid_argument("select_bbox: bad box size");

    int best_i = 0, best_j = 0;
    double best_sum = 0.0;
    bool first = true;
    for (int i = 0; i + c <= n; ++i)
        for (int j = 0; j + c <= n; ++j) {
            double s = 0.0;
            for (int m = i; m < i + c; ++m)
                for (int q = j; q < j + c; ++q) s += pooled.at(m, q);
            if (first || s > best_sum) {
                best_sum = s;
                best_i = i;
                best_j = j;
                first = false;
            }
        }
    return BBox{best_i * spec.stride, best_j * spec.stride, box_size};
}

BBox centered_box(const GridSpec& spec, PixelPoint point, int box_size) {
    if (box_size % spec.stride) throw std::invalid_argument("centered_box: box size must align to the stride");
    auto snap = [&](int coord) {
        int want = coord - box_size / 2;
        int cell = (want + spec.stride / 2) / spec.stride;  // nearest aligned offset
        int lo = 0, hi = (spec.image_size - box_size) / spec.stride;
        return std::clamp(cell, lo, hi) * spec.stride;
    };
    return BBox{snap(point.row), snap(point.col), box_size};
}

template <typename T>
TensorT<T> crop_box(const TensorT<T>& image, const BBox& box) {
    if (image.ndim() != 2) throw std::invalid_argument("crop_box: expects a 2-d image");
    const int h = image.dim(0), w = image.dim(1);
    if (box.row < 0 || box.col < 0 || box.row + box.size > h || box.col + box.size > w)
        throw std::invalid_argument("crop_box: box extends outside the image");
    TensorT<T> out({box.size, box.size});
    for (int i = 0; i < box.size; ++i)
        std::copy_n(image.data.data() + static_cast<std::size_t>(box.row + i) * w + box.col, box.size,
                    out.data.data() + static_cast<std::size_t>(i) * box.size);
    return out;
}

template <typename T>
void paste_box(TensorT<T>& image, const TensorT<T>& crop, const BBox& box) {
    const int w = image.dim(1);
    if (crop.dim(0) != box.size || crop.dim(1) != box.size)
        throw std::invalid_argument("paste_box: crop does not match the box");
    if (box.row < 0 || box.col < 0 || box.row + box.size > image.dim(0) || box.col + box.size > w)
        throw std::invalid_argument("paste_box: box extends outside the image");
    for (int i = 0; i < box.size; ++i)
        std::copy_n(crop.data.data() + static_cast<std::size_t>(i) * box.size, box.size,
                    image.data.data() + static_cast<std::size_t>(box.row + i) * w + box.col);
}

bool to_crop_coords(PixelPoint point, const BBox& box, PixelPoint* out) {
    if (!box.contains(point)) return false;
    if (out) *out = PixelPoint{point.row - box.row, point.col - box.col};
    return true;
}

template TensorT<float> crop_box<float>(const TensorT<float>&, const BBox&);
template TensorT<double> crop_box<double>(const TensorT<double>&, const BBox&);
template TensorT<std::uint8_t> crop_box<std::uint8_t>(const TensorT<std::uint8_t>&, const BBox&);
template void paste_box<float>(TensorT<float>&, const TensorT<float>&, const BBox&);
template void paste_box<double>(TensorT<double>&, const TensorT<double>&, const BBox&);
template void paste_box<std::uint8_t>(TensorT<std::uint8_t>&, const TensorT<std::uint8_t>&, const BBox&);

}  // namespace stenonet

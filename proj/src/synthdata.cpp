#include "stenonet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "stenonet/png_io.hpp"

namespace stenonet {

namespace fs = std::filesystem;

void VesselParams::validate(int image_size) const {
    const double scale = image_size / 256.0;
    if (base_half_width < 2.0 * scale) throw std::invalid_argument("vessel: base half-width too small");
    if (!(nominal_stenosis >= 0.0 && nominal_stenosis < 1.0))
        throw std::invalid_argument("vessel: stenosis fraction must lie in [0, 1)");
    if (narrowing_extent <= 0 || lesion_half_extent <= narrowing_extent)
        throw std::invalid_argument("vessel: lesion window must exceed the narrowing extent");
    if (silhouette_band_px < 1) throw std::invalid_argument("vessel: silhouette band must be >= 1 px");
}

namespace {

using Point2 = std::array<double, 2>;  // (row, col)

double catmull_rom(double p0, double p1, double p2, double p3, double t) {
    const double t2 = t * t, t3 = t2 * t;
    return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                  (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

// Smooth open curve through the control points, resampled to ~0.5 px arc
// steps.
std::vector<Point2> spline_resample(const std::vector<Point2>& ctrl, double step) {
    std::vector<Point2> padded;
    padded.push_back(ctrl.front());
    for (const auto& p : ctrl) padded.push_back(p);
    padded.push_back(ctrl.back());

    std::vector<Point2> dense;
    const int per_seg = 160;
    for (std::size_t seg = 0; seg + 3 < padded.size(); ++seg) {
        for (int i = 0; i < per_seg; ++i) {
            const double t = static_cast<double>(i) / per_seg;
            dense.push_back({catmull_rom(padded[seg][0], padded[seg + 1][0], padded[seg + 2][0],
                                         padded[seg + 3][0], t),
                             catmull_rom(padded[seg][1], padded[seg + 1][1], padded[seg + 2][1],
                                         padded[seg + 3][1], t)});
        }
    }
    dense.push_back(ctrl.back());

    std::vector<double> arc(dense.size(), 0.0);
    for (std::size_t i = 1; i < dense.size(); ++i)
        arc[i] = arc[i - 1] + std::hypot(dense[i][0] - dense[i - 1][0], dense[i][1] - dense[i - 1][1]);

    std::vector<Point2> out;
    const double total = arc.back();
    const int n = std::max(2, static_cast<int>(total / step) + 1);
    std::size_t j = 0;
    for (int i = 0; i < n; ++i) {
        const double s = total * i / (n - 1);
        while (j + 1 < arc.size() && arc[j + 1] < s) ++j;
        if (j + 1 >= arc.size()) {
            out.push_back(dense.back());
            continue;
        }
        const double denom = std::max(arc[j + 1] - arc[j], 1e-12);
        const double u = (s - arc[j]) / denom;
        out.push_back({dense[j][0] + u * (dense[j + 1][0] - dense[j][0]),
                       dense[j][1] + u * (dense[j + 1][1] - dense[j][1])});
    }
    return out;
}

bool self_intersects(const std::vector<Point2>& pts, double step, double clearance) {
    const double c2 = clearance * clearance;
    const int skip = static_cast<int>(4.0 * clearance / step);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + static_cast<std::size_t>(skip); j < pts.size(); ++j) {
            const double dr = pts[i][0] - pts[j][0], dc = pts[i][1] - pts[j][1];
            if (dr * dr + dc * dc < c2) return true;
        }
    return false;
}

std::vector<Point2> random_curve(int s, Rng& rng, double clearance, double step, int max_tries,
                                 const char* what) {
    for (int attempt = 0; attempt < max_tries; ++attempt) {
        const bool vertical = rng.uniform() < 0.5;
        const double v0 = rng.uniform(0.28, 0.72) * s;
        const double v1 = rng.uniform(0.28, 0.72) * s;
        std::vector<Point2> ctrl;
        for (int i = 0; i < 4; ++i) {
            const double u = s * (i / 3.0);
            double v = v0 + (v1 - v0) * (i / 3.0);
            if (i == 1 || i == 2) v += rng.uniform(-0.18, 0.18) * s;
            ctrl.push_back(vertical ? Point2{u, v} : Point2{v, u});
        }
        auto pts = spline_resample(ctrl, step);
        if (!self_intersects(pts, step, clearance)) return pts;
    }
    throw std::runtime_error(std::string(what) + ": kept drawing self-intersecting curves");
}

struct StampField {
    std::vector<float> sdf;       // distance to envelope boundary, negative inside
    std::vector<float> nearest_s; // arc position of the nearest centerline sample
};

// min over centerline samples of (distance - half_width), with the arc
// position of the winning sample.
StampField stamp_envelope(int s, const std::vector<Point2>& pts, const std::vector<double>& half_width,
                          double arc_step) {
    StampField f;
    f.sdf.assign(static_cast<std::size_t>(s) * s, 1e9f);
    f.nearest_s.assign(static_cast<std::size_t>(s) * s, 0.0f);
    const double pad = 2.5;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double r = pts[i][0], c = pts[i][1], hw = half_width[i];
        const double rad = hw + pad;
        const int r0 = std::max(0, static_cast<int>(std::ceil(r - rad)));
        const int r1 = std::min(s - 1, static_cast<int>(std::floor(r + rad)));
        const int c0 = std::max(0, static_cast<int>(std::ceil(c - rad)));
        const int c1 = std::min(s - 1, static_cast<int>(std::floor(c + rad)));
        const float arc = static_cast<float>(i * arc_step);
        for (int pr = r0; pr <= r1; ++pr)
            for (int pc = c0; pc <= c1; ++pc) {
                const double d = std::hypot(pr - r, pc - c) - hw;
                auto& cell = f.sdf[static_cast<std::size_t>(pr) * s + pc];
                if (static_cast<float>(d) < cell) {
                    cell = static_cast<float>(d);
                    f.nearest_s[static_cast<std::size_t>(pr) * s + pc] = arc;
                }
            }
    }
    return f;
}

double edge_coverage(double sdf) {
    // ~1.2 px anti-aliased edge
    return std::clamp(0.5 - sdf / 1.2, 0.0, 1.0);
}

}  // namespace

Sample generate_sample(const VesselParams& params, const GridSpec& spec, std::uint64_t seed) {
    spec.validate();
    params.validate(spec.image_size);
    const int s = spec.image_size;
    const double arc_step = 0.5;

    Rng base(seed);
    Rng rng_curve = base.fork(1);
    Rng rng_texture = base.fork(2);
    Rng rng_noise = base.fork(3);
    Rng rng_distractor = base.fork(4);

    auto pts = random_curve(s, rng_curve, 2.2 * params.base_half_width, arc_step, params.max_curve_tries,
                            "generate_sample");
    const double total_arc = (pts.size() - 1) * arc_step;
    const double s0 = rng_curve.uniform(0.40, 0.60) * total_arc;

    // half-width profile: gentle taper, one Gaussian narrowing at s0
    std::vector<double> healthy(pts.size()), actual(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double arc = i * arc_step;
        const double h = params.base_half_width * (1.0 + params.width_taper * (arc / total_arc - 0.5));
        const double bump = std::exp(-((arc - s0) / params.narrowing_extent) * ((arc - s0) / params.narrowing_extent));
        healthy[i] = h;
        actual[i] = h * (1.0 - params.nominal_stenosis * bump);
    }
    // ratio actual/healthy attains its minimum exactly at the bump peak
    const double stenosis_pct = 100.0 * params.nominal_stenosis;

    StampField main_field = stamp_envelope(s, pts, actual, arc_step);

    Sample out;
    out.seed = seed;
    out.stenosis_pct = stenosis_pct;
    out.centerline = pts;

    out.lesion = Mask({s, s});
    for (std::size_t i = 0; i < out.lesion.data.size(); ++i)
        out.lesion.data[i] = (main_field.sdf[i] <= 0.0f &&
                              std::abs(main_field.nearest_s[i] - s0) <= params.lesion_half_extent)
                                 ? 1
                                 : 0;
    out.silhouette = derive_silhouette(out.lesion, params.silhouette_band_px);

    const std::size_t i0 = static_cast<std::size_t>(std::lround(s0 / arc_step));
    out.point = PixelPoint{std::clamp(static_cast<int>(std::lround(pts[i0][0])), 0, s - 1),
                           std::clamp(static_cast<int>(std::lround(pts[i0][1])), 0, s - 1)};

    // background: bright base with a few low-frequency waves
    TensorF img({s, s}, 0.8f);
    struct Wave {
        double amp, fr, fc, phase;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < 4; ++k)
        waves.push_back({params.background_texture_scale * rng_texture.uniform(0.3, 1.0),
                         rng_texture.uniform(-4.0, 4.0), rng_texture.uniform(-4.0, 4.0),
                         rng_texture.uniform(0.0, 2.0 * M_PI)});
    for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c) {
            double v = img.at(r, c);
            for (const auto& w : waves)
                v += w.amp * std::cos(2.0 * M_PI * (w.fr * r + w.fc * c) / s + w.phase);
            img.at(r, c) = static_cast<float>(v);
        }

    // optional second healthy vessel; visible in the image, absent from all masks
    if (params.with_distractor) {
        const double dw = rng_distractor.uniform(0.35, 0.6) * params.base_half_width;
        auto dpts = random_curve(s, rng_distractor, 2.2 * dw, arc_step, params.max_curve_tries,
                                 "generate_sample.distractor");
        std::vector<double> dhw(dpts.size(), dw);
        StampField dfield = stamp_envelope(s, dpts, dhw, arc_step);
        const double ddepth = 0.45 * params.vessel_depth;
        for (std::size_t i = 0; i < img.data.size(); ++i)
            img.data[i] -= static_cast<float>(ddepth * edge_coverage(dfield.sdf[i]));
    }

    for (std::size_t i = 0; i < img.data.size(); ++i) {
        double v = img.data[i] - params.vessel_depth * edge_coverage(main_field.sdf[i]);
        v += rng_noise.uniform(-params.noise_amplitude, params.noise_amplitude);
        img.data[i] = static_cast<float>(std::max(v, 0.01));
    }
    out.image = contrast_standardize(img);
    return out;
}

VesselParams draw_vessel_params(const GridSpec& spec, Rng& rng) {
    const double scale = spec.image_size / 256.0;
    VesselParams p;
    p.nominal_stenosis = rng.uniform(0.0, 0.92);
    p.base_half_width = rng.uniform(6.0, 9.0) * scale;
    // keep the residual lumen raster-measurable even for severe narrowing
    const double min_residual = 0.7 * scale;
    if (p.base_half_width * (1.0 - p.nominal_stenosis) < min_residual)
        p.base_half_width = std::min(min_residual / (1.0 - p.nominal_stenosis), 11.0 * scale);
    p.width_taper = rng.uniform(-0.08, 0.08);
    p.narrowing_extent = rng.uniform(9.0, 12.0) * scale;
    p.lesion_half_extent = rng.uniform(30.0, 36.0) * scale;
    p.vessel_depth = rng.uniform(0.35, 0.55);
    p.noise_amplitude = rng.uniform(0.015, 0.04);
    p.background_texture_scale = rng.uniform(0.04, 0.10);
    p.with_distractor = rng.uniform() < 0.7;
    p.silhouette_band_px = static_cast<int>(std::lround(4.0 * scale));
    return p;
}

StenosisMeasurement measure_stenosis_oracle(const Mask& mask,
                                            const std::vector<std::array<double, 2>>& centerline) {
    StenosisMeasurement res;
    if (centerline.size() < 8) return res;
    const int h = mask.dim(0), w = mask.dim(1);
    auto inside = [&](double r, double c) {
        const int ri = static_cast<int>(std::lround(r)), ci = static_cast<int>(std::lround(c));
        return ri >= 0 && ri < h && ci >= 0 && ci < w && mask.at(ri, ci) != 0;
    };

    const double ray_step = 0.2;
    const double max_scan = 0.25 * std::max(h, w);
    const std::size_t n = centerline.size();
    std::vector<double> width(n, -1.0);  // -1: center not on the mask
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = centerline[i];
        if (!inside(p[0], p[1])) continue;
        const std::size_t a = i > 0 ? i - 1 : i;
        const std::size_t b = i + 1 < n ? i + 1 : i;
        double tr = centerline[b][0] - centerline[a][0];
        double tc = centerline[b][1] - centerline[a][1];
        const double len = std::hypot(tr, tc);
        if (len < 1e-9) continue;
        tr /= len;
        tc /= len;
        const double nr = -tc, nc = tr;
        double reach[2] = {0.0, 0.0};
        for (int dir = 0; dir < 2; ++dir) {
            const double sgn = dir == 0 ? 1.0 : -1.0;
            double d = ray_step;
            while (d <= max_scan && inside(p[0] + sgn * nr * d, p[1] + sgn * nc * d)) d += ray_step;
            // bisect the exit interval for a sub-step boundary estimate
            double lo = d - ray_step, hi = d;
            for (int it = 0; it < 4; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (inside(p[0] + sgn * nr * mid, p[1] + sgn * nc * mid))
                    lo = mid;
                else
                    hi = mid;
            }
            reach[dir] = 0.5 * (lo + hi);
        }
        width[i] = reach[0] + reach[1];
    }

    // contiguous lesion span along the centerline
    std::size_t first = n, last = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (width[i] >= 0.0) {
            first = std::min(first, i);
            last = std::max(last, i);
        }
    if (first >= last || last - first < 30) return res;

    // trim the window cut ends, whose chords clip against the lesion boundary
    const std::size_t trim = 10;
    if (last - first < 3 * trim) return res;
    std::vector<double> ws;
    for (std::size_t i = first + trim; i + trim <= last; ++i) ws.push_back(std::max(width[i], 0.0));

    // zero-width sections invalidate the measurement
    std::size_t zero_run = 0;
    for (double v : ws) {
        zero_run = v <= 0.0 ? zero_run + 1 : 0;
        if (zero_run >= 8) return res;
    }

    auto median_of = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    // moving median kills raster spikes, moving mean settles the rest
    std::vector<double> med(ws.size());
    for (std::size_t i = 0; i < ws.size(); ++i) {
        std::vector<double> win;
        for (std::size_t j = i >= 2 ? i - 2 : 0; j < std::min(ws.size(), i + 3); ++j) win.push_back(ws[j]);
        med[i] = median_of(win);
    }
    std::vector<double> smooth(ws.size());
    for (std::size_t i = 0; i < ws.size(); ++i) {
        double acc = 0.0;
        int cnt = 0;
        for (std::size_t j = i >= 3 ? i - 3 : 0; j < std::min(ws.size(), i + 4); ++j) {
            acc += med[j];
            ++cnt;
        }
        smooth[i] = acc / cnt;
    }
    if (smooth.size() < 24) return res;

    // reference diameter from the two healthy window ends
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
        head += smooth[i];
        tail += smooth[smooth.size() - 1 - i];
    }
    const double ref = 0.5 * (head / 8.0 + tail / 8.0);
    if (!(ref > 1e-6)) return res;

    // narrowest point: argmin over the middle half, then a least-squares
    // parabola over the median-filtered widths for a sub-pixel floor
    const std::size_t q = smooth.size() / 4;
    std::size_t lo_idx = q;
    for (std::size_t i = q; i < smooth.size() - q; ++i)
        if (smooth[i] < smooth[lo_idx]) lo_idx = i;
    const std::size_t fit_lo = lo_idx >= 10 ? lo_idx - 10 : 0;
    const std::size_t fit_hi = std::min(lo_idx + 11, med.size());
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, t0 = 0, t1 = 0, t2 = 0;
    for (std::size_t i = fit_lo; i < fit_hi; ++i) {
        const double x = static_cast<double>(i) - static_cast<double>(lo_idx);
        const double y = med[i];
        s0 += 1;
        s1 += x;
        s2 += x * x;
        s3 += x * x * x;
        s4 += x * x * x * x;
        t0 += y;
        t1 += x * y;
        t2 += x * x * y;
    }
    // normal equations for y = a + b x + c x^2
    double minw = smooth[lo_idx];
    const double d = s0 * (s2 * s4 - s3 * s3) - s1 * (s1 * s4 - s2 * s3) + s2 * (s1 * s3 - s2 * s2);
    if (std::abs(d) > 1e-9) {
        const double a = (t0 * (s2 * s4 - s3 * s3) - s1 * (t1 * s4 - t2 * s3) + s2 * (t1 * s3 - t2 * s2)) / d;
        const double b = (s0 * (t1 * s4 - t2 * s3) - t0 * (s1 * s4 - s2 * s3) + s2 * (s1 * t2 - s2 * t1)) / d;
        const double c = (s0 * (s2 * t2 - s3 * t1) - s1 * (s1 * t2 - s3 * t0) + t0 * (s1 * s3 - s2 * s2)) / d;
        if (c > 1e-9) {
            const double vertex = a - b * b / (4.0 * c);
            if (std::isfinite(vertex))
                minw = std::clamp(vertex, std::max(0.0, smooth[lo_idx] - 0.75), smooth[lo_idx] + 0.5);
        }
    }

    res.ref_width = ref;
    res.min_width = minw;
    res.pct = std::clamp(100.0 * (1.0 - minw / ref), 0.0, 100.0);
    res.valid = true;
    return res;
}

Mask derive_silhouette(const Mask& lesion, int band_px) {
    if (band_px < 1) throw std::invalid_argument("derive_silhouette: band must be >= 1 px");
    bool any = false;
    for (auto v : lesion.data) any = any || v;
    if (!any) throw std::invalid_argument("derive_silhouette: empty lesion mask");

    std::vector<std::pair<int, int>> offsets;
    for (int di = -band_px; di <= band_px; ++di)
        for (int dj = -band_px; dj <= band_px; ++dj)
            if (di * di + dj * dj <= band_px * band_px && !(di == 0 && dj == 0)) offsets.emplace_back(di, dj);

    const int h = lesion.dim(0), w = lesion.dim(1);
    Mask out({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            if (lesion.at(i, j)) continue;
            for (const auto& [di, dj] : offsets) {
                const int r = i + di, c = j + dj;
                if (r >= 0 && r < h && c >= 0 && c < w && lesion.at(r, c)) {
                    out.at(i, j) = 1;
                    break;
                }
            }
        }
    return out;
}

TensorF contrast_standardize(const TensorF& image, bool* constant_flag) {
    if (image.data.empty()) throw std::invalid_argument("contrast_standardize: empty image");
    float lo = image.data[0], hi = image.data[0];
    for (float v : image.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    TensorF out(image.shape);
    if (hi <= lo) {
        if (constant_flag) *constant_flag = true;
        return out;  // all zeros
    }
    if (constant_flag) *constant_flag = false;
    const float inv = 1.0f / (hi - lo);
    for (std::size_t i = 0; i < image.data.size(); ++i) out.data[i] = (image.data[i] - lo) * inv;
    return out;
}

TensorF resize_to(const TensorF& image, int size) {
    if (image.ndim() != 2) throw std::invalid_argument("resize_to: expects 2-d image");
    const int h = image.dim(0), w = image.dim(1);
    if (h == size && w == size) return image;
    TensorF out({size, size});
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            const double sr = (i + 0.5) * h / size - 0.5;
            const double sc = (j + 0.5) * w / size - 0.5;
            const int r0 = std::clamp(static_cast<int>(std::floor(sr)), 0, h - 1);
            const int c0 = std::clamp(static_cast<int>(std::floor(sc)), 0, w - 1);
            const int r1 = std::min(r0 + 1, h - 1), c1 = std::min(c0 + 1, w - 1);
            const double fr = std::clamp(sr - r0, 0.0, 1.0), fc = std::clamp(sc - c0, 0.0, 1.0);
            out.at(i, j) = static_cast<float>((1 - fr) * ((1 - fc) * image.at(r0, c0) + fc * image.at(r0, c1)) +
                                              fr * ((1 - fc) * image.at(r1, c0) + fc * image.at(r1, c1)));
        }
    return out;
}

Mask resize_mask_to(const Mask& mask, int size) {
    if (mask.ndim() != 2) throw std::invalid_argument("resize_mask_to: expects 2-d mask");
    const int h = mask.dim(0), w = mask.dim(1);
    if (h == size && w == size) return mask;
    Mask out({size, size});
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            const int r = std::clamp(static_cast<int>(std::lround((i + 0.5) * h / size - 0.5)), 0, h - 1);
            const int c = std::clamp(static_cast<int>(std::lround((j + 0.5) * w / size - 0.5)), 0, w - 1);
            out.at(i, j) = mask.at(r, c);
        }
    return out;
}

void AugmentConfig::validate() const {
    if (rotation_deg < 0 || shear_deg < 0 || shift_frac < 0)
        throw std::invalid_argument("augment config: ranges must be non-negative");
    if (elastic_enabled && (elastic_alpha <= 0 || elastic_sigma <= 0))
        throw std::invalid_argument("augment config: elastic parameters must be positive");
}

std::array<double, 2> AffineTransform::apply(double row, double col) const {
    const double r = row - center[0], c = col - center[1];
    return {linear[0][0] * r + linear[0][1] * c + center[0] + shift[0],
            linear[1][0] * r + linear[1][1] * c + center[1] + shift[1]};
}

std::array<double, 2> AffineTransform::apply_inverse(double row, double col) const {
    const double r = row - center[0] - shift[0], c = col - center[1] - shift[1];
    const double d = det();
    return {(linear[1][1] * r - linear[0][1] * c) / d + center[0],
            (-linear[1][0] * r + linear[0][0] * c) / d + center[1]};
}

AffineTransform sample_affine(const AugmentConfig& cfg, int image_size, Rng& rng) {
    const double theta = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) * M_PI / 180.0;
    const double shear = rng.uniform(-cfg.shear_deg, cfg.shear_deg) * M_PI / 180.0;
    const double shift_r = rng.uniform(-cfg.shift_frac, cfg.shift_frac) * image_size;
    const double shift_c = rng.uniform(-cfg.shift_frac, cfg.shift_frac) * image_size;

    // rotation composed after a horizontal shear (col' = col + sh * row);
    // both factors have determinant 1, so no draw can produce a reflection
    const double ct = std::cos(theta), st = std::sin(theta), sh = std::tan(shear);
    AffineTransform t;
    t.linear[0][0] = ct + st * sh;
    t.linear[0][1] = st;
    t.linear[1][0] = -st + ct * sh;
    t.linear[1][1] = ct;
    t.shift[0] = shift_r;
    t.shift[1] = shift_c;
    t.center[0] = (image_size - 1) / 2.0;
    t.center[1] = t.center[0];
    return t;
}

namespace {

TensorF warp_image(const TensorF& img, const AffineTransform& t) {
    const int h = img.dim(0), w = img.dim(1);
    TensorF out(img.shape);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const auto src = t.apply_inverse(i, j);
            const double sr = std::clamp(src[0], 0.0, h - 1.0), sc = std::clamp(src[1], 0.0, w - 1.0);
            const int r0 = static_cast<int>(sr), c0 = static_cast<int>(sc);
            const int r1 = std::min(r0 + 1, h - 1), c1 = std::min(c0 + 1, w - 1);
            const double fr = sr - r0, fc = sc - c0;
            out.at(i, j) = static_cast<float>((1 - fr) * ((1 - fc) * img.at(r0, c0) + fc * img.at(r0, c1)) +
                                              fr * ((1 - fc) * img.at(r1, c0) + fc * img.at(r1, c1)));
        }
    return out;
}

Mask warp_mask(const Mask& mask, const AffineTransform& t) {
    const int h = mask.dim(0), w = mask.dim(1);
    Mask out(mask.shape);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const auto src = t.apply_inverse(i, j);
            const int r = static_cast<int>(std::lround(src[0])), c = static_cast<int>(std::lround(src[1]));
            out.at(i, j) = (r >= 0 && r < h && c >= 0 && c < w) ? mask.at(r, c) : 0;
        }
    return out;
}

// separable Gaussian blur with edge clamping
void gaussian_blur_inplace(std::vector<double>& field, int h, int w, double sigma) {
    const int rad = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * rad + 1));
    double norm = 0.0;
    for (int i = -rad; i <= rad; ++i) {
        kernel[static_cast<std::size_t>(i + rad)] = std::exp(-0.5 * i * i / (sigma * sigma));
        norm += kernel[static_cast<std::size_t>(i + rad)];
    }
    for (auto& k : kernel) k /= norm;

    std::vector<double> tmp(field.size());
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double acc = 0.0;
            for (int d = -rad; d <= rad; ++d)
                acc += kernel[static_cast<std::size_t>(d + rad)] *
                       field[static_cast<std::size_t>(i) * w + std::clamp(j + d, 0, w - 1)];
            tmp[static_cast<std::size_t>(i) * w + j] = acc;
        }
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double acc = 0.0;
            for (int d = -rad; d <= rad; ++d)
                acc += kernel[static_cast<std::size_t>(d + rad)] *
                       tmp[static_cast<std::size_t>(std::clamp(i + d, 0, h - 1)) * w + j];
            field[static_cast<std::size_t>(i) * w + j] = acc;
        }
}

}  // namespace

Sample augment(const Sample& sample, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    const int s = sample.image.dim(0);

    AffineTransform t;
    PixelPoint moved = sample.point;
    bool found = false;
    for (int attempt = 0; attempt < 5; ++attempt) {
        AffineTransform cand = sample_affine(cfg, s, rng);
        const auto p = cand.apply(sample.point.row, sample.point.col);
        const int r = static_cast<int>(std::lround(p[0])), c = static_cast<int>(std::lround(p[1]));
        if (r >= 0 && r < s && c >= 0 && c < s) {
            t = cand;
            moved = PixelPoint{r, c};
            found = true;
            break;
        }
    }
    if (!found) return sample;  // pass through unaugmented

    Sample out;
    out.image = warp_image(sample.image, t);
    out.lesion = warp_mask(sample.lesion, t);
    out.silhouette = warp_mask(sample.silhouette, t);
    out.point = moved;
    out.stenosis_pct = sample.stenosis_pct;
    out.seed = sample.seed;

    if (cfg.elastic_enabled) {
        std::vector<double> dr(out.image.data.size()), dc(out.image.data.size());
        for (auto& v : dr) v = rng.uniform(-1.0, 1.0);
        for (auto& v : dc) v = rng.uniform(-1.0, 1.0);
        gaussian_blur_inplace(dr, s, s, cfg.elastic_sigma);
        gaussian_blur_inplace(dc, s, s, cfg.elastic_sigma);
        for (auto& v : dr) v *= cfg.elastic_alpha;
        for (auto& v : dc) v *= cfg.elastic_alpha;

        auto displaced = [&](const auto& grid, int i, int j, auto outside) {
            const double sr = i + dr[static_cast<std::size_t>(i) * s + j];
            const double sc = j + dc[static_cast<std::size_t>(i) * s + j];
            const int r = static_cast<int>(std::lround(sr)), c = static_cast<int>(std::lround(sc));
            if (r < 0 || r >= s || c < 0 || c >= s) return outside;
            return grid.at(r, c);
        };
        TensorF img2(out.image.shape);
        Mask les2(out.lesion.shape), sil2(out.silhouette.shape);
        for (int i = 0; i < s; ++i)
            for (int j = 0; j < s; ++j) {
                img2.at(i, j) = displaced(out.image, i, j, out.image.at(std::clamp(i, 0, s - 1), std::clamp(j, 0, s - 1)));
                les2.at(i, j) = displaced(out.lesion, i, j, static_cast<std::uint8_t>(0));
                sil2.at(i, j) = displaced(out.silhouette, i, j, static_cast<std::uint8_t>(0));
            }
        const std::size_t pidx = static_cast<std::size_t>(out.point.row) * s + out.point.col;
        out.point.row = std::clamp(static_cast<int>(std::lround(out.point.row - dr[pidx])), 0, s - 1);
        out.point.col = std::clamp(static_cast<int>(std::lround(out.point.col - dc[pidx])), 0, s - 1);
        out.image = std::move(img2);
        out.lesion = std::move(les2);
        out.silhouette = std::move(sil2);
    }
    return out;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

void SplitSpec::validate() const {
    if (ratios[0] + ratios[1] + ratios[2] != 100) throw std::invalid_argument("split: ratios must sum to 100");
    if (thresholds.size() < 2) throw std::invalid_argument("split: need at least one stratum");
    for (std::size_t i = 1; i < thresholds.size(); ++i)
        if (!(thresholds[i] > thresholds[i - 1]))
            throw std::invalid_argument("split: thresholds must be strictly increasing");
}

int SplitSpec::stratum_of(double pct) const {
    // left-closed/right-open bands, the last one closed
    for (int i = 0; i + 1 < static_cast<int>(thresholds.size()); ++i)
        if (pct < thresholds[static_cast<std::size_t>(i + 1)]) return i;
    return num_strata() - 1;
}

std::vector<Split> stratified_split(const std::vector<double>& stenosis_pcts, const SplitSpec& spec) {
    spec.validate();
    if (stenosis_pcts.empty()) throw std::invalid_argument("stratified_split: empty input");

    std::vector<std::vector<int>> strata(static_cast<std::size_t>(spec.num_strata()));
    for (std::size_t i = 0; i < stenosis_pcts.size(); ++i)
        strata[static_cast<std::size_t>(spec.stratum_of(stenosis_pcts[i]))].push_back(static_cast<int>(i));

    std::vector<Split> out(stenosis_pcts.size(), Split::Train);
    Rng rng(spec.seed);
    for (std::size_t st = 0; st < strata.size(); ++st) {
        auto& members = strata[st];
        if (members.empty()) continue;
        Rng srng = rng.fork(st);
        srng.shuffle(members.begin(), members.end());

        // largest-remainder apportionment of 70:15:15
        const int n = static_cast<int>(members.size());
        int counts[3];
        double rema[3];
        int assigned = 0;
        for (int k = 0; k < 3; ++k) {
            const double exact = static_cast<double>(n) * spec.ratios[static_cast<std::size_t>(k)] / 100.0;
            counts[k] = static_cast<int>(std::floor(exact));
            rema[k] = exact - counts[k];
            assigned += counts[k];
        }
        for (int left = n - assigned; left > 0; --left) {
            int pick = 0;
            for (int k = 1; k < 3; ++k)
                if (rema[k] > rema[pick]) pick = k;  // ties go to the earlier split
            counts[pick]++;
            rema[pick] = -1.0;
        }
        int cursor = 0;
        for (int k = 0; k < 3; ++k)
            for (int c = 0; c < counts[k]; ++c)
                out[static_cast<std::size_t>(members[static_cast<std::size_t>(cursor++)])] =
                    static_cast<Split>(k);
    }
    return out;
}

std::vector<int> Dataset::indices_of(Split s) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].split == s) out.push_back(static_cast<int>(i));
    return out;
}

Dataset make_dataset(int n, std::uint64_t master_seed, const GridSpec& spec, const SplitSpec& split_spec) {
    if (n < 1) throw std::invalid_argument("make_dataset: need at least one sample");
    Dataset ds;
    ds.grid = spec;
    std::vector<double> pcts;
    for (int i = 0; i < n; ++i) {
        const std::uint64_t sample_seed = master_seed + static_cast<std::uint64_t>(i);
        Rng prng = Rng(sample_seed).fork(0);
        VesselParams params = draw_vessel_params(spec, prng);
        DatasetItem item;
        item.sample = generate_sample(params, spec, sample_seed);
        char buf[16];
        std::snprintf(buf, sizeof buf, "s%06d", i);
        item.id = buf;
        item.stratum = split_spec.stratum_of(item.sample.stenosis_pct);
        pcts.push_back(item.sample.stenosis_pct);
        ds.items.push_back(std::move(item));
    }
    const auto splits = stratified_split(pcts, split_spec);
    for (std::size_t i = 0; i < ds.items.size(); ++i) ds.items[i].split = splits[i];
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    fs::create_directories(fs::path(dir) / "silhouettes");
    std::ofstream manifest(fs::path(dir) / "manifest.jsonl", std::ios::trunc);
    if (!manifest) throw std::runtime_error("cannot write manifest in " + dir);
    for (const auto& item : ds.items) {
        const std::string img_rel = "images/" + item.id + ".png";
        const std::string mask_rel = "masks/" + item.id + ".png";
        const std::string sil_rel = "silhouettes/" + item.id + ".png";
        write_png_gray16((fs::path(dir) / img_rel).string(), item.sample.image);
        write_png_mask((fs::path(dir) / mask_rel).string(), item.sample.lesion);
        write_png_mask((fs::path(dir) / sil_rel).string(), item.sample.silhouette);
        nlohmann::json j{{"id", item.id},
                         {"image", img_rel},
                         {"mask", mask_rel},
                         {"silhouette", sil_rel},
                         {"stenosis_row", item.sample.point.row},
                         {"stenosis_col", item.sample.point.col},
                         {"stenosis_pct", item.sample.stenosis_pct},
                         {"stratum", item.stratum},
                         {"split", split_name(item.split)}};
        manifest << j.dump() << "\n";
    }
}

Dataset read_dataset(const std::string& dir, const GridSpec& grid) {
    std::ifstream manifest(fs::path(dir) / "manifest.jsonl");
    if (!manifest) throw std::runtime_error("no manifest.jsonl in " + dir);
    Dataset ds;
    ds.grid = grid;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        DatasetItem item;
        item.id = j.at("id").get<std::string>();
        item.sample.image = read_png_gray16((fs::path(dir) / j.at("image").get<std::string>()).string());
        item.sample.lesion = read_png_mask((fs::path(dir) / j.at("mask").get<std::string>()).string());
        item.sample.silhouette =
            read_png_mask((fs::path(dir) / j.at("silhouette").get<std::string>()).string());
        item.sample.point = PixelPoint{j.at("stenosis_row").get<int>(), j.at("stenosis_col").get<int>()};
        item.sample.stenosis_pct = j.at("stenosis_pct").get<double>();
        item.stratum = j.at("stratum").get<int>();
        const std::string sp = j.at("split").get<std::string>();
        item.split = sp == "train" ? Split::Train : sp == "val" ? Split::Val : Split::Test;
        if (item.sample.image.dim(0) != grid.image_size)
            throw std::runtime_error("dataset image size disagrees with the grid profile");
        ds.items.push_back(std::move(item));
    }
    if (ds.items.empty()) throw std::runtime_error("empty dataset in " + dir);
    return ds;
}

}  // namespace stenonet

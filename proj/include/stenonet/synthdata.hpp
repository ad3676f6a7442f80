#pragma once

#include <array>
#include <string>
#include <vector>

#include "stenonet/geometry.hpp"
#include "stenonet/tensor.hpp"

namespace stenonet {

/// Knobs of one synthetic vessel: a smooth random centerline carrying a
/// slowly tapering half-width profile with a single Gaussian narrowing.
struct VesselParams {
    int num_control_points = 4;
    double base_half_width = 6.0;   // px; keep >= 4 px at the 256 scale
    double width_taper = 0.0;       // fractional end-to-end width change
    double nominal_stenosis = 0.5;  // fraction in [0, 1)
    double narrowing_extent = 12.0; // Gaussian width along the centerline, px
    double lesion_half_extent = 30.0;  // lesion window half-length, px
    double vessel_depth = 0.45;     // vessel darkness against the background
    double noise_amplitude = 0.03;
    double background_texture_scale = 0.08;
    bool with_distractor = true;    // second healthy vessel, image only
    int silhouette_band_px = 4;
    int max_curve_tries = 10;

    void validate(int image_size) const;
};

/// One synthetic case with exact ground truth. The centerline (row, col
/// samples at ~0.5 px spacing) is generator metadata consumed by the width
/// oracle; it is not serialized.
struct Sample {
    TensorF image;     // S x S, contrast-standardized to [0, 1]
    Mask lesion;       // S x S binary
    Mask silhouette;   // S x S binary, disjoint from the lesion
    PixelPoint point;  // centerline location of minimal diameter
    double stenosis_pct = 0.0;  // 100 * (1 - min diameter / reference diameter)
    std::uint64_t seed = 0;
    std::vector<std::array<double, 2>> centerline;
};

/// Renders a dark vessel over a textured bright background, deterministic in
/// (params, seed). Degenerate (self-intersecting) curves are regenerated up
/// to max_curve_tries before failing.
Sample generate_sample(const VesselParams& params, const GridSpec& spec, std::uint64_t seed);

/// Draws per-sample VesselParams for dataset building; ranges scale with the
/// image size.
VesselParams draw_vessel_params(const GridSpec& spec, Rng& rng);

struct StenosisMeasurement {
    double pct = 0.0;
    double min_width = 0.0;
    double ref_width = 0.0;
    bool valid = false;
};

/// Independent check of a sample's stenosis: walks the centerline and
/// measures the vessel width as the perpendicular ray chord through the
/// mask. Flags the measurement invalid when the mask has an extended
/// zero-width section.
StenosisMeasurement measure_stenosis_oracle(const Mask& mask,
                                            const std::vector<std::array<double, 2>>& centerline);

/// Band of non-lesion pixels within band_px of the lesion; disjoint from the
/// lesion by construction.
Mask derive_silhouette(const Mask& lesion, int band_px);

/// Affine rescale so min = 0 and max = 1. A constant image maps to all
/// zeros with `constant_flag` set.
TensorF contrast_standardize(const TensorF& image, bool* constant_flag = nullptr);

/// Bilinear resize for images; masks use resize_mask_to (nearest neighbour,
/// stays binary).
TensorF resize_to(const TensorF& image, int size);
Mask resize_mask_to(const Mask& mask, int size);

/// Training-phase augmentation: rotation +/-7 deg, shear +/-7 deg, shift
/// +/-0.04 of the extent per axis, all uniform; flips are never generated.
/// Elastic deformation (alpha=70, sigma=7) is implemented but off by
/// default.
struct AugmentConfig {
    double rotation_deg = 7.0;
    double shear_deg = 7.0;
    double shift_frac = 0.04;
    double elastic_alpha = 70.0;
    double elastic_sigma = 7.0;
    bool elastic_enabled = false;

    void validate() const;
};

/// Affine map p_out = linear * (p - center) + center + shift, in (row, col).
struct AffineTransform {
    double linear[2][2] = {{1, 0}, {0, 1}};
    double shift[2] = {0, 0};
    double center[2] = {0, 0};

    std::array<double, 2> apply(double row, double col) const;
    std::array<double, 2> apply_inverse(double row, double col) const;
    double det() const { return linear[0][0] * linear[1][1] - linear[0][1] * linear[1][0]; }
};

/// The rotation-shear-shift draw used by augment(); exposed so tests can
/// assert the no-reflection property.
AffineTransform sample_affine(const AugmentConfig& cfg, int image_size, Rng& rng);

/// One transform applied identically to image (bilinear), masks (nearest)
/// and point. If the point lands out of bounds the transform is resampled
/// up to 5 times, then the sample passes through unaugmented.
Sample augment(const Sample& sample, const AugmentConfig& cfg, Rng& rng);

enum class Split { Train, Val, Test };

const char* split_name(Split s);

/// 70:15:15 split, stratified over stenosis-degree bands
/// [0,30) [30,55) [55,70) [70,85) [85,100], largest-remainder rounding
/// within each stratum.
struct SplitSpec {
    std::array<int, 3> ratios{70, 15, 15};
    std::vector<double> thresholds{0, 30, 55, 70, 85, 100};
    std::uint64_t seed = 0;

    void validate() const;
    int stratum_of(double pct) const;
    int num_strata() const { return static_cast<int>(thresholds.size()) - 1; }
};

std::vector<Split> stratified_split(const std::vector<double>& stenosis_pcts, const SplitSpec& spec);

struct DatasetItem {
    Sample sample;
    std::string id;
    int stratum = 0;
    Split split = Split::Train;
};

struct Dataset {
    GridSpec grid;
    std::vector<DatasetItem> items;

    std::vector<int> indices_of(Split s) const;
};

/// Pure function of (spec, split_spec, n, master_seed); per-sample seeds are
/// master_seed + index.
Dataset make_dataset(int n, std::uint64_t master_seed, const GridSpec& spec, const SplitSpec& split_spec);

/// Directory layout: manifest.jsonl plus images/*.png (16-bit gray),
/// masks/*.png and silhouettes/*.png (8-bit 0/255).
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir, const GridSpec& grid);

}  // namespace stenonet

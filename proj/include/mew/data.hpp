#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mew/errors.hpp"
#include "mew/rng.hpp"
#include "mew/spectral.hpp"
#include "mew/tensor.hpp"

namespace mew {

struct SegmentationSample {
    Tensor image;  ///< [Cin,H,W], values in [0,1]
    Tensor mask;   ///< [H,W], integer labels
    std::string id;
    std::uint64_t seed = 0;
};

using Dataset = std::vector<SegmentationSample>;

/// A cosine grating along one spatial axis: amplitude * gain[c] * cos(2 pi f t + phase),
/// phase drawn uniformly from [0, phase_jitter) per image.
struct TextureComponent {
    char axis = 'h';  ///< 'h' varies along rows, 'w' along columns
    double frequency = 0.2;  ///< cycles per pixel
    double amplitude = 0.1;
    double phase_jitter = 6.283185307179586;
    std::vector<double> gains;  ///< per channel; empty means 1 for every channel
};

struct RegionTexture {
    std::vector<TextureComponent> components;
    double noise = 0.05;  ///< std of additive Gaussian pixel noise
};

/// Texture recipe per label. Regions 0 and 1 must have crossing single-axis
/// strength curves but separated multi-axis curves; generation checks this.
struct TextureSpec {
    double base_level = 0.5;
    std::vector<RegionTexture> regions;

    /// Background: row grating. Foreground: stronger column grating plus a
    /// weaker row grating at another frequency, and 1.5x the noise.
    static TextureSpec standard(std::size_t n_classes, double amplitude = 0.1, double noise = 0.05);
    void validate(std::size_t n_classes, std::size_t in_channels) const;
};

/// Random ellipse layouts drawn over the background region.
struct LayoutSpec {
    std::size_t min_shapes = 1;
    std::size_t max_shapes = 3;
    double min_radius = 0.12;  ///< fraction of the image side
    double max_radius = 0.28;
};

struct DataConfig {
    std::size_t n_train = 200;
    std::size_t n_test = 50;
    std::size_t image_size = 64;
    std::size_t in_channels = 3;
    std::size_t n_classes = 2;
    std::uint64_t seed = 0;
    double amplitude = 0.1;
    double noise = 0.05;
    LayoutSpec layout;

    void validate() const;
    TextureSpec texture() const { return TextureSpec::standard(n_classes, amplitude, noise); }
};

nlohmann::json to_json(const DataConfig& c);
DataConfig data_config_from_json(const nlohmann::json& j);

/// Sample i depends only on (seed, i). Verifies texture separability first
/// (throws DataError when it does not hold).
Dataset generate_dataset(std::size_t n, std::size_t image_size, std::size_t n_classes, const TextureSpec& spec,
                         std::uint64_t seed, std::size_t in_channels = 3, const LayoutSpec& layout = {});

/// One directory: data.mewt (images and masks as f32 records) plus index.json.
void save_dataset(const std::filesystem::path& dir, const Dataset& data, std::size_t n_classes);
/// Throws DataError on missing files, corrupt containers or out-of-range labels.
Dataset load_dataset(const std::filesystem::path& dir);

/// Writes train/ and test/ splits plus the resolved config under `root`.
void write_dataset_root(const std::filesystem::path& root, const DataConfig& cfg);

struct AugmentConfig {
    bool flip = true;   ///< horizontal and vertical, p = 0.5 each
    bool rot90 = true;  ///< k * 90 degrees, k uniform in {0,1,2,3}
};

/// Image and mask receive the same draw. Consumes exactly three uniforms.
SegmentationSample augment(const SegmentationSample& s, Rng& rng, const AugmentConfig& cfg = {});

// Geometric helpers on the last two axes of a rank-2 or rank-3 tensor.
Tensor flip_h(const Tensor& t);  ///< mirror columns
Tensor flip_v(const Tensor& t);  ///< mirror rows
Tensor rot90(const Tensor& t, int k);  ///< counter-clockwise, square only

/// Mean signal-strength curves of one region over patches fully inside it.
struct RegionCurves {
    std::size_t region = 0;
    std::size_t patches = 0;
    std::vector<double> single;
    std::vector<double> multi;
};

/// Per-channel mean removal then signal_strength_curve.
std::vector<double> patch_curve(const Tensor& patch, CurveMode mode);

/// Scans each sample on a grid for patch x patch windows whose labels are
/// uniform; at most `per_image` windows per region and image, `max_patches`
/// per region overall.
std::vector<RegionCurves> region_curves(const Dataset& data, std::size_t n_classes, std::size_t patch = 10,
                                        std::size_t max_patches = 64, std::size_t per_image = 2);

/// Curves of explicit patches (top-left corner (y, x) in sample `index`).
struct PatchRef {
    std::size_t index = 0;
    std::size_t y = 0;
    std::size_t x = 0;
};
RegionCurves patch_set_curves(const Dataset& data, const std::vector<PatchRef>& refs, std::size_t patch = 10);

struct Separability {
    std::size_t single_crossings = 0;
    std::size_t multi_crossings = 0;
    bool holds() const { return single_crossings > 0 && multi_crossings == 0; }
};

Separability compare_regions(const RegionCurves& a, const RegionCurves& b);

/// Checks regions 0 and 1 of a texture on pure-texture images.
Separability texture_separability(const TextureSpec& spec, std::size_t in_channels, std::size_t image_size,
                                  std::uint64_t seed, std::size_t patches = 64);

}  // namespace mew

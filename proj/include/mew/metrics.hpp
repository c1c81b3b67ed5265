#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "mew/tensor.hpp"

namespace mew {

/// Pixel counts for one class treated as foreground.
struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o);
    bool operator==(const ConfusionCounts&) const = default;
};

/// Label maps are [H,W] tensors holding integer class ids.
ConfusionCounts confusion(const Tensor& pred, const Tensor& gt, std::size_t cls);

struct Rates {
    double iou = 0;
    double dsc = 0;
    double acc = 0;
    double sen = 0;
    double spe = 0;
};

/// Any rate whose denominator is zero is 1 (nothing to get wrong), so an
/// empty prediction of an empty class scores iou = dsc = 1.
Rates rates(const ConfusionCounts& c);

/// Linear interpolation between order statistics (numpy's default);
/// q in [0, 100]. `values` must be nonempty.
double percentile(std::vector<double> values, double q);

/// Exact squared Euclidean distance to the nearest `true` cell of a [H,W]
/// occupancy grid; +inf everywhere when the grid is empty.
std::vector<double> squared_distance_transform(const std::vector<bool>& occupied, std::size_t h, std::size_t w);

/// Symmetric 95th-percentile Hausdorff distance between the foreground point
/// sets of two binary [H,W] masks (nonzero = foreground), in pixels.
/// Both empty -> 0; exactly one empty -> +inf.
double hd95(const Tensor& pred, const Tensor& gt);

struct ClassReport {
    ConfusionCounts counts;
    Rates rates;
    double hd95 = 0;               ///< mean over samples with a finite value
    std::size_t hd95_samples = 0;  ///< samples included in the mean
    std::size_t hd95_infinite = 0; ///< samples excluded (one mask empty)
};

struct MetricReport {
    std::vector<ClassReport> classes;
    Rates mean;          ///< unweighted mean of the per-class rates
    double mean_hd95 = 0;
    std::size_t samples = 0;

    double miou() const { return mean.iou; }
    nlohmann::json to_json() const;
    /// One row per class plus a "mean" row.
    std::string to_csv() const;
};

/// Pools confusion counts per class over every added sample; HD95 is
/// averaged per sample.
class MetricAccumulator {
public:
    explicit MetricAccumulator(std::size_t n_classes);
    void add(const Tensor& pred, const Tensor& gt);
    MetricReport report() const;

private:
    std::size_t n_classes_;
    std::size_t samples_ = 0;
    std::vector<ConfusionCounts> counts_;
    std::vector<double> hd_sum_;
    std::vector<std::size_t> hd_n_;
    std::vector<std::size_t> hd_inf_;
};

/// Argmax over the class axis of [K,H,W] logits (ties -> lowest class).
Tensor predict_labels(const Tensor& logits);

}  // namespace mew

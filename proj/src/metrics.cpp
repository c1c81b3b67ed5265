#include "mew/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mew {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

namespace {

void require_label_maps(const Tensor& pred, const Tensor& gt) {
    if (pred.rank() != 2 || pred.shape() != gt.shape())
        throw ShapeError("label maps must be equally shaped [H,W], got " + shape_str(pred.shape()) + " and " +
                         shape_str(gt.shape()));
}

double ratio(double num, double den) { return den == 0 ? 1.0 : num / den; }

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

ConfusionCounts confusion(const Tensor& pred, const Tensor& gt, std::size_t cls) {
    require_label_maps(pred, gt);
    const double c = static_cast<double>(cls);
    ConfusionCounts k;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == c, g = gt[i] == c;
        if (p && g) ++k.tp;
        else if (p) ++k.fp;
        else if (g) ++k.fn;
        else ++k.tn;
    }
    return k;
}

Rates rates(const ConfusionCounts& c) {
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
    return {ratio(tp, tp + fp + fn), ratio(2 * tp, 2 * tp + fp + fn), ratio(tp + tn, tp + tn + fp + fn),
            ratio(tp, tp + fn), ratio(tn, tn + fp)};
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of an empty set");
    if (q < 0 || q > 100) throw std::invalid_argument("percentile q outside [0,100]");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

namespace {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher), one line.
void edt_1d(const double* f, double* d, std::size_t n, std::vector<std::size_t>& v, std::vector<double>& z) {
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    std::size_t k = 0;
    std::size_t first = n;
    for (std::size_t q = 0; q < n; ++q)
        if (std::isfinite(f[q])) {
            first = q;
            break;
        }
    if (first == n) {
        std::fill(d, d + n, kInf);
        return;
    }
    v[0] = first;
    z[0] = -kInf;
    z[1] = kInf;
    for (std::size_t q = first + 1; q < n; ++q) {
        if (!std::isfinite(f[q])) continue;
        const double fq = f[q] + static_cast<double>(q * q);
        double s;
        while (true) {
            const std::size_t p = v[k];
            s = (fq - (f[p] + static_cast<double>(p * p))) / (2.0 * (static_cast<double>(q) - static_cast<double>(p)));
            if (s <= z[k] && k > 0) --k;
            else break;
        }
        if (s <= z[k]) {
            v[k] = q;
            z[k + 1] = kInf;
        } else {
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = kInf;
        }
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        while (z[k + 1] < static_cast<double>(q)) ++k;
        const double dq = static_cast<double>(q) - static_cast<double>(v[k]);
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

std::vector<double> squared_distance_transform(const std::vector<bool>& occupied, std::size_t h, std::size_t w) {
    if (occupied.size() != h * w) throw ShapeError("distance transform: grid size mismatch");
    std::vector<double> g(h * w);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = occupied[i] ? 0.0 : kInf;
    std::vector<std::size_t> v;
    std::vector<double> z;
    std::vector<double> col(h), out(std::max(h, w));
    for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t y = 0; y < h; ++y) col[y] = g[y * w + x];
        edt_1d(col.data(), out.data(), h, v, z);
        for (std::size_t y = 0; y < h; ++y) g[y * w + x] = out[y];
    }
    std::vector<double> row(w);
    for (std::size_t y = 0; y < h; ++y) {
        std::copy_n(g.begin() + static_cast<std::ptrdiff_t>(y * w), w, row.begin());
        edt_1d(row.data(), out.data(), w, v, z);
        std::copy_n(out.begin(), w, g.begin() + static_cast<std::ptrdiff_t>(y * w));
    }
    return g;
}

namespace {

// Distances from every foreground cell of `from` to the nearest cell of `to`.
std::vector<double> directed_distances(const std::vector<bool>& from, const std::vector<double>& to_sq) {
    std::vector<double> d;
    for (std::size_t i = 0; i < from.size(); ++i)
        if (from[i]) d.push_back(std::sqrt(to_sq[i]));
    return d;
}

}  // namespace

double hd95(const Tensor& pred, const Tensor& gt) {
    require_label_maps(pred, gt);
    const std::size_t h = pred.dim(0), w = pred.dim(1);
    std::vector<bool> a(pred.size()), b(gt.size());
    std::size_t na = 0, nb = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        a[i] = pred[i] != 0.0;
        b[i] = gt[i] != 0.0;
        na += a[i];
        nb += b[i];
    }
    if (na == 0 && nb == 0) return 0.0;
    if (na == 0 || nb == 0) return kInf;
    const double ab = percentile(directed_distances(a, squared_distance_transform(b, h, w)), 95.0);
    const double ba = percentile(directed_distances(b, squared_distance_transform(a, h, w)), 95.0);
    return std::max(ab, ba);
}

nlohmann::json MetricReport::to_json() const {
    auto rates_json = [](const Rates& r) {
        return nlohmann::json{{"iou", r.iou}, {"dsc", r.dsc}, {"acc", r.acc}, {"sen", r.sen}, {"spe", r.spe}};
    };
    nlohmann::json classes_json = nlohmann::json::array();
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const ClassReport& r = classes[c];
        nlohmann::json j = rates_json(r.rates);
        j["class"] = c;
        j["tp"] = r.counts.tp;
        j["fp"] = r.counts.fp;
        j["tn"] = r.counts.tn;
        j["fn"] = r.counts.fn;
        j["hd95"] = r.hd95;
        j["hd95_samples"] = r.hd95_samples;
        j["hd95_infinite"] = r.hd95_infinite;
        classes_json.push_back(j);
    }
    nlohmann::json mean_json = rates_json(mean);
    mean_json["hd95"] = mean_hd95;
    return {{"samples", samples},
            {"classes", classes_json},
            {"mean", mean_json},
            {"conventions",
             {{"rates", "zero denominator scores 1"},
              {"pooling", "confusion counts pooled over samples per class; means are unweighted over classes"},
              {"hd95", "foreground point sets, linear-interpolation 95th percentile, pixel units"},
              {"hd95_empty", "both empty -> 0; one empty -> infinite, excluded from the mean and counted"},
              {"mean_hd95", "mean over foreground classes (class >= 1)"}}}};
}

std::string MetricReport::to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "class,iou,dsc,acc,sen,spe,hd95,hd95_samples,hd95_infinite\n";
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const ClassReport& r = classes[c];
        os << c << ',' << r.rates.iou << ',' << r.rates.dsc << ',' << r.rates.acc << ',' << r.rates.sen << ','
           << r.rates.spe << ',' << r.hd95 << ',' << r.hd95_samples << ',' << r.hd95_infinite << '\n';
    }
    os << "mean," << mean.iou << ',' << mean.dsc << ',' << mean.acc << ',' << mean.sen << ',' << mean.spe << ','
       << mean_hd95 << ",,\n";
    return os.str();
}

MetricAccumulator::MetricAccumulator(std::size_t n_classes)
    : n_classes_(n_classes), counts_(n_classes), hd_sum_(n_classes, 0.0), hd_n_(n_classes, 0), hd_inf_(n_classes, 0) {
    if (n_classes < 2) throw std::invalid_argument("metrics need at least 2 classes");
}

void MetricAccumulator::add(const Tensor& pred, const Tensor& gt) {
    require_label_maps(pred, gt);
    for (std::size_t c = 0; c < n_classes_; ++c) {
        counts_[c] += confusion(pred, gt, c);
        Tensor pc(pred.shape()), gc(gt.shape());
        const double cv = static_cast<double>(c);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            pc[i] = pred[i] == cv;
            gc[i] = gt[i] == cv;
        }
        const double d = hd95(pc, gc);
        if (std::isfinite(d)) {
            hd_sum_[c] += d;
            ++hd_n_[c];
        } else {
            ++hd_inf_[c];
        }
    }
    ++samples_;
}

MetricReport MetricAccumulator::report() const {
    MetricReport r;
    r.samples = samples_;
    double hd_total = 0;
    std::size_t hd_classes = 0;
    for (std::size_t c = 0; c < n_classes_; ++c) {
        ClassReport cr;
        cr.counts = counts_[c];
        cr.rates = rates(counts_[c]);
        cr.hd95_samples = hd_n_[c];
        cr.hd95_infinite = hd_inf_[c];
        cr.hd95 = hd_n_[c] ? hd_sum_[c] / static_cast<double>(hd_n_[c]) : 0.0;
        r.mean.iou += cr.rates.iou;
        r.mean.dsc += cr.rates.dsc;
        r.mean.acc += cr.rates.acc;
        r.mean.sen += cr.rates.sen;
        r.mean.spe += cr.rates.spe;
        if (c >= 1 && hd_n_[c]) {
            hd_total += cr.hd95;
            ++hd_classes;
        }
        r.classes.push_back(cr);
    }
    const double k = static_cast<double>(n_classes_);
    r.mean.iou /= k;
    r.mean.dsc /= k;
    r.mean.acc /= k;
    r.mean.sen /= k;
    r.mean.spe /= k;
    r.mean_hd95 = hd_classes ? hd_total / static_cast<double>(hd_classes) : 0.0;
    return r;
}

Tensor predict_labels(const Tensor& logits) {
    if (logits.rank() != 3) throw ShapeError("predict_labels expects [K,H,W]");
    const std::size_t k = logits.dim(0), n = logits.dim(1) * logits.dim(2);
    Tensor out({logits.dim(1), logits.dim(2)});
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (logits[c * n + i] > logits[best * n + i]) best = c;
        out[i] = static_cast<double>(best);
    }
    return out;
}

}  // namespace mew

#pragma once

#include <cmath>
#include <ostream>
#include <string>

#include "sdfc/geometry/sdf_grid.hpp"
#include "sdfc/metrics/kdtree.hpp"
#include "sdfc/surface/sample_surface.hpp"

namespace sdfc {

/// The evaluation metric bundle for one predicted/ground-truth pair.
/// Distances are measured in the shared normalized frame (see
/// NormalizationFrame); cd_l2 is already scaled by 1000.
struct MetricsReport {
    double iou = 0.0;
    double f1 = 0.0;
    double cd_l2_x1000 = 0.0;
    double cd_l1 = 0.0;
    double hd = 0.0;
    double uhd = 0.0;
    double nc = 0.0;
    double in_pct = 0.0;
    double cmp = 0.0;
};

/// Uniform scale putting the ground-truth bounding-box diagonal at length 1.
/// The same scale is applied to both point sets before any distance metric.
struct NormalizationFrame {
    double scale = 1.0;

    static NormalizationFrame from_bounds(const Aabb& gt_bounds) {
        const double diag = gt_bounds.diagonal();
        if (diag <= 0.0) throw DataError("NormalizationFrame: degenerate ground-truth bounds");
        return {1.0 / diag};
    }

    static NormalizationFrame identity() { return {1.0}; }

    std::vector<Vec3> apply(const std::vector<Vec3>& pts) const {
        std::vector<Vec3> out(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) out[i] = pts[i] * scale;
        return out;
    }
};

namespace detail {

inline void require_nonempty(const std::vector<Vec3>& x, const char* who) {
    if (x.empty()) throw EmptySet(std::string(who) + ": empty point set");
}

/// Per-point nearest-neighbor distances from each x to Y. Parallel over
/// points; the caller reduces serially so results do not depend on the thread
/// count.
inline std::vector<Nearest> all_nearest(const std::vector<Vec3>& x, const KdTree& y_tree) {
    std::vector<Nearest> nn(x.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(x.size()); ++i)
        nn[i] = y_tree.nearest(x[i]);
    return nn;
}

inline double directed_max(const std::vector<Vec3>& x, const KdTree& y_tree) {
    const auto nn = all_nearest(x, y_tree);
    double worst = 0.0;
    for (const Nearest& n : nn) worst = std::max(worst, n.dist2);
    return std::sqrt(worst);
}

inline double mean_dist2(const std::vector<Vec3>& x, const KdTree& y_tree) {
    const auto nn = all_nearest(x, y_tree);
    double sum = 0.0;
    for (const Nearest& n : nn) sum += n.dist2;
    return sum / static_cast<double>(x.size());
}

inline double mean_dist(const std::vector<Vec3>& x, const KdTree& y_tree) {
    const auto nn = all_nearest(x, y_tree);
    double sum = 0.0;
    for (const Nearest& n : nn) sum += std::sqrt(n.dist2);
    return sum / static_cast<double>(x.size());
}

inline double within_fraction(const std::vector<Vec3>& x, const KdTree& y_tree, double tau) {
    const auto nn = all_nearest(x, y_tree);
    std::size_t hits = 0;
    for (const Nearest& n : nn)
        if (n.dist2 <= tau * tau) ++hits;
    return static_cast<double>(hits) / static_cast<double>(x.size());
}

inline void require_unit_normals(const SampledSurface& s, const char* who) {
    for (const Vec3& n : s.normals)
        if (std::abs(norm(n) - 1.0) > 1e-5)
            throw NonUnitNormal(std::string(who) + ": normals must be unit length");
}

}  // namespace detail

/// Symmetric Hausdorff distance: the larger of the two directed max-min terms.
inline double hausdorff(const std::vector<Vec3>& x, const std::vector<Vec3>& y,
                        bool brute_force = false) {
    detail::require_nonempty(x, "hausdorff");
    detail::require_nonempty(y, "hausdorff");
    const KdTree xt(x, brute_force), yt(y, brute_force);
    return std::max(detail::directed_max(x, yt), detail::directed_max(y, xt));
}

/// Directed Hausdorff from the partial input X to the completion Y. Measures
/// how faithfully the given geometry survives completion; not symmetric.
inline double uhd(const std::vector<Vec3>& x_input, const std::vector<Vec3>& y_completed,
                  bool brute_force = false) {
    detail::require_nonempty(x_input, "uhd");
    detail::require_nonempty(y_completed, "uhd");
    const KdTree yt(y_completed, brute_force);
    return detail::directed_max(x_input, yt);
}

/// Squared (L2) chamfer distance, both directions summed, times 1000.
inline double chamfer_l2(const std::vector<Vec3>& x, const std::vector<Vec3>& y,
                         bool brute_force = false) {
    detail::require_nonempty(x, "chamfer_l2");
    detail::require_nonempty(y, "chamfer_l2");
    const KdTree xt(x, brute_force), yt(y, brute_force);
    return 1000.0 * (detail::mean_dist2(x, yt) + detail::mean_dist2(y, xt));
}

/// Unsquared chamfer distance, both directions summed, no division by 2.
inline double chamfer_l1(const std::vector<Vec3>& x, const std::vector<Vec3>& y,
                         bool brute_force = false) {
    detail::require_nonempty(x, "chamfer_l1");
    detail::require_nonempty(y, "chamfer_l1");
    const KdTree xt(x, brute_force), yt(y, brute_force);
    return detail::mean_dist(x, yt) + detail::mean_dist(y, xt);
}

/// F-score at distance threshold tau (default 1% of the normalized frame).
inline double f1_at(const std::vector<Vec3>& x_pred, const std::vector<Vec3>& y_gt,
                    double tau = 0.01, bool brute_force = false) {
    detail::require_nonempty(x_pred, "f1_at");
    detail::require_nonempty(y_gt, "f1_at");
    const KdTree xt(x_pred, brute_force), yt(y_gt, brute_force);
    const double precision = detail::within_fraction(x_pred, yt, tau);
    const double recall = detail::within_fraction(y_gt, xt, tau);
    if (precision + recall <= 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

/// Completeness: recall of the ground truth by the prediction at tau = 1.5%.
inline double completeness(const std::vector<Vec3>& x_pred, const std::vector<Vec3>& y_gt,
                           double tau = 0.015, bool brute_force = false) {
    detail::require_nonempty(x_pred, "completeness");
    detail::require_nonempty(y_gt, "completeness");
    const KdTree xt(x_pred, brute_force);
    return detail::within_fraction(y_gt, xt, tau);
}

/// Mean absolute normal dot product against the nearest neighbor in Y.
/// The absolute value folds flipped normals.
inline double normal_consistency(const SampledSurface& x, const SampledSurface& y,
                                 bool brute_force = false) {
    detail::require_nonempty(x.points, "normal_consistency");
    detail::require_nonempty(y.points, "normal_consistency");
    detail::require_unit_normals(x, "normal_consistency");
    detail::require_unit_normals(y, "normal_consistency");
    const KdTree yt(y.points, brute_force);
    const auto nn = detail::all_nearest(x.points, yt);
    double sum = 0.0;
    for (std::size_t i = 0; i < x.points.size(); ++i)
        sum += std::abs(dot(x.normals[i], y.normals[nn[i].index]));
    return sum / static_cast<double>(x.points.size());
}

/// Percentage of X points whose nearest-neighbor normal deviates by more than
/// theta degrees (after absolute-value folding).
inline double inaccurate_normals(const SampledSurface& x, const SampledSurface& y,
                                 double theta_deg = 5.0, bool brute_force = false) {
    detail::require_nonempty(x.points, "inaccurate_normals");
    detail::require_nonempty(y.points, "inaccurate_normals");
    detail::require_unit_normals(x, "inaccurate_normals");
    detail::require_unit_normals(y, "inaccurate_normals");
    const KdTree yt(y.points, brute_force);
    const auto nn = detail::all_nearest(x.points, yt);
    const double cos_thresh = std::cos(theta_deg * 3.14159265358979323846 / 180.0);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < x.points.size(); ++i) {
        const double c = std::abs(dot(x.normals[i], y.normals[nn[i].index]));
        if (c < cos_thresh) ++bad;
    }
    return 100.0 * static_cast<double>(bad) / static_cast<double>(x.points.size());
}

/// Sign-based IoU of the inside regions of two equally sized SDF grids.
/// Defined as 1 when neither grid has an inside voxel.
inline double iou_sdf(const SdfGrid& pred, const SdfGrid& gt) {
    if (pred.resolution != gt.resolution)
        throw ResolutionMismatch("iou_sdf: resolutions differ: " + std::to_string(pred.resolution) +
                                 " vs " + std::to_string(gt.resolution));
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const bool a = pred.values[i] < 0.0f;
        const bool b = gt.values[i] < 0.0f;
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

struct MetricThresholds {
    double f1_tau = 0.01;
    double cmp_tau = 0.015;
    double in_theta_deg = 5.0;
};

/// Runs the full metric bundle under one shared normalization frame and one
/// shared pair of sampled surfaces. `uhd` is the directed term pred -> gt.
inline MetricsReport evaluate_all(const SampledSurface& pred, const SdfGrid& pred_grid,
                                  const SampledSurface& gt, const SdfGrid& gt_grid,
                                  const NormalizationFrame& frame,
                                  const MetricThresholds& thresholds = {},
                                  bool brute_force = false) {
    detail::require_nonempty(pred.points, "evaluate_all");
    detail::require_nonempty(gt.points, "evaluate_all");

    const std::vector<Vec3> x = frame.apply(pred.points);
    const std::vector<Vec3> y = frame.apply(gt.points);

    MetricsReport rep;
    rep.iou = iou_sdf(pred_grid, gt_grid);
    rep.f1 = f1_at(x, y, thresholds.f1_tau, brute_force);
    rep.cd_l2_x1000 = chamfer_l2(x, y, brute_force);
    rep.cd_l1 = chamfer_l1(x, y, brute_force);
    rep.hd = hausdorff(x, y, brute_force);
    rep.uhd = uhd(x, y, brute_force);

    SampledSurface xs{x, pred.normals}, ys{y, gt.normals};
    rep.nc = normal_consistency(xs, ys, brute_force);
    rep.in_pct = inaccurate_normals(xs, ys, thresholds.in_theta_deg, brute_force);
    rep.cmp = completeness(x, y, thresholds.cmp_tau, brute_force);
    return rep;
}

/// Line-oriented plain-text rendering (stable key names).
inline void print_report(const MetricsReport& r, std::ostream& os) {
    char buf[64];
    auto line = [&](const char* key, double v) {
        std::snprintf(buf, sizeof(buf), "%-12s %.6f\n", key, v);
        os << buf;
    };
    line("iou", r.iou);
    line("f1", r.f1);
    line("cd_l2_x1000", r.cd_l2_x1000);
    line("cd_l1", r.cd_l1);
    line("hd", r.hd);
    line("uhd", r.uhd);
    line("nc", r.nc);
    line("in_pct", r.in_pct);
    line("cmp", r.cmp);
}

}  // namespace sdfc

#include "octds/undistort.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <random>

namespace octds {

FitRejected::FitRejected(FitReport report)
    : Error(ErrorKind::fit_rejected, "sine fit rejected: inlier fraction " + std::to_string(report.inlier_fraction) +
                                         " below threshold"),
      report_(report)
{
    report_.rejected = true;
}

std::vector<BorderPoint> binarize_border(const BScanPolar& slice, const BinarizeParams& params)
{
    const Image16& img = slice.intensity;
    const Eigen::Index columns = img.rows();
    const Eigen::Index depth = img.cols();
    if (img.size() == 0)
        throw Error(ErrorKind::validation, "binarize_border: empty slice");
    if (params.window < 1)
        throw Error(ErrorKind::configuration, "binarize_border: window must be positive");
    const Eigen::Index lo = std::clamp<Eigen::Index>(params.band_lo, 0, depth);
    const Eigen::Index hi = params.band_hi < 0 ? depth : std::clamp<Eigen::Index>(params.band_hi, 0, depth);
    if (lo >= hi)
        throw Error(ErrorKind::configuration, "binarize_border: empty border band");

    // Summed-area table over the whole slice with a zero guard row/column.
    Eigen::ArrayXXd sat = Eigen::ArrayXXd::Zero(columns + 1, depth + 1);
    for (Eigen::Index u = 0; u < columns; ++u)
        for (Eigen::Index v = 0; v < depth; ++v)
            sat(u + 1, v + 1) = img(u, v) + sat(u, v + 1) + sat(u + 1, v) - sat(u, v);

    const double band_max = img.middleCols(lo, hi - lo).maxCoeff();
    const double floor_level = params.min_level * band_max;
    const double offset = params.offset * 257.0;
    const Eigen::Index half = params.window / 2;

    std::vector<BorderPoint> points;
    for (Eigen::Index u = 0; u < columns; ++u) {
        const Eigen::Index u0 = std::max<Eigen::Index>(0, u - half);
        const Eigen::Index u1 = std::min(columns, u + half + 1);
        for (Eigen::Index v = lo; v < hi; ++v) {
            const double value = img(u, v);
            if (value < floor_level)
                continue;
            const Eigen::Index v0 = std::max<Eigen::Index>(0, v - half);
            const Eigen::Index v1 = std::min(depth, v + half + 1);
            const double sum = sat(u1, v1) - sat(u0, v1) - sat(u1, v0) + sat(u0, v0);
            const double mean = sum / static_cast<double>((u1 - u0) * (v1 - v0));
            if (value > mean + offset)
                points.push_back({static_cast<double>(u), static_cast<double>(v)});
        }
    }
    if (points.empty())
        throw Error(ErrorKind::no_candidates, "binarize_border: no border candidates in band");
    return points;
}

namespace {

struct Basis {
    std::vector<double> omega;
    std::vector<Eigen::ArrayXd> sin_table;
    std::vector<Eigen::ArrayXd> cos_table;
};

Basis make_basis(std::span<const BorderPoint> points, int width, const RansacParams& params)
{
    Basis b;
    const double omega0 = 2.0 * M_PI / width;
    const int steps = std::max(1, params.omega_steps);
    for (int k = 0; k < steps; ++k) {
        const double rel = steps == 1 ? 0.0 : params.omega_span * (2.0 * k / (steps - 1) - 1.0);
        b.omega.push_back(omega0 * (1.0 + rel));
    }
    const auto n = static_cast<Eigen::Index>(points.size());
    for (double w : b.omega) {
        Eigen::ArrayXd s(n), c(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            s[i] = std::sin(w * points[static_cast<std::size_t>(i)].u);
            c[i] = std::cos(w * points[static_cast<std::size_t>(i)].u);
        }
        b.sin_table.push_back(std::move(s));
        b.cos_table.push_back(std::move(c));
    }
    return b;
}

struct Candidate {
    int grid = 0;
    Eigen::Vector3d coeffs = Eigen::Vector3d::Zero();  // a sin + b cos + c
};

Eigen::ArrayXd residuals(const Basis& b, const Eigen::ArrayXd& v, const Candidate& m)
{
    return v - (m.coeffs[0] * b.sin_table[m.grid] + m.coeffs[1] * b.cos_table[m.grid] + m.coeffs[2]);
}

/// Least squares on the selected rows; returns false when rank deficient.
bool refit(const Basis& b, const Eigen::ArrayXd& v, const std::vector<Eigen::Index>& rows, int grid,
           Eigen::Vector3d& coeffs, double& sse)
{
    if (rows.size() < 3)
        return false;
    Eigen::MatrixXd design(static_cast<Eigen::Index>(rows.size()), 3);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Eigen::Index i = rows[r];
        design(static_cast<Eigen::Index>(r), 0) = b.sin_table[grid][i];
        design(static_cast<Eigen::Index>(r), 1) = b.cos_table[grid][i];
        design(static_cast<Eigen::Index>(r), 2) = 1.0;
        rhs[static_cast<Eigen::Index>(r)] = v[i];
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < 3)
        return false;
    coeffs = qr.solve(rhs);
    sse = (design * coeffs - rhs).squaredNorm();
    return true;
}

std::vector<Eigen::Index> inliers_of(const Eigen::ArrayXd& res, double tol)
{
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < res.size(); ++i)
        if (std::abs(res[i]) <= tol)
            rows.push_back(i);
    return rows;
}

SineModel to_model(const Basis& b, const Candidate& m)
{
    SineModel out;
    out.amplitude = std::hypot(m.coeffs[0], m.coeffs[1]);
    out.omega = b.omega[static_cast<std::size_t>(m.grid)];
    out.phase = out.amplitude > 0.0 ? wrap_angle(std::atan2(m.coeffs[1], m.coeffs[0])) : 0.0;
    out.offset = m.coeffs[2];
    return out;
}

}  // namespace

FitReport fit_sine(std::span<const BorderPoint> points, int width, const RansacParams& params, std::uint64_t seed)
{
    const auto n = static_cast<Eigen::Index>(points.size());
    if (n < 4)
        throw Error(ErrorKind::insufficient_data,
                    "fit_sine: need at least 4 points, got " + std::to_string(points.size()));
    if (width < 1)
        throw Error(ErrorKind::configuration, "fit_sine: width must be positive");
    if (params.max_iterations < 1 || !(params.tol_samples > 0.0))
        throw Error(ErrorKind::configuration, "fit_sine: invalid RANSAC parameters");

    const Basis basis = make_basis(points, width, params);
    Eigen::ArrayXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = points[static_cast<std::size_t>(i)].v;

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);

    Candidate best;
    Eigen::Index best_count = -1;
    int iterations = 0;
    for (int it = 0; it < params.max_iterations; ++it) {
        iterations = it + 1;
        Eigen::Index idx[3];
        idx[0] = pick(rng);
        do
            idx[1] = pick(rng);
        while (idx[1] == idx[0]);
        do
            idx[2] = pick(rng);
        while (idx[2] == idx[0] || idx[2] == idx[1]);

        for (int k = 0; k < static_cast<int>(basis.omega.size()); ++k) {
            Eigen::Matrix3d m;
            Eigen::Vector3d rhs;
            for (int r = 0; r < 3; ++r) {
                m(r, 0) = basis.sin_table[k][idx[r]];
                m(r, 1) = basis.cos_table[k][idx[r]];
                m(r, 2) = 1.0;
                rhs[r] = v[idx[r]];
            }
            if (std::abs(m.determinant()) < 1e-9)
                continue;
            const Candidate cand{k, m.partialPivLu().solve(rhs)};
            const Eigen::Index count = (residuals(basis, v, cand).abs() <= params.tol_samples).count();
            if (count > best_count) {
                best_count = count;
                best = cand;
            }
        }

        if (best_count > 0) {
            const double w = static_cast<double>(best_count) / static_cast<double>(n);
            const double miss = 1.0 - w * w * w;
            if (miss <= 0.0)
                break;
            const double needed = std::log(1.0 - params.confidence) / std::log(miss);
            if (iterations >= needed)
                break;
        }
    }

    FitReport report;
    report.iterations_used = iterations;
    if (best_count <= 0) {
        report.rejected = true;
        throw FitRejected(report);
    }

    // Refine: least squares on the consensus set, choosing the grid omega with
    // the smallest residual, then re-select inliers.
    for (int round = 0; round < 3; ++round) {
        const auto rows = inliers_of(residuals(basis, v, best), params.tol_samples);
        Candidate improved = best;
        double best_sse = std::numeric_limits<double>::infinity();
        for (int k = 0; k < static_cast<int>(basis.omega.size()); ++k) {
            Eigen::Vector3d coeffs;
            double sse = 0.0;
            if (refit(basis, v, rows, k, coeffs, sse) && sse < best_sse) {
                best_sse = sse;
                improved = {k, coeffs};
            }
        }
        best = improved;
    }

    const Eigen::ArrayXd res = residuals(basis, v, best);
    const auto rows = inliers_of(res, params.tol_samples);
    double sse = 0.0;
    for (Eigen::Index i : rows)
        sse += res[i] * res[i];
    report.model = to_model(basis, best);
    report.inlier_fraction = static_cast<double>(rows.size()) / static_cast<double>(n);
    report.residual_rms = rows.empty() ? 0.0 : std::sqrt(sse / static_cast<double>(rows.size()));
    if (report.inlier_fraction < params.min_inlier_fraction)
        throw FitRejected(report);
    return report;
}

BScanPolar unwarp(const BScanPolar& slice, const SineModel& model, Interpolation mode)
{
    return {unwarp(slice.intensity, model, mode), slice.axial_position};
}

}  // namespace octds

#include "octds/phantom.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

using namespace octds;

namespace {

AcquisitionConfig small_acquisition()
{
    AcquisitionConfig cfg;
    cfg.a_scan_rate = 256 * 6.5;
    cfg.pullback_length = 1000.0;
    return cfg;
}

Pocket sphere_at(double rho, double theta, double z, double radius)
{
    Pocket p;
    p.kind = Pocket::Kind::sphere;
    p.center = {rho * std::cos(theta), rho * std::sin(theta), z};
    p.radius = radius;
    return p;
}

}  // namespace

TEST_CASE("empty phantom is a plain cylinder")
{
    const PhantomGeometry g = build_phantom(PhantomModel{});
    for (double z : {0.0, 100.0, 4000.0, 7999.0})
        for (double theta : {0.0, 1.0, 3.0, -2.5})
            CHECK(g.wall_radius(z, theta) == 1500.0);
}

TEST_CASE("sphere centred on the wall breaches by its radius on the central ray")
{
    // The ray through the sphere centre enters at R - r and leaves at R + r.
    PhantomModel m;
    const double theta0 = 0.7, z0 = 3000.0, r = 250.0;
    m.pockets.push_back(sphere_at(m.hole_radius, theta0, z0, r));
    const PhantomGeometry g = build_phantom(m);
    CHECK(g.wall_radius(z0, theta0) == doctest::Approx(m.hole_radius + r).epsilon(1e-12));

    // Off-centre ray at axial offset dz: chord exit at sqrt(r^2 - dz^2) beyond R.
    const double dz = 150.0;
    CHECK(g.wall_radius(z0 + dz, theta0) ==
          doctest::Approx(m.hole_radius + std::sqrt(r * r - dz * dz)).epsilon(1e-12));
    CHECK(g.wall_radius(z0 + r + 1.0, theta0) == m.hole_radius);
}

TEST_CASE("pocket buried in the bone leaves the wall untouched")
{
    PhantomModel m;
    m.pockets.push_back(sphere_at(m.hole_radius + 400.0, 1.0, 2000.0, 300.0));
    const PhantomGeometry g = build_phantom(m);
    for (int k = 0; k < 64; ++k)
        for (double z = 1500.0; z <= 2500.0; z += 50.0)
            CHECK(g.wall_radius(z, 2.0 * M_PI * k / 64) == m.hole_radius);
}

TEST_CASE("capped cylinder breach matches its radius along the axis normal")
{
    PhantomModel m;
    Pocket p;
    p.kind = Pocket::Kind::cylinder;
    p.center = {m.hole_radius, 0.0, 4000.0};
    p.direction = Eigen::Vector3d::UnitZ();
    p.radius = 100.0;
    p.length = 1000.0;
    m.pockets.push_back(p);
    const PhantomGeometry g = build_phantom(m);
    CHECK(g.wall_radius(4000.0, 0.0) == doctest::Approx(m.hole_radius + 100.0));
    CHECK(g.wall_radius(4499.0, 0.0) == doctest::Approx(m.hole_radius + 100.0));
    CHECK(g.wall_radius(4501.0, 0.0) == m.hole_radius);
}

TEST_CASE("overlapping pockets chain outward and stop at the outer radius")
{
    PhantomModel m;
    m.pockets.push_back(sphere_at(m.hole_radius, 0.0, 1000.0, 200.0));
    m.pockets.push_back(sphere_at(m.hole_radius + 350.0, 0.0, 1000.0, 200.0));
    CHECK(build_phantom(m).wall_radius(1000.0, 0.0) == doctest::Approx(m.hole_radius + 550.0));
    m.outer_radius = m.hole_radius + 300.0;
    CHECK(build_phantom(m).wall_radius(1000.0, 0.0) == doctest::Approx(m.hole_radius + 300.0));
}

TEST_CASE("invalid phantom names the field")
{
    PhantomModel m;
    m.hole_radius = -1.0;
    CHECK_THROWS_WITH_AS(build_phantom(m), doctest::Contains("hole_radius"), Error);
    m = PhantomModel{};
    m.pockets.push_back(sphere_at(1500.0, 0.0, 10.0, 0.0));
    CHECK_THROWS_WITH_AS(build_phantom(m), doctest::Contains("pockets[0].radius"), Error);
    m = PhantomModel{};
    Pocket c;
    c.kind = Pocket::Kind::cylinder;
    c.radius = 10.0;
    c.direction = {1.0, 1.0, 0.0};
    m.pockets.push_back(c);
    CHECK_THROWS_WITH_AS(build_phantom(m), doctest::Contains("direction"), Error);
}

TEST_CASE("random pockets are deterministic in the seed and breach the wall")
{
    PhantomModel m;
    const auto a = random_pockets(m, 6, 3, 800.0, 42);
    const auto b = random_pockets(m, 6, 3, 800.0, 42);
    const auto c = random_pockets(m, 6, 3, 800.0, 43);
    REQUIRE(a.size() == 9);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].center == b[i].center);
        CHECK(a[i].radius == b[i].radius);
    }
    CHECK(a[0].center != c[0].center);
    m.pockets = a;
    const PhantomGeometry g = build_phantom(m);
    double deepest = 0.0;
    for (double z = 0.0; z < m.hole_length; z += 50.0)
        for (int k = 0; k < 256; ++k)
            deepest = std::max(deepest, g.wall_radius(z, 2.0 * M_PI * k / 256) - m.hole_radius);
    CHECK(deepest > 0.0);
    CHECK(deepest <= 800.0);
}

TEST_CASE("acquisition arithmetic at full scale")
{
    AcquisitionConfig cfg;
    cfg.a_scan_rate = 91000.0;
    cfg.rotation_rate = 390.0 / 60.0;
    cfg.pullback_length = 30000.0;
    cfg.pullback_step = 200.0;
    CHECK(cfg.a_scans_per_rotation() == 14000);
    CHECK(cfg.slice_count() == 150);
}

TEST_CASE("desk defaults")
{
    const AcquisitionConfig cfg;
    CHECK(cfg.a_scans_per_rotation() == 1024);
    CHECK(cfg.slice_count() == 40);
}

TEST_CASE("catheter that does not fit is a configuration error")
{
    const PhantomGeometry g = build_phantom(PhantomModel{});
    AcquisitionConfig cfg = small_acquisition();
    cfg.eccentricity_amplitude = 400.0;  // 400 + 450 > 760 inner capillary radius
    CHECK_THROWS_AS_MESSAGE(simulate_ground_truth(g, cfg), Error, "catheter");
    try {
        simulate_ground_truth(g, cfg);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::configuration);
    }
}

TEST_CASE("simulation is deterministic and independent of thread count")
{
    PhantomModel m;
    m.pockets = random_pockets(m, 3, 1, 600.0, 5);
    const PhantomGeometry g = build_phantom(m);
    AcquisitionConfig cfg = small_acquisition();
    cfg.noise.speckle_sigma = 0.2;
    cfg.noise.nurd_amplitude = 0.01;
    const auto a = simulate_oct(g, cfg, 99, 1);
    const auto b = simulate_oct(g, cfg, 99, 4);
    REQUIRE(a.stack.slices.size() == b.stack.slices.size());
    for (std::size_t s = 0; s < a.stack.slices.size(); ++s)
        CHECK((a.stack.slices[s].intensity == b.stack.slices[s].intensity).all());
    CHECK((a.truth.surface_depth == b.truth.surface_depth).all());
    CHECK((a.truth.pattern_mask == b.truth.pattern_mask).all());

    const BScanPolar single = simulate_slice(g, cfg, 99, 2);
    CHECK((single.intensity == a.stack.slices[2].intensity).all());

    const auto other = simulate_oct(g, cfg, 100, 1);
    CHECK(!(other.stack.slices[0].intensity == a.stack.slices[0].intensity).all());
}

TEST_CASE("ground truth arrays and mask consistency")
{
    PhantomModel m;
    m.pockets = random_pockets(m, 4, 2, 700.0, 8);
    const PhantomGeometry g = build_phantom(m);
    AcquisitionConfig cfg = small_acquisition();
    cfg.pullback_length = m.hole_length;
    const GroundTruth gt = simulate_ground_truth(g, cfg);
    REQUIRE(gt.surface_depth.rows() == cfg.slice_count());
    REQUIRE(gt.surface_depth.cols() == cfg.a_scans_per_rotation());
    REQUIRE(gt.pattern_mask.rows() == gt.surface_depth.rows());
    REQUIRE(gt.sine_params.size() == static_cast<std::size_t>(cfg.slice_count()));
    long breached = 0;
    for (Eigen::Index s = 0; s < gt.surface_depth.rows(); ++s)
        for (Eigen::Index u = 0; u < gt.surface_depth.cols(); ++u) {
            const bool expect = gt.surface_depth(s, u) > m.hole_radius + cfg.depth_resolution;
            CHECK(gt.pattern_mask(s, u) == expect);
            breached += expect;
        }
    CHECK(breached > 0);
}

TEST_CASE("wall echo sits at the wall radius minus the eccentric offset")
{
    PhantomModel m;
    m.pockets = random_pockets(m, 4, 2, 700.0, 3);
    const PhantomGeometry g = build_phantom(m);

    for (double index : {1.0, 1.5}) {
        CAPTURE(index);
        AcquisitionConfig cfg = small_acquisition();
        cfg.glass_group_index = index;
        cfg.eccentricity_amplitude = 200.0;
        cfg.eccentricity_phase = 0.4;
        const double shift = (index - 1.0) * cfg.glass_thickness;
        const int border_row = static_cast<int>(std::ceil((border_optical_radius(cfg) + 200.0) / cfg.depth_resolution));
        for (int s : {0, 3}) {
            const BScanPolar slice = simulate_slice(g, cfg, 1, s);
            const double phase = cfg.eccentricity_phase + cfg.eccentricity_phase_drift * s;
            for (Eigen::Index u = 0; u < slice.columns(); ++u) {
                const double theta = 2.0 * M_PI * u / slice.columns();
                const double offset = cfg.eccentricity_amplitude * std::cos(theta - phase);
                const double wall = g.wall_radius(cfg.axial_position(s), theta);
                Eigen::Index v;
                slice.intensity.row(u).tail(slice.depth_samples() - border_row - 5).maxCoeff(&v);
                v += border_row + 5;
                CHECK(std::abs(v - std::lround((wall + shift - offset) / cfg.depth_resolution)) <= 1);
            }
        }
    }
}

TEST_CASE("glass border follows the recorded sinusoid")
{
    const PhantomGeometry g = build_phantom(PhantomModel{});
    AcquisitionConfig cfg = small_acquisition();
    cfg.eccentricity_amplitude = 180.0;
    cfg.eccentricity_phase = 2.0;
    for (int s : {0, 4}) {
        SineModel truth;
        const BScanPolar slice = simulate_slice(g, cfg, 4, s, &truth);
        const Eigen::Index n = slice.columns();
        CHECK(truth.omega == doctest::Approx(2.0 * M_PI / n));

        // Sub-sample border row per column: parabolic peak around the
        // argmax inside the glass band, then a linear LSQ at known omega.
        Eigen::MatrixXd design(n, 3);
        Eigen::VectorXd rows(n);
        const int lo = static_cast<int>(truth.offset - truth.amplitude - 6);
        const int hi = static_cast<int>(truth.offset + truth.amplitude + 6);
        for (Eigen::Index u = 0; u < n; ++u) {
            Eigen::Index v;
            slice.intensity.row(u).segment(lo, hi - lo).cast<double>().maxCoeff(&v);
            v += lo;
            const double a = slice.intensity(u, v - 1), b = slice.intensity(u, v), c = slice.intensity(u, v + 1);
            rows(u) = v + 0.5 * (a - c) / (a - 2 * b + c);
            design.row(u) << std::sin(truth.omega * u), std::cos(truth.omega * u), 1.0;
        }
        const Eigen::Vector3d coef = design.colPivHouseholderQr().solve(rows);
        const double residual = (design * coef - rows).cwiseAbs().maxCoeff();
        CHECK(residual < 1.0);
        CHECK(std::hypot(coef(0), coef(1)) == doctest::Approx(truth.amplitude).epsilon(0.02));
        CHECK(std::abs(wrap_angle(std::atan2(coef(1), coef(0)) - truth.phase)) < 0.02);
        CHECK(coef(2) == doctest::Approx(truth.offset).epsilon(1e-3));
    }
}

TEST_CASE("concentric noise-free catheter gives flat rows and zero amplitude")
{
    const PhantomGeometry g = build_phantom(PhantomModel{});
    AcquisitionConfig cfg = small_acquisition();
    cfg.eccentricity_amplitude = 0.0;
    cfg.eccentricity_drift = 0.0;
    const auto sim = simulate_oct(g, cfg, 1);
    for (const SineModel& m : sim.truth.sine_params)
        CHECK(m.amplitude == 0.0);
    for (const BScanPolar& slice : sim.stack.slices)
        for (Eigen::Index u = 1; u < slice.columns(); ++u)
            CHECK((slice.intensity.row(u) == slice.intensity.row(0)).all());
}

// --- endoscope ------------------------------------------------------------

TEST_CASE("endo frame count follows ceil(length / feed)")
{
    PhantomModel m;
    const PhantomGeometry g = build_phantom(m);
    EndoConfig cfg;
    cfg.frame_size = 64;
    cfg.feed_step = m.hole_length;
    CHECK(simulate_endo_frames(g, cfg).size() == 1);
    cfg.feed_step = 3000.0;
    const auto frames = simulate_endo_frames(g, cfg);
    REQUIRE(frames.size() == 3);
    CHECK(frames[0].axial_position == 1500.0);
    CHECK(frames[1].axial_position == 4500.0);
    CHECK(frames[2].axial_position == m.hole_length - 1500.0);  // clamped to the hole end
    cfg.frame_size = 63;
    CHECK_THROWS_AS(simulate_endo_frames(g, cfg), Error);
}

TEST_CASE("bright pocket shows at its polar angle")
{
    PhantomModel m;
    m.scatter_base = 0.2;
    m.pocket_reflectivity = 1.0;
    const double theta0 = 2.2;
    m.pockets.push_back(sphere_at(m.hole_radius, theta0, 4000.0, 300.0));
    const PhantomGeometry g = build_phantom(m);
    EndoConfig cfg;
    cfg.speckle_sigma = 0.0;
    const auto frames = simulate_endo_frames(g, cfg);
    int seen = 0;
    for (const AnnulusFrame& f : frames) {
        if (std::abs(f.axial_position - 4000.0) > 0.5 * f.view_length)
            continue;
        double sx = 0.0, sy = 0.0;
        for (Eigen::Index y = 0; y < f.image.rows(); ++y)
            for (Eigen::Index x = 0; x < f.image.cols(); ++x)
                if (f.image(y, x) > 200) {
                    sx += x - f.center.x();
                    sy += y - f.center.y();
                }
        REQUIRE((sx != 0.0 || sy != 0.0));
        CHECK(std::abs(wrap_angle(std::atan2(sy, sx) - theta0)) < 0.05);
        ++seen;
    }
    CHECK(seen >= 1);
}

TEST_CASE("pocket-free annuli are radially uniform within speckle")
{
    const PhantomGeometry g = build_phantom(PhantomModel{});
    EndoConfig cfg;
    cfg.speckle_sigma = 0.05;
    cfg.seed = 12;
    const auto frames = simulate_endo_frames(g, cfg);
    const double expected = 255.0 * g.model().scatter_base;
    for (const AnnulusFrame& f : frames) {
        Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(f.r_outer) + 1);
        Eigen::ArrayXd count = sum;
        double all = 0.0, all2 = 0.0, n = 0.0;
        for (Eigen::Index y = 0; y < f.image.rows(); ++y)
            for (Eigen::Index x = 0; x < f.image.cols(); ++x) {
                const double r = std::hypot(x - f.center.x(), y - f.center.y());
                if (r < f.r_inner || r > f.r_outer)
                    continue;
                const double v = f.image(y, x);
                sum(static_cast<Eigen::Index>(r)) += v;
                count(static_cast<Eigen::Index>(r)) += 1.0;
                all += v;
                all2 += v * v;
                n += 1.0;
            }
        const double mean = all / n;
        const double sd = std::sqrt(all2 / n - mean * mean);
        CHECK(mean == doctest::Approx(expected).epsilon(0.01));
        CHECK(sd / mean < 1.2 * cfg.speckle_sigma);
        for (Eigen::Index r = static_cast<Eigen::Index>(f.r_inner); r < sum.size(); ++r) {
            if (count(r) < 50)
                continue;
            // Ring mean within 4 standard errors of the frame mean.
            CHECK(std::abs(sum(r) / count(r) - mean) < 4.0 * sd / std::sqrt(count(r)) + 0.5);
        }
    }
}

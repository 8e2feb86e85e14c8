#include "hoi/geometry.hpp"

#include <cmath>
#include <numbers>

#include "hoi/rng.hpp"

namespace hoi {

namespace {

constexpr double kPi = std::numbers::pi;

// R2 low-discrepancy sequence on [0,1)^2 with a seeded offset.
struct QuasiGrid {
    double ox, oy;
    explicit QuasiGrid(Rng& rng) : ox(rng.uniform()), oy(rng.uniform()) {}
    std::pair<double, double> operator()(int i) const {
        constexpr double a1 = 0.7548776662466927;
        constexpr double a2 = 0.5698402909980532;
        const double u = std::fmod(ox + a1 * (i + 1), 1.0);
        const double v = std::fmod(oy + a2 * (i + 1), 1.0);
        return {u, v};
    }
};

struct Vec3 {
    double x, y, z;
};

void push_pair(std::vector<Vec3>& pts, const Vec3& p) {
    pts.push_back(p);
    pts.push_back({-p.x, -p.y, -p.z});
}

// Largest-remainder allocation of n among weights.
std::vector<int> allocate(int n, const std::vector<double>& weights) {
    double total = 0;
    for (double w : weights) total += w;
    std::vector<int> counts(weights.size());
    std::vector<std::pair<double, std::size_t>> rema;
    int assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = n * weights[i] / total;
        counts[i] = static_cast<int>(exact);
        assigned += counts[i];
        rema.push_back({exact - counts[i], i});
    }
    std::sort(rema.begin(), rema.end(), [](auto& a, auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int i = 0; assigned < n; ++i, ++assigned) counts[rema[static_cast<std::size_t>(i)].second]++;
    return counts;
}

Vec3 project_sphere(const Vec3& p, double r) {
    const double n = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    if (n == 0) return {r, 0, 0};
    return {p.x * r / n, p.y * r / n, p.z * r / n};
}

Vec3 project_box(const Vec3& p, const Vec3& h) {
    // Clamp into the box, then push out along the axis closest to its face.
    Vec3 q{std::clamp(p.x, -h.x, h.x), std::clamp(p.y, -h.y, h.y), std::clamp(p.z, -h.z, h.z)};
    const double dx = h.x - std::abs(q.x);
    const double dy = h.y - std::abs(q.y);
    const double dz = h.z - std::abs(q.z);
    if (dx <= dy && dx <= dz) {
        q.x = q.x >= 0 ? h.x : -h.x;
    } else if (dy <= dz) {
        q.y = q.y >= 0 ? h.y : -h.y;
    } else {
        q.z = q.z >= 0 ? h.z : -h.z;
    }
    return q;
}

Vec3 project_cylinder(const Vec3& p, double r, double half_h) {
    const double rho = std::sqrt(p.x * p.x + p.y * p.y);
    const double cz = std::clamp(p.z, -half_h, half_h);
    // distance to lateral wall vs nearest cap
    const double d_side = std::abs(rho - r);
    const double d_cap = half_h - std::abs(cz);
    if (rho > 1e-12 && (rho >= r || d_side <= d_cap)) {
        return {p.x * r / rho, p.y * r / rho, cz};
    }
    return {p.x, p.y, p.z >= 0 ? half_h : -half_h};
}

}  // namespace

std::array<double, 9> rodrigues(const std::array<double, 3>& aa) {
    const double theta = std::sqrt(aa[0] * aa[0] + aa[1] * aa[1] + aa[2] * aa[2]);
    std::array<double, 9> r{1, 0, 0, 0, 1, 0, 0, 0, 1};
    if (theta < 1e-12) return r;
    const double kx = aa[0] / theta, ky = aa[1] / theta, kz = aa[2] / theta;
    const double c = std::cos(theta), s = std::sin(theta), v = 1.0 - c;
    r[0] = c + kx * kx * v;
    r[1] = kx * ky * v - kz * s;
    r[2] = kx * kz * v + ky * s;
    r[3] = ky * kx * v + kz * s;
    r[4] = c + ky * ky * v;
    r[5] = ky * kz * v - kx * s;
    r[6] = kz * kx * v - ky * s;
    r[7] = kz * ky * v + kx * s;
    r[8] = c + kz * kz * v;
    return r;
}

Tensor<double> transform_points(const ObjectPointCloud& cloud, const Pose6& pose) {
    const auto r = rodrigues({pose[3], pose[4], pose[5]});
    const int n = cloud.count();
    Tensor<double> out({n, 3});
    for (int i = 0; i < n; ++i) {
        const float* p = cloud.points.row(i);
        const double x = p[0], y = p[1], z = p[2];
        out.at(i, 0) = r[0] * x + r[1] * y + r[2] * z + pose[0];
        out.at(i, 1) = r[3] * x + r[4] * y + r[5] * z + pose[1];
        out.at(i, 2) = r[6] * x + r[7] * y + r[8] * z + pose[2];
    }
    return out;
}

Vec3BoxHalf box_half_extents(double extent) {
    return {extent * 0.5, extent * 0.4, extent * 0.3};
}

CylinderDims cylinder_dims(double extent) {
    return {extent, extent * 1.2};
}

double shape_rest_height(ShapeTag shape, double extent) {
    switch (shape) {
        case ShapeTag::Sphere: return extent;
        case ShapeTag::Box: return box_half_extents(extent).hz;
        case ShapeTag::Cylinder: return cylinder_dims(extent).half_height;
    }
    return extent;
}

ObjectPointCloud make_pointcloud(ShapeTag shape, int n, std::uint64_t seed, double extent) {
    if (n < 4) throw domain_error("point cloud needs at least 4 points, got " + std::to_string(n));
    if (!(extent > 0)) throw domain_error("point cloud extent must be positive");
    Rng rng = Rng::derive(seed, 0x9e0c);
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(n));
    const int pairs = n / 2;
    const bool odd = (n % 2) != 0;

    if (shape == ShapeTag::Sphere) {
        const double r = extent;
        const double phase = rng.uniform(0, 2 * kPi);
        constexpr double golden = 2.399963229728653;  // 2*pi*(2-phi)
        for (int i = 0; i < pairs; ++i) {
            const double z = (i + 0.5) / pairs;  // upper hemisphere, antipodes fill the lower
            const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
            const double th = phase + golden * i;
            push_pair(pts, {r * rho * std::cos(th), r * rho * std::sin(th), r * z});
        }
        if (odd) {
            const double th = rng.uniform(0, 2 * kPi);
            pts.push_back({r * std::cos(th), r * std::sin(th), 0.0});
        }
    } else if (shape == ShapeTag::Box) {
        const auto h = box_half_extents(extent);
        // one face of each opposite pair; antipodes land on the mirror face
        const std::vector<double> areas{h.hy * h.hz, h.hx * h.hz, h.hx * h.hy};
        const auto counts = allocate(pairs, areas);
        for (int axis = 0; axis < 3; ++axis) {
            QuasiGrid grid(rng);
            for (int i = 0; i < counts[static_cast<std::size_t>(axis)]; ++i) {
                const auto [u, v] = grid(i);
                Vec3 p{};
                if (axis == 0) p = {h.hx, (u - 0.5) * 2 * h.hy, (v - 0.5) * 2 * h.hz};
                if (axis == 1) p = {(u - 0.5) * 2 * h.hx, h.hy, (v - 0.5) * 2 * h.hz};
                if (axis == 2) p = {(u - 0.5) * 2 * h.hx, (v - 0.5) * 2 * h.hy, h.hz};
                push_pair(pts, p);
            }
        }
        if (odd) pts.push_back({h.hx, 0.0, 0.0});
    } else {
        const auto dims = cylinder_dims(extent);
        const double r = dims.radius, hh = dims.half_height;
        const std::vector<double> areas{2 * kPi * r * (2 * hh), kPi * r * r};
        const auto counts = allocate(pairs, areas);
        QuasiGrid side(rng);
        for (int i = 0; i < counts[0]; ++i) {
            const auto [u, v] = side(i);
            const double th = 2 * kPi * u;
            push_pair(pts, {r * std::cos(th), r * std::sin(th), (v - 0.5) * 2 * hh});
        }
        QuasiGrid cap(rng);
        for (int i = 0; i < counts[1]; ++i) {
            const auto [u, v] = cap(i);
            const double rho = r * std::sqrt(u);
            const double th = 2 * kPi * v;
            push_pair(pts, {rho * std::cos(th), rho * std::sin(th), hh});
        }
        if (odd) {
            const double th = rng.uniform(0, 2 * kPi);
            pts.push_back({r * std::cos(th), r * std::sin(th), 0.0});
        }
    }

    // Drive the centroid to zero while keeping every point exactly on the
    // surface: shift by -centroid, re-project, repeat. Antipodal construction
    // makes this a no-op for even n.
    const auto h = box_half_extents(extent);
    const auto cyl = cylinder_dims(extent);
    for (int iter = 0; iter < 64; ++iter) {
        Vec3 c{0, 0, 0};
        for (const auto& p : pts) {
            c.x += p.x;
            c.y += p.y;
            c.z += p.z;
        }
        c.x /= n;
        c.y /= n;
        c.z /= n;
        const double cn = std::sqrt(c.x * c.x + c.y * c.y + c.z * c.z);
        if (cn < 1e-9) break;
        for (auto& p : pts) {
            Vec3 q{p.x - c.x, p.y - c.y, p.z - c.z};
            switch (shape) {
                case ShapeTag::Sphere: p = project_sphere(q, extent); break;
                case ShapeTag::Box: p = project_box(q, {h.hx, h.hy, h.hz}); break;
                case ShapeTag::Cylinder: p = project_cylinder(q, cyl.radius, cyl.half_height); break;
            }
        }
    }

    ObjectPointCloud cloud;
    cloud.shape_tag = shape;
    cloud.points = Tensor<float>({n, 3});
    for (int i = 0; i < n; ++i) {
        cloud.points.at(i, 0) = static_cast<float>(pts[static_cast<std::size_t>(i)].x);
        cloud.points.at(i, 1) = static_cast<float>(pts[static_cast<std::size_t>(i)].y);
        cloud.points.at(i, 2) = static_cast<float>(pts[static_cast<std::size_t>(i)].z);
    }
    return cloud;
}

}  // namespace hoi

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hoi/geometry.hpp"
#include "hoi/motion_io.hpp"
#include "hoi/rng.hpp"
#include "hoi/synthetic.hpp"

using namespace hoi;

namespace fs = std::filesystem;

namespace {

double min_hand_cloud_distance(const HOISample& s, int frame, int hand_joint) {
    const Pose6 pose = pose_from_row(s.object.frames, frame);
    const Tensor<double> world = transform_points(s.points, pose);
    const float* h = s.human.frames.row(frame) + 3 * hand_joint;
    double best = 1e18;
    for (int i = 0; i < world.dim(0); ++i) {
        const double dx = world.at(i, 0) - h[0];
        const double dy = world.at(i, 1) - h[1];
        const double dz = world.at(i, 2) - h[2];
        best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
    return best;
}

}  // namespace

TEST_CASE("rodrigues/transform: identity, translation, analytic rotation") {
    ObjectPointCloud cloud;
    cloud.points = Tensor<float>({1, 3}, {1.0f, 0.0f, 0.0f});

    auto same = transform_points(cloud, {0, 0, 0, 0, 0, 0});
    CHECK(same.at(0, 0) == doctest::Approx(1.0));
    CHECK(same.at(0, 1) == doctest::Approx(0.0));

    auto shifted = transform_points(cloud, {0.5, -1.0, 2.0, 0, 0, 0});
    CHECK(shifted.at(0, 0) == doctest::Approx(1.5));
    CHECK(shifted.at(0, 1) == doctest::Approx(-1.0));
    CHECK(shifted.at(0, 2) == doctest::Approx(2.0));

    // rotation by pi about z maps (1,0,0) to (-1,0,0)
    auto rot = transform_points(cloud, {0, 0, 0, 0, 0, M_PI});
    CHECK(std::abs(rot.at(0, 0) + 1.0) < 1e-6);
    CHECK(std::abs(rot.at(0, 1)) < 1e-6);
    CHECK(std::abs(rot.at(0, 2)) < 1e-6);
}

TEST_CASE("rodrigues: rigid-body pairwise distance preservation") {
    Rng rng(55);
    ObjectPointCloud cloud;
    cloud.points = Tensor<float>({12, 3});
    for (auto& v : cloud.points.data) v = static_cast<float>(rng.uniform(-0.3, 0.3));
    for (int trial = 0; trial < 10; ++trial) {
        Pose6 pose{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                   rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        auto world = transform_points(cloud, pose);
        for (int a = 0; a < 12; ++a) {
            for (int b = a + 1; b < 12; ++b) {
                double d0 = 0, d1 = 0;
                for (int c = 0; c < 3; ++c) {
                    const double u = double(cloud.points.at(a, c)) - cloud.points.at(b, c);
                    const double v = world.at(a, c) - world.at(b, c);
                    d0 += u * u;
                    d1 += v * v;
                }
                CHECK(std::abs(std::sqrt(d0) - std::sqrt(d1)) < 1e-5);
            }
        }
    }
}

TEST_CASE("make_pointcloud: surface constraints and centroid") {
    for (int n : {4, 17, 64, 340}) {
        auto sphere = make_pointcloud(ShapeTag::Sphere, n, 9, 0.12);
        REQUIRE(sphere.count() == n);
        double cx = 0, cy = 0, cz = 0;
        for (int i = 0; i < n; ++i) {
            const double norm = std::sqrt(double(sphere.points.at(i, 0)) * sphere.points.at(i, 0) +
                                          double(sphere.points.at(i, 1)) * sphere.points.at(i, 1) +
                                          double(sphere.points.at(i, 2)) * sphere.points.at(i, 2));
            CHECK(norm == doctest::Approx(0.12).epsilon(1e-5));
            CHECK(std::abs(norm - 0.12) < 1e-6 + 1e-7);
            cx += sphere.points.at(i, 0);
            cy += sphere.points.at(i, 1);
            cz += sphere.points.at(i, 2);
        }
        CHECK(std::sqrt(cx * cx + cy * cy + cz * cz) / n < 1e-6);
    }

    auto box = make_pointcloud(ShapeTag::Box, 64, 10, 0.3);
    const auto h = box_half_extents(0.3);
    for (int i = 0; i < 64; ++i) {
        const double px = std::abs(box.points.at(i, 0));
        const double py = std::abs(box.points.at(i, 1));
        const double pz = std::abs(box.points.at(i, 2));
        CHECK(px <= h.hx + 1e-6);
        CHECK(py <= h.hy + 1e-6);
        CHECK(pz <= h.hz + 1e-6);
        const bool on_face = std::abs(px - h.hx) < 1e-6 || std::abs(py - h.hy) < 1e-6 ||
                             std::abs(pz - h.hz) < 1e-6;
        CHECK(on_face);
    }

    auto cyl = make_pointcloud(ShapeTag::Cylinder, 50, 11, 0.08);
    const auto cd = cylinder_dims(0.08);
    for (int i = 0; i < 50; ++i) {
        const double rho = std::sqrt(double(cyl.points.at(i, 0)) * cyl.points.at(i, 0) +
                                     double(cyl.points.at(i, 1)) * cyl.points.at(i, 1));
        const double az = std::abs(cyl.points.at(i, 2));
        CHECK(rho <= cd.radius + 1e-6);
        CHECK(az <= cd.half_height + 1e-6);
        const bool on_surface =
            std::abs(rho - cd.radius) < 1e-6 || std::abs(az - cd.half_height) < 1e-6;
        CHECK(on_surface);
    }

    CHECK_THROWS_AS(make_pointcloud(ShapeTag::Box, 3, 1, 0.2), Error);
}

TEST_CASE("motion/pointcloud files: round trip and corruption errors") {
    const auto dir = fs::temp_directory_path() / "hoi_io_test";
    fs::create_directories(dir);

    Rng rng(77);
    MotionSequence m({5, 6});
    for (auto& v : m.data) v = static_cast<float>(rng.gaussian());
    const std::string mp = (dir / "m.hoim").string();
    write_motion(mp, m);
    MotionSequence back = read_motion(mp);
    CHECK(back.dims == m.dims);
    CHECK(back.data == m.data);

    std::ifstream in(mp, std::ios::binary);
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    const std::string bad = (dir / "bad.hoim").string();
    std::string corrupt = raw;
    corrupt[1] = 'X';
    std::ofstream(bad, std::ios::binary) << corrupt;
    try {
        read_motion(bad);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == "E_FORMAT");
        CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }

    std::ofstream(bad, std::ios::binary) << raw.substr(0, raw.size() - 2);
    try {
        read_motion(bad);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == "E_FORMAT");
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }

    std::string vbad = raw;
    vbad[4] = 3;
    std::ofstream(bad, std::ios::binary) << vbad;
    CHECK_THROWS_AS(read_motion(bad), Error);

    auto cloud = make_pointcloud(ShapeTag::Sphere, 16, 3, 0.1);
    const std::string pp = (dir / "p.hoip").string();
    write_pointcloud(pp, cloud);
    auto cback = read_pointcloud(pp);
    CHECK(cback.points.data == cloud.points.data);
}

TEST_CASE("manifest: round trip, duplicate ids rejected") {
    const auto dir = fs::temp_directory_path() / "hoi_manifest_test";
    fs::create_directories(dir);
    DatasetManifest m;
    m.entries.push_back({"a", "lift the box with the left hand", "a_h.hoim", "a_o.hoim", "a_p.hoip"});
    m.entries.push_back({"b", "kick the ball", "b_h.hoim", "b_o.hoim", "b_p.hoip"});
    const std::string path = (dir / "manifest.json").string();
    write_manifest(path, m);
    auto back = read_manifest(path, Split::Train);
    REQUIRE(back.entries.size() == 2);
    CHECK(back.entries[0].caption == "lift the box with the left hand");
    CHECK(back.entries[1].points_path == "b_p.hoip");

    m.entries.push_back({"a", "dup", "x", "y", "z"});
    write_manifest(path, m);
    CHECK_THROWS_AS(read_manifest(path, Split::Train), Error);
}

TEST_CASE("generator: determinism is byte-identical") {
    auto a = generate_synthetic_dataset(1234, 6, 24, default_templates());
    auto b = generate_synthetic_dataset(1234, 6, 24, default_templates());
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].caption == b[i].caption);
        CHECK(a[i].human.frames.data == b[i].human.frames.data);
        CHECK(a[i].object.frames.data == b[i].object.frames.data);
        CHECK(a[i].points.points.data == b[i].points.points.data);
        CHECK(a[i].contact_mask == b[i].contact_mask);
    }
    auto c = generate_synthetic_dataset(1235, 6, 24, default_templates());
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].human.frames.data != c[i].human.frames.data) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("generator: template contracts (contact geometry)") {
    auto samples = generate_synthetic_dataset(42, 120, 32, default_templates());
    int saw_lift_left = 0, saw_kick = 0;
    for (const auto& s : samples) {
        s.validate();
        CHECK(s.template_id == caption_template_id(s.caption, default_templates()));
        const int L = s.human.length();

        if (s.template_id == 0 && s.caption.find("left") != std::string::npos) {
            // lift with the left hand: min distance < 0.02 on at least half the frames
            ++saw_lift_left;
            int close = 0;
            for (int f = 0; f < L; ++f) {
                if (min_hand_cloud_distance(s, f, s.human.layout.left_hand) < 0.02) ++close;
            }
            CHECK(close * 2 >= L);
        }
        if (s.template_id == 3) {
            // kick: both hands beyond 0.10 m on every frame
            ++saw_kick;
            for (int f = 0; f < L; ++f) {
                CHECK(min_hand_cloud_distance(s, f, s.human.layout.left_hand) > 0.10);
                CHECK(min_hand_cloud_distance(s, f, s.human.layout.right_hand) > 0.10);
            }
        }
    }
    CHECK(saw_lift_left > 0);
    CHECK(saw_kick > 0);
}

TEST_CASE("generator: contact_mask agrees with recomputed distances on all frames") {
    auto samples = generate_synthetic_dataset(7, 40, 24, default_templates());
    for (const auto& s : samples) {
        for (int f = 0; f < s.human.length(); ++f) {
            const double d = std::min(min_hand_cloud_distance(s, f, s.human.layout.left_hand),
                                      min_hand_cloud_distance(s, f, s.human.layout.right_hand));
            const bool contact = d < 0.05;
            CHECK(contact == static_cast<bool>(s.contact_mask[static_cast<std::size_t>(f)]));
        }
    }
}

TEST_CASE("generator: contact classes match template promises") {
    auto samples = generate_synthetic_dataset(99, 150, 32, default_templates());
    for (const auto& s : samples) {
        const bool promised = default_templates()[static_cast<std::size_t>(s.template_id)].hand_contact;
        int contact_frames = 0;
        for (char c : s.contact_mask) contact_frames += c;
        if (promised) {
            CHECK(contact_frames * 2 >= s.human.length());
        } else {
            CHECK(contact_frames == 0);
        }
    }
}

TEST_CASE("samples survive the file round trip") {
    const auto dir = fs::temp_directory_path() / "hoi_ds_test";
    fs::create_directories(dir);
    auto samples = generate_synthetic_dataset(5, 4, 16, default_templates());
    DatasetManifest m;
    for (const auto& s : samples) {
        write_motion((dir / (s.id + "_h.hoim")).string(), s.human.frames);
        write_motion((dir / (s.id + "_o.hoim")).string(), s.object.frames);
        write_pointcloud((dir / (s.id + "_p.hoip")).string(), s.points);
        m.entries.push_back({s.id, s.caption, s.id + "_h.hoim", s.id + "_o.hoim", s.id + "_p.hoip"});
    }
    const std::string mp = (dir / "manifest.json").string();
    write_manifest(mp, m);
    auto loaded = load_samples(mp, Split::Train);
    REQUIRE(loaded.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(loaded[i].human.frames.data == samples[i].human.frames.data);
        CHECK(loaded[i].object.frames.data == samples[i].object.frames.data);
        CHECK(loaded[i].points.points.data == samples[i].points.points.data);
    }
}

#include "hoi/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "hoi/geometry.hpp"
#include "hoi/rng.hpp"

namespace hoi {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kContactThreshold = 0.05;

struct V3 {
    double x = 0, y = 0, z = 0;
    V3 operator+(const V3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    V3 operator-(const V3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    V3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

double smoothstep01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// Piecewise smoothstep interpolation through (time, value) keys.
struct Channel {
    std::vector<std::pair<double, double>> keys;

    double eval(double t) const {
        if (keys.empty()) return 0;
        if (t <= keys.front().first) return keys.front().second;
        if (t >= keys.back().first) return keys.back().second;
        for (std::size_t i = 1; i < keys.size(); ++i) {
            if (t <= keys[i].first) {
                const auto& [t0, v0] = keys[i - 1];
                const auto& [t1, v1] = keys[i];
                const double u = smoothstep01((t - t0) / (t1 - t0));
                return v0 + (v1 - v0) * u;
            }
        }
        return keys.back().second;
    }
};

struct PoseSpline {
    Channel ch[6];
    Pose6 eval(double t) const {
        return {ch[0].eval(t), ch[1].eval(t), ch[2].eval(t),
                ch[3].eval(t), ch[4].eval(t), ch[5].eval(t)};
    }
};

std::array<V3, 8> rest_pose() {
    return {{
        {0.00, 0.00, 0.95},   // root
        {0.00, 0.00, 1.60},   // head
        {0.00, 0.22, 1.40},   // left shoulder
        {0.00, -0.22, 1.40},  // right shoulder
        {0.06, 0.30, 0.85},   // left hand
        {0.06, -0.30, 0.85},  // right hand
        {0.00, 0.12, 0.05},   // left foot
        {0.00, -0.12, 0.05},  // right foot
    }};
}

V3 rotate(const std::array<double, 9>& r, const V3& p) {
    return {r[0] * p.x + r[1] * p.y + r[2] * p.z,
            r[3] * p.x + r[4] * p.y + r[5] * p.z,
            r[6] * p.x + r[7] * p.y + r[8] * p.z};
}

const char* object_word(ShapeTag shape) {
    switch (shape) {
        case ShapeTag::Box: return "box";
        case ShapeTag::Sphere: return "ball";
        case ShapeTag::Cylinder: return "cylinder";
    }
    return "?";
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

}  // namespace

const std::vector<CaptionTemplate>& default_templates() {
    static const std::vector<CaptionTemplate> kTemplates = {
        {0, "lift the {obj} with the {hand} hand", true, true},
        {1, "put down the {obj} with the {hand} hand", true, true},
        {2, "move the {obj} to the {hand} side", true, true},
        {3, "kick the {obj}", false, false},
        {4, "walk to the {obj}", false, false},
        {5, "wave at the {obj}", false, false},
    };
    return kTemplates;
}

std::vector<std::string> caption_word_list() {
    return {"lift", "the", "box",  "ball", "cylinder", "with", "left", "right", "hand",
            "put",  "down", "move", "to",   "side",     "kick", "walk", "wave",  "at"};
}

std::string fill_caption(const CaptionTemplate& tpl, ShapeTag shape, bool left_hand) {
    std::string s = replace_all(tpl.pattern, "{obj}", object_word(shape));
    return replace_all(s, "{hand}", left_hand ? "left" : "right");
}

int caption_template_id(const std::string& caption,
                        const std::vector<CaptionTemplate>& templates) {
    for (const auto& tpl : templates) {
        for (ShapeTag shape : {ShapeTag::Box, ShapeTag::Sphere, ShapeTag::Cylinder}) {
            for (bool left : {true, false}) {
                if (fill_caption(tpl, shape, left) == caption) return tpl.id;
            }
        }
    }
    return -1;
}

std::vector<HOISample> generate_synthetic_dataset(std::uint64_t seed, int n, int L,
                                                  const std::vector<CaptionTemplate>& templates,
                                                  const SyntheticConfig& cfg) {
    if (n < 1) throw domain_error("dataset size must be >= 1");
    if (L < 8) throw domain_error("dataset needs at least 8 frames per clip");
    if (templates.empty()) throw domain_error("template set is empty");

    std::vector<HOISample> samples;
    samples.reserve(static_cast<std::size_t>(n));
    const SkeletonLayout layout;
    const auto rest = rest_pose();

    for (int idx = 0; idx < n; ++idx) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(idx));
        const auto& tpl = templates[rng.uniform_int(templates.size())];
        const ShapeTag shape =
            std::array{ShapeTag::Box, ShapeTag::Sphere, ShapeTag::Cylinder}[rng.uniform_int(3)];
        const bool left_hand = rng.uniform_int(2) == 0;
        const int hand_joint = left_hand ? layout.left_hand : layout.right_hand;
        const double side = left_hand ? 1.0 : -1.0;

        double extent = 0;
        switch (shape) {
            case ShapeTag::Sphere: extent = rng.uniform(0.10, 0.15); break;
            case ShapeTag::Box: extent = rng.uniform(0.22, 0.32); break;
            case ShapeTag::Cylinder: extent = rng.uniform(0.07, 0.11); break;
        }
        const double z_rest = shape_rest_height(shape, extent);

        const std::uint64_t cloud_seed =
            seed ^ (0x517cc1b727220a95ULL * (static_cast<std::uint64_t>(idx) + 1));
        ObjectPointCloud cloud = make_pointcloud(shape, cfg.points_per_cloud, cloud_seed, extent);

        // Grasp point: topmost sampled surface point (lowest index on ties).
        int grasp_idx = 0;
        for (int i = 1; i < cloud.count(); ++i) {
            if (cloud.points.at(i, 2) > cloud.points.at(grasp_idx, 2)) grasp_idx = i;
        }
        const V3 grasp_local{cloud.points.at(grasp_idx, 0), cloud.points.at(grasp_idx, 1),
                             cloud.points.at(grasp_idx, 2)};
        const double gl_norm = std::max(grasp_local.norm(), 1e-9);
        const V3 grasp_dir_local = grasp_local * (1.0 / gl_norm);
        const double grasp_gap = rng.uniform(0.004, 0.008);

        // Template trajectory script.
        PoseSpline obj;
        double contact0 = -1, contact1 = -1;  // glue interval in [0,1]
        Channel root_x;
        root_x.keys = {{0.0, 0.0}, {1.0, 0.0}};
        bool arm_swing = false, wave = false, kick = false;
        const double ju = rng.uniform(-1.0, 1.0);

        switch (tpl.id) {
            case 0: {  // lift
                const double x0 = 0.50 + 0.08 * rng.uniform();
                const double y0 = side * (0.12 + 0.05 * rng.uniform());
                const double x1 = 0.32 + 0.05 * rng.uniform();
                const double y1 = side * 0.18;
                const double z1 = 1.05 + 0.20 * rng.uniform();
                obj.ch[0].keys = {{0, x0}, {0.35, x0}, {0.70, x1}, {1, x1}};
                obj.ch[1].keys = {{0, y0}, {0.35, y0}, {0.70, y1}, {1, y1}};
                obj.ch[2].keys = {{0, z_rest}, {0.35, z_rest}, {0.70, z1}, {1, z1}};
                obj.ch[5].keys = {{0, 0}, {0.35, 0}, {0.70, 0.25 * ju}, {1, 0.25 * ju}};
                contact0 = 0.25;
                contact1 = 1.0;
                break;
            }
            case 1: {  // put down
                const double x0 = 0.32 + 0.05 * rng.uniform();
                const double y0 = side * 0.18;
                const double z0 = 1.05 + 0.20 * rng.uniform();
                const double x1 = 0.50 + 0.08 * rng.uniform();
                const double y1 = side * (0.12 + 0.05 * rng.uniform());
                obj.ch[0].keys = {{0, x0}, {0.20, x0}, {0.60, x1}, {1, x1}};
                obj.ch[1].keys = {{0, y0}, {0.20, y0}, {0.60, y1}, {1, y1}};
                obj.ch[2].keys = {{0, z0}, {0.20, z0}, {0.60, z_rest}, {1, z_rest}};
                obj.ch[5].keys = {{0, 0}, {0.20, 0}, {0.60, -0.2 * ju}, {1, -0.2 * ju}};
                contact0 = 0.0;
                contact1 = 0.70;
                break;
            }
            case 2: {  // move to the side
                const double x0 = 0.45 + 0.08 * rng.uniform();
                const double y0 = -side * 0.10;
                const double y1 = side * (0.32 + 0.10 * rng.uniform());
                const double z_up = z_rest + 0.16 + 0.06 * rng.uniform();
                obj.ch[0].keys = {{0, x0}, {1, x0}};
                obj.ch[1].keys = {{0, y0}, {0.30, y0}, {0.72, y1}, {1, y1}};
                obj.ch[2].keys = {{0, z_rest}, {0.30, z_rest}, {0.45, z_up},
                                  {0.60, z_up},  {0.75, z_rest}, {1, z_rest}};
                obj.ch[5].keys = {{0, 0}, {0.3, 0}, {0.75, 0.2 * ju}, {1, 0.2 * ju}};
                contact0 = 0.22;
                contact1 = 0.80;
                break;
            }
            case 3: {  // kick
                kick = true;
                const double x0 = 0.52 + 0.08 * rng.uniform();
                const double y0 = -0.10 + 0.05 * ju;
                const double dist = 0.9 + 0.3 * rng.uniform();
                obj.ch[0].keys = {{0, x0}, {0.46, x0}, {0.66, x0 + 0.75 * dist},
                                  {0.86, x0 + dist}, {1, x0 + dist}};
                obj.ch[1].keys = {{0, y0}, {1, y0}};
                obj.ch[2].keys = {{0, z_rest}, {1, z_rest}};
                obj.ch[4].keys = {{0, 0}, {0.46, 0}, {0.86, -2.0 - 0.2 * ju}, {1, -2.0 - 0.2 * ju}};
                break;
            }
            case 4: {  // walk to
                const double x0 = 1.9 + 0.3 * rng.uniform();
                const double y0 = 0.2 * ju;
                obj.ch[0].keys = {{0, x0}, {1, x0}};
                obj.ch[1].keys = {{0, y0}, {1, y0}};
                obj.ch[2].keys = {{0, z_rest}, {1, z_rest}};
                root_x.keys = {{0, 0}, {0.10, 0}, {0.90, x0 - 0.70}, {1, x0 - 0.70}};
                arm_swing = true;
                break;
            }
            default: {  // wave at
                wave = true;
                const double x0 = 1.4 + 0.3 * rng.uniform();
                const double y0 = 0.25 * ju;
                obj.ch[0].keys = {{0, x0}, {1, x0}};
                obj.ch[1].keys = {{0, y0}, {1, y0}};
                obj.ch[2].keys = {{0, z_rest}, {1, z_rest}};
                break;
            }
        }
        for (int c = 0; c < 6; ++c) {
            if (obj.ch[c].keys.empty()) obj.ch[c].keys = {{0, 0}, {1, 0}};
        }

        // Sway phases.
        const double ph1 = rng.uniform(0, 2 * kPi);
        const double ph2 = rng.uniform(0, 2 * kPi);
        const double ph3 = rng.uniform(0, 2 * kPi);

        HOISample s;
        {
            std::ostringstream os;
            os << "s" << std::setw(6) << std::setfill('0') << idx;
            s.id = os.str();
        }
        s.caption = fill_caption(tpl, shape, left_hand);
        s.template_id = tpl.id;
        s.points = cloud;
        s.human.fps = cfg.fps;
        s.human.layout = layout;
        s.human.frames = MotionSequence({L, layout.feature_dim()});
        s.object.frames = MotionSequence({L, 6});
        s.contact_mask.assign(static_cast<std::size_t>(L), 0);

        // Hand reach target at the moment contact begins (world grasp point).
        V3 reach_target{};
        if (contact0 >= 0) {
            const Pose6 p = obj.eval(contact0);
            const auto r = rodrigues({p[3], p[4], p[5]});
            const V3 gw = rotate(r, grasp_local) + V3{p[0], p[1], p[2]};
            reach_target = gw + rotate(r, grasp_dir_local) * grasp_gap;
        }

        for (int f = 0; f < L; ++f) {
            const double tau = L > 1 ? static_cast<double>(f) / (L - 1) : 0.0;
            const Pose6 pose = obj.eval(tau);
            for (int c = 0; c < 6; ++c)
                s.object.frames.at(f, c) = static_cast<float>(pose[c]);

            const V3 sway{0.008 * std::sin(2 * kPi * 1.3 * tau + ph1),
                          0.008 * std::sin(2 * kPi * 1.7 * tau + ph2),
                          0.006 * std::sin(2 * kPi * 2.3 * tau + ph3)};
            const V3 root_off = V3{root_x.eval(tau), 0, 0} + sway;

            std::array<V3, 8> joints;
            for (int j = 0; j < 8; ++j) joints[static_cast<std::size_t>(j)] = rest[static_cast<std::size_t>(j)] + root_off;

            if (arm_swing) {
                const double sw = 0.06 * std::sin(2 * kPi * 2.2 * tau);
                joints[4].x += sw;
                joints[5].x -= sw;
                joints[6].z += 0.04 * std::max(0.0, std::sin(2 * kPi * 2.0 * tau));
                joints[7].z += 0.04 * std::max(0.0, std::sin(2 * kPi * 2.0 * tau + kPi));
            }
            if (wave) {
                const double amp_env = smoothstep01((tau - 0.05) / 0.15) *
                                       (1.0 - smoothstep01((tau - 0.85) / 0.10));
                const V3 raised = rest[3] + root_off + V3{0.15, 0.12, 0.35};
                const V3 rest_hand = rest[5] + root_off;
                const V3 base = rest_hand + (raised - rest_hand) * amp_env;
                joints[5] = base + V3{0, 0.18 * amp_env * std::sin(2 * kPi * 2.5 * tau), 0};
            }
            if (kick) {
                const double fwd = smoothstep01((tau - 0.38) / 0.08) *
                                   (1.0 - smoothstep01((tau - 0.50) / 0.12));
                const Pose6 p0 = obj.eval(0.0);
                const V3 kick_target{p0[0] - 0.12, p0[1], 0.12};
                const V3 rest_foot = rest[7] + root_off;
                joints[7] = rest_foot + (kick_target - rest_foot) * fwd;
            }

            const auto rot = rodrigues({pose[3], pose[4], pose[5]});
            if (contact0 >= 0) {
                if (tau >= contact0 && tau <= contact1) {
                    // glued to the surface point, small fixed gap
                    const V3 gw = rotate(rot, grasp_local) + V3{pose[0], pose[1], pose[2]};
                    joints[static_cast<std::size_t>(hand_joint)] =
                        gw + rotate(rot, grasp_dir_local) * grasp_gap;
                } else if (tau < contact0) {
                    const double a = smoothstep01((tau - (contact0 - 0.14)) / 0.14);
                    const V3 rest_hand = joints[static_cast<std::size_t>(hand_joint)];
                    joints[static_cast<std::size_t>(hand_joint)] =
                        rest_hand + (reach_target - rest_hand) * a;
                } else {
                    const double a = smoothstep01((tau - contact1) / 0.14);
                    const Pose6 pc = obj.eval(contact1);
                    const auto rc = rodrigues({pc[3], pc[4], pc[5]});
                    const V3 release = rotate(rc, grasp_local) + V3{pc[0], pc[1], pc[2]} +
                                       rotate(rc, grasp_dir_local) * grasp_gap;
                    const V3 rest_hand = rest[static_cast<std::size_t>(hand_joint)] + root_off;
                    joints[static_cast<std::size_t>(hand_joint)] =
                        release + (rest_hand - release) * a;
                }
            }

            for (int j = 0; j < 8; ++j) {
                s.human.frames.at(f, 3 * j + 0) = static_cast<float>(joints[static_cast<std::size_t>(j)].x);
                s.human.frames.at(f, 3 * j + 1) = static_cast<float>(joints[static_cast<std::size_t>(j)].y);
                s.human.frames.at(f, 3 * j + 2) = static_cast<float>(joints[static_cast<std::size_t>(j)].z);
            }

            // Ground-truth contact: min distance from either hand to the
            // posed cloud, evaluated on the stored (float) values.
            double min_d = 1e18;
            for (int hj : {layout.left_hand, layout.right_hand}) {
                const V3 hand{s.human.frames.at(f, 3 * hj), s.human.frames.at(f, 3 * hj + 1),
                              s.human.frames.at(f, 3 * hj + 2)};
                for (int i = 0; i < cloud.count(); ++i) {
                    const V3 pl{cloud.points.at(i, 0), cloud.points.at(i, 1),
                                cloud.points.at(i, 2)};
                    const V3 pw = rotate(rot, pl) + V3{pose[0], pose[1], pose[2]};
                    min_d = std::min(min_d, (pw - hand).norm());
                }
            }
            s.contact_mask[static_cast<std::size_t>(f)] = min_d < kContactThreshold ? 1 : 0;
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace hoi

#pragma once

#include <string>
#include <vector>

#include "hoi/error.hpp"
#include "hoi/tensor.hpp"

namespace hoi {

// Frame-major motion matrix shared by both modalities (human L x D_h,
// object L x 6).
using MotionSequence = Tensor<float>;

// Synthetic stick-figure skeleton: absolute joint positions, 3 coords per
// joint. Real SMPL-H parameter vectors (D_h = 159) pass through the same
// matrix type untouched.
struct SkeletonLayout {
    int joints = 8;
    int root = 0;
    int head = 1;
    int left_shoulder = 2;
    int right_shoulder = 3;
    int left_hand = 4;
    int right_hand = 5;
    int left_foot = 6;
    int right_foot = 7;

    int feature_dim() const { return joints * 3; }
};

struct HumanMotion {
    MotionSequence frames;  // L x (3*J)
    float fps = 30.0f;
    SkeletonLayout layout;

    int length() const { return frames.dim(0); }
    int dim() const { return frames.dim(1); }

    void validate() const {
        if (frames.rank() != 2 || frames.dim(0) < 2) {
            throw shape_error("human motion needs at least 2 frames, got " +
                              shape_str(frames.dims));
        }
        if (frames.dim(1) != layout.feature_dim()) {
            throw shape_error("human motion dim " + std::to_string(frames.dim(1)) +
                              " does not match layout (" + std::to_string(layout.feature_dim()) +
                              ")");
        }
        if (layout.left_hand >= layout.joints || layout.right_hand >= layout.joints) {
            throw range_error("hand joint index outside skeleton");
        }
        if (!frames.all_finite()) throw domain_error("human motion contains non-finite values");
    }
};

// Columns 0-2 translation (m), columns 3-5 axis-angle rotation (rad).
struct ObjectMotion {
    MotionSequence frames;  // L x 6

    int length() const { return frames.dim(0); }

    void validate() const {
        if (frames.rank() != 2 || frames.dim(1) != 6) {
            throw shape_error("object motion must be L x 6, got " + shape_str(frames.dims));
        }
        if (!frames.all_finite()) throw domain_error("object motion contains non-finite values");
        for (int i = 0; i < frames.dim(0); ++i) {
            const float* r = frames.row(i) + 3;
            const double norm = std::sqrt(double(r[0]) * r[0] + double(r[1]) * r[1] +
                                          double(r[2]) * r[2]);
            if (norm >= 6.283185307179586) {
                throw domain_error("rotation vector norm " + std::to_string(norm) +
                                   " >= 2*pi at frame " + std::to_string(i));
            }
        }
    }
};

enum class ShapeTag { Box, Sphere, Cylinder };

inline const char* shape_tag_name(ShapeTag t) {
    switch (t) {
        case ShapeTag::Box: return "box";
        case ShapeTag::Sphere: return "sphere";
        case ShapeTag::Cylinder: return "cylinder";
    }
    return "?";
}

// Object-local surface samples, centroid re-centered to the origin.
struct ObjectPointCloud {
    Tensor<float> points;  // N x 3
    ShapeTag shape_tag = ShapeTag::Box;

    int count() const { return points.dim(0); }
};

struct HOISample {
    std::string id;
    std::string caption;
    HumanMotion human;
    ObjectMotion object;
    ObjectPointCloud points;
    std::vector<char> contact_mask;  // ground truth, synthetic only
    int template_id = -1;            // generator bookkeeping

    void validate() const {
        human.validate();
        object.validate();
        if (human.length() != object.length() ||
            human.length() != static_cast<int>(contact_mask.size())) {
            throw shape_error("sample '" + id + "': human/object/contact lengths disagree");
        }
    }
};

struct ManifestEntry {
    std::string id;
    std::string caption;
    std::string human_path;
    std::string object_path;
    std::string points_path;
};

enum class Split { Train, Test };

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    Split split = Split::Train;
};

}  // namespace hoi

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hoi/motion.hpp"

namespace hoi {

// Caption template of the procedural generator. `hand_contact` is the class
// the template deterministically implies: the scripted trajectories keep
// hands within the contact threshold during the glue interval, or far
// outside it for the whole clip.
struct CaptionTemplate {
    int id = 0;
    std::string pattern;  // "{obj}" and "{hand}" placeholders
    bool hand_contact = false;
    bool uses_hand_word = false;
};

const std::vector<CaptionTemplate>& default_templates();

// Closed caption vocabulary of the template set (lowercase words).
std::vector<std::string> caption_word_list();

struct SyntheticConfig {
    int points_per_cloud = 64;
    float fps = 30.0f;
};

// Pure function of (seed, n, L, templates, cfg). Object trajectories are
// piecewise-smoothstep splines keyed per template; during contact frames the
// designated hand rides a sampled surface point within 2 cm; contact_mask
// holds the recomputed hand-to-surface test at 0.05 m.
std::vector<HOISample> generate_synthetic_dataset(std::uint64_t seed, int n, int L,
                                                  const std::vector<CaptionTemplate>& templates,
                                                  const SyntheticConfig& cfg = {});

// Caption text for (template, shape, hand_is_left); exposed so evaluation can
// recover the template class from a caption.
std::string fill_caption(const CaptionTemplate& tpl, ShapeTag shape, bool left_hand);

// Inverse of fill_caption on the default template set; returns -1 when the
// caption matches no template.
int caption_template_id(const std::string& caption, const std::vector<CaptionTemplate>& templates);

}  // namespace hoi

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "train/triplet.hpp"

namespace relgen::data {

using core::Color;
using core::Image;

enum class Relation { hug, shake, ride, back_to_back };

Relation relation_from_string(const std::string& s);
const char* to_string(Relation r);
const std::vector<Relation>& all_relations();

// COCO-style 17-joint ordering: nose, eyes, ears, shoulders, elbows, wrists,
// hips, knees, ankles (left before right).
struct FigureStyle {
    Color color{0.8, 0.2, 0.2};
    bool square_head = false;
    double scale = 1.0;
    std::string color_name = "red";
};

struct FigurePose {
    double lean = 0.0;                            // torso lean, radians
    std::array<double, 2> shoulder{0.25, 0.25};   // left, right; angle from down
    std::array<double, 2> elbow{0.2, 0.2};
    std::array<double, 2> hip{0.18, 0.18};
    std::array<double, 2> knee{0.12, 0.12};
};

struct StickFigure {
    FigureStyle style;
    FigurePose pose;
    double root_x = 32.0;  // pelvis centre, pixels
    double root_y = 44.0;

    // exact joint coordinates from forward kinematics
    std::array<std::array<double, 2>, train::kKeypointCount> joints() const;

    // mirror about the vertical line x = width (float convention x' = w - x)
    StickFigure mirrored(double image_width) const;
};

void render_figure(Image& img, const StickFigure& fig);
std::vector<std::uint8_t> figure_mask(const StickFigure& fig, std::size_t w, std::size_t h);

// Two articulated figures in a relation-specific configuration, rendered with
// pixel-exact joint annotations. No detector in the loop.
struct SyntheticScene {
    Relation relation;
    std::vector<StickFigure> figures;  // 2, drawn in order (1 over 0)
    Image image;
    std::vector<train::KeypointSet> keypoints;  // per figure, with occlusion flags
    std::vector<train::Mask> masks;
    std::vector<idext::Box> boxes;
    std::vector<std::string> captions;  // per figure
    std::string text;                   // relation text prompt
};

SyntheticScene synthesize_scene(Relation relation, std::uint64_t seed,
                                std::size_t image_size = 64);

// Scene plus the two neutral-pose prompt images of the same figures, with
// exact annotations on both sides: a complete, validated training triplet.
train::Triplet synthesize_triplet(Relation relation, std::uint64_t seed,
                                  std::size_t image_size = 64);

// Neutral-pose single-figure image used as the identity prompt.
Image render_prompt_image(const StickFigure& fig, std::size_t image_size,
                          train::KeypointSet* keypoints_out = nullptr);

// Fixed-seed tuning set: `per_relation` triplets for each listed relation.
std::vector<train::Triplet> make_training_set(const std::vector<Relation>& relations,
                                              std::size_t per_relation, std::uint64_t base_seed,
                                              std::size_t image_size = 64);

// Deterministic single-figure portrait for benchmark reference images.
Image render_reference_image(const std::string& object_name, std::size_t image_size = 64);

}  // namespace relgen::data

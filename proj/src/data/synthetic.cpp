// SPDX-License-Identifier: Apache-2.0
#include "data/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "core/rng.hpp"

namespace relgen::data {

using core::Rng;
using train::kKeypointCount;
using train::Keypoint;
using train::KeypointSet;

Relation relation_from_string(const std::string& s) {
    if (s == "hug") return Relation::hug;
    if (s == "shake") return Relation::shake;
    if (s == "ride") return Relation::ride;
    if (s == "back_to_back" || s == "back-to-back") return Relation::back_to_back;
    core::fail_invalid("synthetic: unknown relation " + s);
}

const char* to_string(Relation r) {
    switch (r) {
        case Relation::hug: return "hug";
        case Relation::shake: return "shake";
        case Relation::ride: return "ride";
        case Relation::back_to_back: return "back_to_back";
    }
    return "?";
}

const std::vector<Relation>& all_relations() {
    static const std::vector<Relation> rels = {Relation::hug, Relation::shake, Relation::ride,
                                               Relation::back_to_back};
    return rels;
}

namespace {

// joint indices in the COCO-17 ordering
enum : std::size_t {
    kNose = 0, kLEye, kREye, kLEar, kREar, kLSho, kRSho, kLElb, kRElb,
    kLWri, kRWri, kLHip, kRHip, kLKne, kRKne, kLAnk, kRAnk
};

// base segment lengths at scale 1, in pixels (64px scenes)
constexpr double kTorso = 11.0, kShoW = 7.0, kHipW = 5.0, kHeadOff = 5.0, kHeadR = 3.4;
constexpr double kUpperArm = 6.0, kForeArm = 5.5, kThigh = 7.0, kShin = 6.5;

struct Vec2 {
    double x, y;
};

Vec2 rotate(Vec2 v, double a) {
    return {v.x * std::cos(a) - v.y * std::sin(a), v.x * std::sin(a) + v.y * std::cos(a)};
}

}  // namespace

std::array<std::array<double, 2>, kKeypointCount> StickFigure::joints() const {
    double s = style.scale;
    // torso up direction with lean (y grows downward)
    Vec2 up = rotate({0.0, -1.0}, pose.lean);
    Vec2 side = {-up.y, up.x};  // left-to-right across the body

    Vec2 pelvis{root_x, root_y};
    Vec2 neck{pelvis.x + up.x * kTorso * s, pelvis.y + up.y * kTorso * s};
    Vec2 head{neck.x + up.x * kHeadOff * s, neck.y + up.y * kHeadOff * s};

    auto at = [](Vec2 base, Vec2 dir, double len) {
        return Vec2{base.x + dir.x * len, base.y + dir.y * len};
    };
    // limb direction at `angle` from straight down, swinging outward per side
    auto limb_dir = [&](double angle, int side_sign) {
        Vec2 down = {-up.x, -up.y};
        return rotate(down, side_sign * angle);
    };

    Vec2 lsho = at(neck, side, -kShoW * 0.5 * s), rsho = at(neck, side, kShoW * 0.5 * s);
    Vec2 lhip = at(pelvis, side, -kHipW * 0.5 * s), rhip = at(pelvis, side, kHipW * 0.5 * s);

    Vec2 lelb = at(lsho, limb_dir(pose.shoulder[0], -1), kUpperArm * s);
    Vec2 relb = at(rsho, limb_dir(pose.shoulder[1], 1), kUpperArm * s);
    Vec2 lwri = at(lelb, limb_dir(pose.elbow[0], -1), kForeArm * s);
    Vec2 rwri = at(relb, limb_dir(pose.elbow[1], 1), kForeArm * s);

    Vec2 lkne = at(lhip, limb_dir(pose.hip[0], -1), kThigh * s);
    Vec2 rkne = at(rhip, limb_dir(pose.hip[1], 1), kThigh * s);
    Vec2 lank = at(lkne, limb_dir(pose.knee[0], -1), kShin * s);
    Vec2 rank = at(rkne, limb_dir(pose.knee[1], 1), kShin * s);

    double hr = kHeadR * s;
    std::array<std::array<double, 2>, kKeypointCount> out;
    out[kNose] = {head.x, head.y};
    out[kLEye] = {head.x - side.x * 0.35 * hr + up.x * 0.3 * hr,
                  head.y - side.y * 0.35 * hr + up.y * 0.3 * hr};
    out[kREye] = {head.x + side.x * 0.35 * hr + up.x * 0.3 * hr,
                  head.y + side.y * 0.35 * hr + up.y * 0.3 * hr};
    out[kLEar] = {head.x - side.x * 0.8 * hr, head.y - side.y * 0.8 * hr};
    out[kREar] = {head.x + side.x * 0.8 * hr, head.y + side.y * 0.8 * hr};
    out[kLSho] = {lsho.x, lsho.y};
    out[kRSho] = {rsho.x, rsho.y};
    out[kLElb] = {lelb.x, lelb.y};
    out[kRElb] = {relb.x, relb.y};
    out[kLWri] = {lwri.x, lwri.y};
    out[kRWri] = {rwri.x, rwri.y};
    out[kLHip] = {lhip.x, lhip.y};
    out[kRHip] = {rhip.x, rhip.y};
    out[kLKne] = {lkne.x, lkne.y};
    out[kRKne] = {rkne.x, rkne.y};
    out[kLAnk] = {lank.x, lank.y};
    out[kRAnk] = {rank.x, rank.y};
    return out;
}

StickFigure StickFigure::mirrored(double image_width) const {
    StickFigure m = *this;
    m.root_x = image_width - root_x;
    m.pose.lean = -pose.lean;
    std::swap(m.pose.shoulder[0], m.pose.shoulder[1]);
    std::swap(m.pose.elbow[0], m.pose.elbow[1]);
    std::swap(m.pose.hip[0], m.pose.hip[1]);
    std::swap(m.pose.knee[0], m.pose.knee[1]);
    return m;
}

void render_figure(Image& img, const StickFigure& fig) {
    auto j = fig.joints();
    double s = fig.style.scale;
    double thick = std::max(1.6, 2.2 * s);
    const Color& c = fig.style.color;
    auto seg = [&](std::size_t a, std::size_t b) {
        core::draw_segment(img, j[a][0], j[a][1], j[b][0], j[b][1], thick, c);
    };
    // torso: pelvis midpoint to shoulder midpoint
    core::draw_segment(img, (j[kLHip][0] + j[kRHip][0]) / 2, (j[kLHip][1] + j[kRHip][1]) / 2,
                       (j[kLSho][0] + j[kRSho][0]) / 2, (j[kLSho][1] + j[kRSho][1]) / 2,
                       thick * 1.4, c);
    seg(kLSho, kRSho);
    seg(kLHip, kRHip);
    seg(kLSho, kLElb);
    seg(kLElb, kLWri);
    seg(kRSho, kRElb);
    seg(kRElb, kRWri);
    seg(kLHip, kLKne);
    seg(kLKne, kLAnk);
    seg(kRHip, kRKne);
    seg(kRKne, kRAnk);
    if (fig.style.square_head)
        core::draw_square(img, j[kNose][0], j[kNose][1], kHeadR * s, c);
    else
        core::draw_disc(img, j[kNose][0], j[kNose][1], kHeadR * s, c);
}

std::vector<std::uint8_t> figure_mask(const StickFigure& fig, std::size_t w, std::size_t h) {
    Image scratch(w, h, 0.0);
    StickFigure white = fig;
    white.style.color = {1.0, 1.0, 1.0};
    render_figure(scratch, white);
    std::vector<std::uint8_t> mask(w * h, 0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            if (scratch.at(x, y, 0) > 0.5) mask[y * w + x] = 1;
    return mask;
}

namespace {

const std::array<std::pair<const char*, Color>, 8> kPalette = {{
    {"red", {0.82, 0.18, 0.16}},
    {"blue", {0.16, 0.32, 0.80}},
    {"green", {0.12, 0.62, 0.28}},
    {"orange", {0.92, 0.54, 0.10}},
    {"purple", {0.55, 0.22, 0.72}},
    {"teal", {0.10, 0.62, 0.62}},
    {"magenta", {0.82, 0.18, 0.62}},
    {"olive", {0.52, 0.55, 0.14}},
}};

FigureStyle pick_style(Rng& rng, int avoid_palette_index, int* chosen) {
    int idx;
    do {
        idx = static_cast<int>(rng.uniform_index(kPalette.size()));
    } while (idx == avoid_palette_index);
    FigureStyle st;
    st.color = kPalette[idx].second;
    st.color_name = kPalette[idx].first;
    st.square_head = rng.uniform() < 0.5;
    st.scale = 0.95 + 0.15 * rng.uniform();
    if (chosen) *chosen = idx;
    return st;
}

FigurePose neutral_pose(Rng& rng) {
    FigurePose p;
    p.lean = (rng.uniform() - 0.5) * 0.08;
    for (int a = 0; a < 2; ++a) {
        p.shoulder[a] = 0.22 + 0.12 * rng.uniform();
        p.elbow[a] = 0.15 + 0.1 * rng.uniform();
        p.hip[a] = 0.14 + 0.08 * rng.uniform();
        p.knee[a] = 0.08 + 0.08 * rng.uniform();
    }
    return p;
}

double jit(Rng& rng, double amp) { return (rng.uniform() - 0.5) * 2.0 * amp; }

std::string relation_phrase(Relation r) {
    switch (r) {
        case Relation::hug: return "hugging";
        case Relation::shake: return "shaking hands with";
        case Relation::ride: return "riding on";
        case Relation::back_to_back: return "sitting back to back with";
    }
    return "";
}

}  // namespace

SyntheticScene synthesize_scene(Relation relation, std::uint64_t seed, std::size_t image_size) {
    core::require(image_size >= 48, "synthetic: image size too small for two figures");
    double W = static_cast<double>(image_size);
    double cx = W / 2.0;
    Rng rng(core::derive_seed(seed, std::string("scene/") + to_string(relation)));

    int first_idx = -1;
    FigureStyle style_a = pick_style(rng, -1, &first_idx);
    FigureStyle style_b = pick_style(rng, first_idx, nullptr);

    StickFigure a, b;
    a.style = style_a;
    b.style = style_b;
    a.pose = neutral_pose(rng);
    b.pose = neutral_pose(rng);
    double base_y = W * 0.68 + jit(rng, 1.5);

    switch (relation) {
        case Relation::hug: {
            a.root_x = cx - W * 0.13 + jit(rng, 1.0);
            b.root_x = cx + W * 0.13 + jit(rng, 1.0);
            a.root_y = b.root_y = base_y;
            a.pose.lean = 0.16 + jit(rng, 0.03);   // toward each other
            b.pose.lean = -0.16 + jit(rng, 0.03);
            a.pose.shoulder[1] = 1.75 + jit(rng, 0.08);  // inner arms cross
            a.pose.elbow[1] = 1.55 + jit(rng, 0.08);
            b.pose.shoulder[0] = 1.75 + jit(rng, 0.08);
            b.pose.elbow[0] = 1.55 + jit(rng, 0.08);
            break;
        }
        case Relation::shake: {
            a.root_x = cx - W * 0.17 + jit(rng, 1.0);
            b.root_x = cx + W * 0.17 + jit(rng, 1.0);
            a.root_y = b.root_y = base_y;
            a.pose.shoulder[1] = 1.45 + jit(rng, 0.05);  // extended inner arms
            a.pose.elbow[1] = 1.5 + jit(rng, 0.05);
            b.pose.shoulder[0] = 1.45 + jit(rng, 0.05);
            b.pose.elbow[0] = 1.5 + jit(rng, 0.05);
            break;
        }
        case Relation::ride: {
            b.style.scale *= 1.1;  // carrier
            b.root_x = cx + jit(rng, 1.0);
            b.root_y = base_y + 2.0;
            b.pose.shoulder = {0.9 + jit(rng, 0.05), 0.9 + jit(rng, 0.05)};  // holding up
            b.pose.elbow = {2.2 + jit(rng, 0.05), 2.2 + jit(rng, 0.05)};
            a.style.scale *= 0.75;  // rider, perched at the carrier's neck
            a.root_x = b.root_x + jit(rng, 0.8);
            a.root_y = b.root_y - 13.5 * b.style.scale;
            a.pose.hip = {1.25 + jit(rng, 0.05), 1.25 + jit(rng, 0.05)};  // straddle
            a.pose.knee = {0.4 + jit(rng, 0.05), 0.4 + jit(rng, 0.05)};
            break;
        }
        case Relation::back_to_back: {
            a.root_x = cx - W * 0.105;
            a.root_y = base_y;
            a.pose.lean = -0.14 + jit(rng, 0.02);  // leaning back into the partner
            a.pose.shoulder = {0.55 + jit(rng, 0.04), 0.55 + jit(rng, 0.04)};
            a.pose.elbow = {0.1, 0.1};
            a.pose.hip = {0.9 + jit(rng, 0.04), 0.9 + jit(rng, 0.04)};  // seated
            a.pose.knee = {0.2, 0.2};
            // exact mirror about the scene centre: spine joints come out
            // mirror-symmetric by construction (the mirrored figure keeps the
            // same scale, only color and head shape differ)
            b = a.mirrored(W);
            b.style = style_b;
            b.style.scale = a.style.scale;
            break;
        }
    }

    SyntheticScene scene;
    scene.relation = relation;
    scene.figures = {a, b};
    scene.image = Image(image_size, image_size, 0.88);

    render_figure(scene.image, a);
    render_figure(scene.image, b);

    auto mask_a = figure_mask(a, image_size, image_size);
    auto mask_b = figure_mask(b, image_size, image_size);
    scene.masks.push_back(train::Mask::encode(mask_a, image_size, image_size));
    scene.masks.push_back(train::Mask::encode(mask_b, image_size, image_size));

    // keypoints: figure b is drawn last, so its joints occlude figure a's
    for (std::size_t f = 0; f < 2; ++f) {
        auto joints = scene.figures[f].joints();
        KeypointSet set;
        for (std::size_t k = 0; k < kKeypointCount; ++k) {
            double x = joints[k][0], y = joints[k][1];
            bool in_bounds = x >= 0.0 && y >= 0.0 && x <= W - 1.0 && y <= W - 1.0;
            bool occluded = false;
            if (f == 0 && in_bounds) {
                std::size_t px = static_cast<std::size_t>(std::lround(x));
                std::size_t py = static_cast<std::size_t>(std::lround(y));
                occluded = mask_b[py * image_size + px] != 0;
            }
            set[k].x = std::clamp(x, 0.0, W - 1.0);
            set[k].y = std::clamp(y, 0.0, W - 1.0);
            set[k].visible = in_bounds && !occluded;
        }
        scene.keypoints.push_back(set);
    }

    // boxes from the mask extents, normalized
    auto box_of = [&](const std::vector<std::uint8_t>& mask) {
        std::size_t x0 = image_size, y0 = image_size, x1 = 0, y1 = 0;
        for (std::size_t y = 0; y < image_size; ++y)
            for (std::size_t x = 0; x < image_size; ++x)
                if (mask[y * image_size + x]) {
                    x0 = std::min(x0, x);
                    y0 = std::min(y0, y);
                    x1 = std::max(x1, x);
                    y1 = std::max(y1, y);
                }
        core::require(x1 > x0 && y1 > y0, "synthetic: figure rendered off-screen");
        idext::Box b{static_cast<double>(x0) / W, static_cast<double>(y0) / W,
                     static_cast<double>(x1 + 1) / W, static_cast<double>(y1 + 1) / W};
        b.validate();
        return b;
    };
    scene.boxes.push_back(box_of(mask_a));
    scene.boxes.push_back(box_of(mask_b));

    for (const auto& fig : scene.figures)
        scene.captions.push_back("a " + fig.style.color_name + " figure with a " +
                                 (fig.style.square_head ? "square" : "round") + " head");
    scene.text = "a " + a.style.color_name + " figure is " + relation_phrase(relation) + " a " +
                 b.style.color_name + " figure";
    return scene;
}

Image render_prompt_image(const StickFigure& fig, std::size_t image_size,
                          train::KeypointSet* keypoints_out) {
    Image img(image_size, image_size, 0.88);
    StickFigure centered = fig;
    centered.root_x = static_cast<double>(image_size) / 2.0;
    centered.root_y = static_cast<double>(image_size) * 0.66;
    render_figure(img, centered);
    if (keypoints_out) {
        auto joints = centered.joints();
        double W = static_cast<double>(image_size);
        for (std::size_t k = 0; k < kKeypointCount; ++k) {
            double x = joints[k][0], y = joints[k][1];
            bool in_bounds = x >= 0.0 && y >= 0.0 && x <= W - 1.0 && y <= W - 1.0;
            (*keypoints_out)[k] = {std::clamp(x, 0.0, W - 1.0), std::clamp(y, 0.0, W - 1.0),
                                   in_bounds};
        }
    }
    return img;
}

train::Triplet synthesize_triplet(Relation relation, std::uint64_t seed, std::size_t image_size) {
    SyntheticScene scene = synthesize_scene(relation, seed, image_size);
    Rng rng(core::derive_seed(seed, "prompt_pose"));

    train::Triplet t;
    t.target = scene.image;
    t.text = scene.text;
    t.kp_target = scene.keypoints;
    t.boxes = scene.boxes;
    t.masks = scene.masks;
    t.captions.push_back(scene.text);
    for (std::size_t f = 0; f < scene.figures.size(); ++f) {
        StickFigure neutral = scene.figures[f];
        neutral.pose = neutral_pose(rng);
        KeypointSet kp;
        t.prompts.push_back(render_prompt_image(neutral, image_size, &kp));
        t.kp_prompts.push_back(kp);
        t.captions.push_back(scene.captions[f]);
    }
    train::validate_triplet(t);
    return t;
}

std::vector<train::Triplet> make_training_set(const std::vector<Relation>& relations,
                                              std::size_t per_relation, std::uint64_t base_seed,
                                              std::size_t image_size) {
    std::vector<train::Triplet> out;
    for (Relation r : relations)
        for (std::size_t i = 0; i < per_relation; ++i)
            out.push_back(synthesize_triplet(r, core::derive_seed(base_seed, std::string(
                                                     to_string(r)) + "/" + std::to_string(i)),
                                             image_size));
    return out;
}

Image render_reference_image(const std::string& object_name, std::size_t image_size) {
    Rng rng(core::fnv1a64("ref/" + object_name));
    StickFigure fig;
    int idx = -1;
    fig.style = pick_style(rng, -1, &idx);
    fig.pose = neutral_pose(rng);
    return render_prompt_image(fig, image_size, nullptr);
}

}  // namespace relgen::data

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "idext/id_extractor.hpp"

namespace relgen::train {

using core::Image;

inline constexpr std::size_t kKeypointCount = 17;

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    bool visible = true;
};

using KeypointSet = std::array<Keypoint, kKeypointCount>;

// Run-length encoded binary mask, row-major, runs alternating 0/1 starting
// with a zero run.
struct Mask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::size_t> runs;

    static Mask encode(const std::vector<std::uint8_t>& bits, std::size_t w, std::size_t h);
    std::vector<std::uint8_t> decode() const;
};

// One training sample: target image x, image prompts c_i, text prompt c_t,
// keypoints on both sides, per-object boxes, per-image captions, optional
// per-object masks.
struct Triplet {
    Image target;
    std::vector<Image> prompts;              // one object per prompt image
    std::string text;
    std::vector<KeypointSet> kp_target;      // per object, pixels on target
    std::vector<KeypointSet> kp_prompts;     // per object, pixels on prompt j
    std::vector<idext::Box> boxes;           // per object, normalized, target
    std::vector<std::string> captions;       // [target, prompt 0, prompt 1, ...]
    std::vector<Mask> masks;                 // optional, per object

    std::size_t object_count() const { return prompts.size(); }
};

// Shared validator: checks every Triplet invariant and throws with the
// offending object index on failure.
void validate_triplet(const Triplet& t);

// Manifest I/O. Images are stored next to the manifest and referenced by
// relative path. Layout:
//   {"target": "...", "prompts": [...], "text": "...",
//    "keypoints": {"target": [[[x,y,v] x17] per object],
//                  "prompts": [[[x,y,v] x17] per object]},
//    "boxes": [[x0,y0,x1,y1] per object],
//    "captions": [...], "masks": [{"w":..,"h":..,"runs":[...]}]? }
void save_triplet_manifest(const Triplet& t, const std::string& dir, const std::string& stem);
Triplet load_triplet_manifest(const std::string& manifest_path);

// Dataset index: {"triplets": ["rel/path/triplet.json", ...]}
std::vector<Triplet> load_dataset(const std::string& index_path);
void save_dataset_index(const std::vector<std::string>& manifest_paths,
                        const std::string& index_path);

}  // namespace relgen::train

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "train/model.hpp"

namespace relgen::gen {

using core::Image;
using train::Model;

struct SubjectRef {
    std::string ref_image_path;  // as given in the manifest
    Image ref_image;
    std::string class_noun;
    idext::Box box;
};

struct GenerationRequest {
    std::string text_prompt;
    std::vector<SubjectRef> subjects;  // 1..2
    std::string adapter_archive;       // empty -> base model
    std::uint64_t seed = 0;
    std::size_t num_steps = 30;
    std::optional<double> gamma;

    void validate() const;
};

struct GenerationResult {
    Image image;
    std::string metadata_json;  // resolved hyperparameters, ordered keys
};

// Ancestral sampling over a subsampled timestep grid with the request's
// conditions. Deterministic given the seed; with no adapters and gamma = 0
// the output depends only on the text prompt.
GenerationResult generate(Model& model, const GenerationRequest& req);

// Request manifest: {"requests": [{"text_prompt":…, "subjects":[{"ref_image":…,
// "class":…, "box":[x0,y0,x1,y1]}], "seed":…, "num_steps":…, "gamma":…}]}
// Relative ref_image paths resolve against the manifest's directory.
std::vector<GenerationRequest> load_request_manifest(const std::string& path);

struct GridReport {
    Image grid;
    std::string sidecar_json;
};

// Tiled comparison grid (row-major, near-square) with prompt captions under
// each tile; the sidecar embeds the requests so it round-trips through the
// request-manifest parser.
GridReport grid_report(const std::vector<GenerationRequest>& requests,
                       const std::vector<Image>& outputs);

}  // namespace relgen::gen

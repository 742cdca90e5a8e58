// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "data/pipeline.hpp"
#include "localenc/local_encoder.hpp"
#include "train/trainer.hpp"

namespace relgen::cli {

// Layered run configuration: built-in defaults, overridden by a JSON config
// file, overridden by command-line flags. Unknown keys are rejected. The
// resolved hash of the effective configuration is embedded into every run
// artifact.
struct RunConfig {
    train::ModelConfig model;
    train::TrainConfig train;
    struct Generate {
        std::size_t num_steps = 30;
        std::uint64_t seed = 0;
    } generate;
    localenc::DistillConfig distill;
    struct Data {
        std::vector<std::string> relations = {"hug", "shake", "ride", "back_to_back"};
        std::size_t per_relation = 5;
        std::uint64_t seed = 7;
    } data;

    // canonical serialisation of the effective configuration (fixed key order)
    std::string canonical_json() const;
    std::string resolved_hash() const;  // 16 hex digits

    static RunConfig defaults() { return RunConfig{}; }
    static RunConfig from_file(const std::string& path);

    // merge a JSON document over the current values; rejects unknown keys
    void apply_json_text(const std::string& text, const std::string& origin);
};

}  // namespace relgen::cli

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core/backend.hpp"
#include "idext/id_extractor.hpp"

namespace relgen::eval {

using core::EmbeddingBackend;
using core::Image;

// 100 * cosine(image embedding, text embedding of the full prompt).
double clip_t(const Image& image, const std::string& prompt, const EmbeddingBackend& backend);

// Same score on the extracted predicate only; equals
// clip_t(image, extract_predicate(prompt)) by construction.
double clip_r(const Image& image, const std::string& prompt, const EmbeddingBackend& backend);

struct SubjectImages {
    std::vector<Image> references;       // >= 1
    std::optional<idext::Box> box;       // crop region in the generated image
};

struct IdentityScores {
    double clip_i = 0.0;
    double dino = 0.0;
};

// Per subject: crop the generated image to the subject box (when known and
// crop mode is on), embed, then average cosine against the references.
// Multi-subject scores are the subject means, x100.
IdentityScores identity_scores(const Image& generated, const std::vector<SubjectImages>& subjects,
                               const EmbeddingBackend& backend_joint,
                               const EmbeddingBackend& backend_vision, bool crop_to_box = true);

struct BenchSubject {
    std::string ref_image;  // path, relative to the manifest
    std::string class_noun;
};

struct BenchCase {
    std::string case_id;
    std::vector<BenchSubject> subjects;  // 1..2
    std::string prompt;                  // instantiated with the class nouns
    std::string predicate_gold;
    std::vector<std::string> tags;       // e.g. "single" / "multi", category
};

struct BenchManifest {
    std::vector<std::string> objects;    // object vocabulary
    std::vector<std::string> templates;  // prompt templates with "{ }" slots
    std::vector<BenchCase> cases;
};

BenchManifest load_bench_manifest(const std::string& path);
void validate_bench_case(const BenchCase& c);

struct CaseScore {
    std::string case_id;
    bool failed = false;       // missing output, or scoring rejected the case
    std::string failure_note;  // deterministic reason, recorded in the report
    double clip_t = 0.0, clip_r = 0.0, clip_i = 0.0, dino = 0.0;
};

struct MetricReport {
    std::vector<CaseScore> cases;  // sorted by case_id
    std::map<std::string, double> aggregates;  // mean per metric, x100-scale, 1 decimal
    std::map<std::string, std::map<std::string, double>> aggregates_by_tag;  // single/multi
    std::size_t failed_cases = 0;
    std::string backend_joint, backend_vision;
    std::string config_hash;

    std::string to_json() const;   // byte-stable: ordered keys, fixed formatting
    std::string to_table() const;  // aligned plain-text table
};

struct BenchmarkOptions {
    bool crop_to_box = true;
    std::string config_hash = "0";
};

// Scores every case against "<outputs_dir>/<case_id>.ppm". Missing outputs
// mark the case failed and excluded from aggregates.
MetricReport run_benchmark(const BenchManifest& manifest, const std::string& manifest_dir,
                           const std::string& outputs_dir,
                           const EmbeddingBackend& backend_joint,
                           const EmbeddingBackend& backend_vision,
                           const BenchmarkOptions& opts = {});

}  // namespace relgen::eval

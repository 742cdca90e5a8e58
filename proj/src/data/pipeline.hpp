// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "data/synthetic.hpp"
#include "train/triplet.hpp"

namespace relgen::data {

// Session-oriented generative-image client: one relation image per session,
// identity carry-over through follow-up prompts within the session.
class GenerativeClient {
public:
    virtual ~GenerativeClient() = default;

    virtual Image open_session(const std::string& prompt) = 0;
    virtual Image follow_up(const std::string& prompt) = 0;
};

// The identity carry-over phrase used for follow-up prompts.
inline constexpr const char* kSameIdentityPhrase = "The photo of the same.";

// Offline client: sessions render synthetic scenes, follow-ups return the
// scene's figures in neutral pose, in order. Deterministic per (seed, prompt
// sequence). Exposes the exact annotations of the last session, standing in
// for the keypoint/mask/caption annotators.
class MockClient : public GenerativeClient {
public:
    explicit MockClient(std::uint64_t seed, std::size_t image_size = 64);

    Image open_session(const std::string& prompt) override;
    Image follow_up(const std::string& prompt) override;

    // annotations of the current session's scene and prompt images
    const train::Triplet& last_full_triplet() const;

    // test hook: fail the next n calls with a runtime error
    void fail_next(std::size_t n) { fail_next_ = n; }

private:
    void maybe_fail();

    std::uint64_t seed_;
    std::size_t image_size_;
    std::size_t session_counter_ = 0;
    std::size_t follow_up_counter_ = 0;
    std::size_t fail_next_ = 0;
    train::Triplet current_;
    bool has_session_ = false;
};

struct RetryPolicy {
    std::size_t attempts = 3;
    std::size_t base_delay_ms = 250;  // doubled per retry; 0 in tests
};

// Raw images staged for annotation: no keypoints/boxes yet.
struct StagedTriplet {
    Image target;
    std::vector<Image> prompts;
    std::string text;
};

// One target from the relation prompt, then one follow-up per identity
// prompt. Client failures are retried with exponential backoff, then fail the
// triplet.
StagedTriplet build_triplet(GenerativeClient& client, const std::string& relation_prompt,
                            const std::vector<std::string>& identity_prompts,
                            const RetryPolicy& retry = {});

// Annotation file contents (one file per image):
//   keypoints: {"objects": [[[x, y, v] x17], ...]}
//   masks:     {"objects": [{"w":., "h":., "runs": [...]}]}
//   captions:  {"caption": "..."}
void write_keypoint_file(const std::vector<train::KeypointSet>& objects, const std::string& path);
void write_mask_file(const std::vector<train::Mask>& objects, const std::string& path);
void write_caption_file(const std::string& caption, const std::string& path);

std::vector<train::KeypointSet> read_keypoint_file(const std::string& path);
std::vector<train::Mask> read_mask_file(const std::string& path);
std::string read_caption_file(const std::string& path);

// Validated Triplet from staged images plus annotation files. Keypoint files:
// one for the target (all objects), one per prompt image (its object).
// Boxes are derived from the target masks.
train::Triplet ingest_annotations(const StagedTriplet& staged,
                                  const std::vector<std::string>& keypoint_files,
                                  const std::vector<std::string>& mask_files,
                                  const std::vector<std::string>& caption_files);

struct DataBuildRequest {
    std::vector<Relation> relations = all_relations();
    std::size_t per_relation = 5;
    std::uint64_t seed = 7;
    std::size_t image_size = 64;
    std::string out_dir;
};

struct DataBuildReport {
    std::vector<std::string> triplet_manifests;
    std::string index_path;
};

// Mock-client data engine run: stages images, writes annotation files, runs
// ingestion, writes per-triplet manifests plus a dataset index.
DataBuildReport build_dataset_with_mock(const DataBuildRequest& req);

}  // namespace relgen::data

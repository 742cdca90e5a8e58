// SPDX-License-Identifier: Apache-2.0
#include "data/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "core/rng.hpp"

namespace relgen::data {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

MockClient::MockClient(std::uint64_t seed, std::size_t image_size)
    : seed_(seed), image_size_(image_size) {}

void MockClient::maybe_fail() {
    if (fail_next_ > 0) {
        --fail_next_;
        core::fail_runtime("mock client: injected transient failure");
    }
}

Image MockClient::open_session(const std::string& prompt) {
    maybe_fail();
    // relation keyword decides the scene layout
    Relation rel = Relation::hug;
    for (Relation r : all_relations()) {
        std::string phrase = to_string(r);
        std::string text = prompt;
        for (auto& ch : text)
            if (ch == '-' || ch == ' ') ch = '_';
        if (text.find(phrase) != std::string::npos) {
            rel = r;
            break;
        }
    }
    std::uint64_t scene_seed = core::derive_seed(seed_, "session/" + std::to_string(session_counter_));
    ++session_counter_;
    follow_up_counter_ = 0;
    current_ = synthesize_triplet(rel, scene_seed, image_size_);
    has_session_ = true;
    return current_.target;
}

Image MockClient::follow_up(const std::string& prompt) {
    maybe_fail();
    core::require(has_session_, "mock client: follow_up without an open session");
    core::require(prompt.find(kSameIdentityPhrase) != std::string::npos,
                  "mock client: follow-up prompts must carry the identity phrase");
    core::require(follow_up_counter_ < current_.prompts.size(),
                  "mock client: no more identities in this session");
    return current_.prompts[follow_up_counter_++];
}

const train::Triplet& MockClient::last_full_triplet() const {
    core::require(has_session_, "mock client: no session yet");
    return current_;
}

StagedTriplet build_triplet(GenerativeClient& client, const std::string& relation_prompt,
                            const std::vector<std::string>& identity_prompts,
                            const RetryPolicy& retry) {
    core::require(!identity_prompts.empty(), "build_triplet: need at least one identity prompt");
    auto with_retry = [&](const std::function<Image()>& call) {
        std::size_t delay = retry.base_delay_ms;
        for (std::size_t attempt = 0;; ++attempt) {
            try {
                return call();
            } catch (const std::exception& e) {
                if (attempt + 1 >= retry.attempts)
                    core::fail_runtime(std::string("build_triplet: client failed after ") +
                                       std::to_string(retry.attempts) + " attempts: " + e.what());
                if (delay > 0)
                    std::this_thread::sleep_for(std::chrono::milliseconds(delay));
                delay *= 2;
            }
        }
    };

    StagedTriplet staged;
    staged.text = relation_prompt;
    staged.target = with_retry([&] { return client.open_session(relation_prompt); });
    for (const auto& ip : identity_prompts)
        staged.prompts.push_back(with_retry([&] { return client.follow_up(ip); }));
    return staged;
}

// ---------------------------------------------------------------------------

void write_keypoint_file(const std::vector<train::KeypointSet>& objects, const std::string& path) {
    ordered_json j;
    ordered_json objs = ordered_json::array();
    for (const auto& set : objects) {
        ordered_json rows = ordered_json::array();
        for (const auto& p : set) rows.push_back({p.x, p.y, p.visible ? 1 : 0});
        objs.push_back(rows);
    }
    j["objects"] = objs;
    std::ofstream out(path);
    core::require(out.good(), "annotations: cannot write " + path);
    out << j.dump(2) << "\n";
}

std::vector<train::KeypointSet> read_keypoint_file(const std::string& path) {
    std::ifstream in(path);
    core::require(in.good(), "annotations: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        core::fail_invalid("annotations: bad JSON in " + path + ": " + e.what());
    }
    std::vector<train::KeypointSet> out;
    const auto& objs = j.at("objects");
    for (std::size_t o = 0; o < objs.size(); ++o) {
        const auto& rows = objs.at(o);
        core::require(rows.size() == train::kKeypointCount,
                      "annotations: object " + std::to_string(o) + " in " + path + " has " +
                          std::to_string(rows.size()) + " keypoints, expected 17");
        train::KeypointSet set;
        for (std::size_t k = 0; k < train::kKeypointCount; ++k) {
            const auto& r = rows.at(k);
            core::require(r.size() == 3, "annotations: keypoint rows are [x, y, v]");
            set[k] = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>() != 0.0};
        }
        out.push_back(set);
    }
    return out;
}

void write_mask_file(const std::vector<train::Mask>& objects, const std::string& path) {
    ordered_json j;
    ordered_json objs = ordered_json::array();
    for (const auto& m : objects)
        objs.push_back({{"w", m.width}, {"h", m.height}, {"runs", m.runs}});
    j["objects"] = objs;
    std::ofstream out(path);
    core::require(out.good(), "annotations: cannot write " + path);
    out << j.dump() << "\n";
}

std::vector<train::Mask> read_mask_file(const std::string& path) {
    std::ifstream in(path);
    core::require(in.good(), "annotations: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        core::fail_invalid("annotations: bad JSON in " + path + ": " + e.what());
    }
    std::vector<train::Mask> out;
    for (const auto& m : j.at("objects")) {
        train::Mask mask;
        mask.width = m.at("w").get<std::size_t>();
        mask.height = m.at("h").get<std::size_t>();
        mask.runs = m.at("runs").get<std::vector<std::size_t>>();
        mask.decode();
        out.push_back(std::move(mask));
    }
    return out;
}

void write_caption_file(const std::string& caption, const std::string& path) {
    ordered_json j;
    j["caption"] = caption;
    std::ofstream out(path);
    core::require(out.good(), "annotations: cannot write " + path);
    out << j.dump() << "\n";
}

std::string read_caption_file(const std::string& path) {
    std::ifstream in(path);
    core::require(in.good(), "annotations: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        core::fail_invalid("annotations: bad JSON in " + path + ": " + e.what());
    }
    return j.at("caption").get<std::string>();
}

train::Triplet ingest_annotations(const StagedTriplet& staged,
                                  const std::vector<std::string>& keypoint_files,
                                  const std::vector<std::string>& mask_files,
                                  const std::vector<std::string>& caption_files) {
    std::size_t n = staged.prompts.size();
    core::require(keypoint_files.size() == 1 + n,
                  "ingest: expected one keypoint file for the target plus one per prompt");
    core::require(mask_files.size() == 1, "ingest: expected one mask file (target objects)");
    core::require(caption_files.size() == 1 + n, "ingest: expected one caption file per image");

    train::Triplet t;
    t.target = staged.target;
    t.prompts = staged.prompts;
    t.text = staged.text;

    t.kp_target = read_keypoint_file(keypoint_files[0]);
    core::require(t.kp_target.size() == n,
                  "ingest: target keypoint file must annotate one object per prompt image (got " +
                      std::to_string(t.kp_target.size()) + ")");
    for (std::size_t j = 0; j < n; ++j) {
        auto sets = read_keypoint_file(keypoint_files[1 + j]);
        core::require(sets.size() == 1, "ingest: prompt keypoint file " + std::to_string(j) +
                                            " must annotate exactly one object");
        t.kp_prompts.push_back(sets[0]);
    }

    t.masks = read_mask_file(mask_files[0]);
    core::require(t.masks.size() == n, "ingest: mask count must match object count");

    // boxes from the target masks
    for (std::size_t j = 0; j < n; ++j) {
        const train::Mask& m = t.masks[j];
        auto bits = m.decode();
        std::size_t x0 = m.width, y0 = m.height, x1 = 0, y1 = 0;
        for (std::size_t y = 0; y < m.height; ++y)
            for (std::size_t x = 0; x < m.width; ++x)
                if (bits[y * m.width + x]) {
                    x0 = std::min(x0, x);
                    y0 = std::min(y0, y);
                    x1 = std::max(x1, x);
                    y1 = std::max(y1, y);
                }
        core::require(x1 > x0 && y1 > y0,
                      "ingest: empty mask for object " + std::to_string(j));
        t.boxes.push_back({static_cast<double>(x0) / m.width, static_cast<double>(y0) / m.height,
                           static_cast<double>(x1 + 1) / m.width,
                           static_cast<double>(y1 + 1) / m.height});
    }

    for (const auto& cf : caption_files) t.captions.push_back(read_caption_file(cf));

    train::validate_triplet(t);
    return t;
}

DataBuildReport build_dataset_with_mock(const DataBuildRequest& req) {
    core::require(!req.out_dir.empty(), "data build: out_dir required");
    core::require(req.per_relation >= 1, "data build: per_relation must be >= 1");
    fs::create_directories(req.out_dir);

    MockClient client(req.seed, req.image_size);
    DataBuildReport report;
    for (Relation rel : req.relations) {
        for (std::size_t i = 0; i < req.per_relation; ++i) {
            std::string stem = std::string(to_string(rel)) + "_" + std::to_string(i);
            fs::path dir = fs::path(req.out_dir) / stem;
            fs::create_directories(dir);

            std::string relation_prompt =
                "two figures, one " + std::string(to_string(rel)) + " scene";
            std::vector<std::string> identity_prompts = {
                std::string(kSameIdentityPhrase) + " (first figure)",
                std::string(kSameIdentityPhrase) + " (second figure)"};
            StagedTriplet staged = build_triplet(client, relation_prompt, identity_prompts);
            const train::Triplet& annotated = client.last_full_triplet();
            staged.text = annotated.text;  // the mock's scene caption carries the relation

            // stage annotation files, then run the real ingestion path
            std::vector<std::string> kp_files = {(dir / "target.kp.json").string()};
            write_keypoint_file(annotated.kp_target, kp_files[0]);
            for (std::size_t j = 0; j < staged.prompts.size(); ++j) {
                kp_files.push_back((dir / ("prompt" + std::to_string(j) + ".kp.json")).string());
                write_keypoint_file({annotated.kp_prompts[j]}, kp_files.back());
            }
            std::vector<std::string> mask_files = {(dir / "target.masks.json").string()};
            write_mask_file(annotated.masks, mask_files[0]);
            std::vector<std::string> caption_files;
            for (std::size_t j = 0; j < annotated.captions.size(); ++j) {
                caption_files.push_back(
                    (dir / ("caption" + std::to_string(j) + ".json")).string());
                write_caption_file(annotated.captions[j], caption_files.back());
            }

            train::Triplet t = ingest_annotations(staged, kp_files, mask_files, caption_files);
            train::save_triplet_manifest(t, dir.string(), "triplet");
            report.triplet_manifests.push_back((fs::path(stem) / "triplet.json").string());
        }
    }
    report.index_path = (fs::path(req.out_dir) / "dataset.json").string();
    train::save_dataset_index(report.triplet_manifests, report.index_path);
    return report;
}

}  // namespace relgen::data

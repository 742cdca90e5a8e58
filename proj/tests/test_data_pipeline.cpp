// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "data/pipeline.hpp"

using namespace relgen;
using namespace relgen::data;

TEST_CASE("synthesize_scene: determinism and triplet invariants") {
    auto a = synthesize_scene(Relation::hug, 5);
    auto b = synthesize_scene(Relation::hug, 5);
    CHECK(a.image.max_abs_diff(b.image) == 0.0);
    CHECK(a.text == b.text);

    auto c = synthesize_scene(Relation::hug, 6);
    CHECK(a.image.max_abs_diff(c.image) > 0.0);

    for (auto rel : all_relations()) {
        auto t = synthesize_triplet(rel, 17);
        train::validate_triplet(t);  // the shared validator
        CHECK(t.object_count() == 2);
        CHECK(t.prompts.size() == 2);
        CHECK(t.masks.size() == 2);
    }
}

TEST_CASE("back-to-back scenes have mirror-symmetric spines about the centre") {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        auto scene = synthesize_scene(Relation::back_to_back, seed);
        double W = static_cast<double>(scene.image.width);
        auto ja = scene.figures[0].joints();
        auto jb = scene.figures[1].joints();
        // spine endpoints: shoulder midpoint and hip midpoint
        auto mid = [](const std::array<double, 2>& l, const std::array<double, 2>& r) {
            return std::array<double, 2>{(l[0] + r[0]) / 2, (l[1] + r[1]) / 2};
        };
        auto sa = mid(ja[5], ja[6]), sb = mid(jb[5], jb[6]);
        auto ha = mid(ja[11], ja[12]), hb = mid(jb[11], jb[12]);
        CHECK(sb[0] == doctest::Approx(W - sa[0]).epsilon(1e-9));
        CHECK(sb[1] == doctest::Approx(sa[1]).epsilon(1e-9));
        CHECK(hb[0] == doctest::Approx(W - ha[0]).epsilon(1e-9));
        CHECK(hb[1] == doctest::Approx(ha[1]).epsilon(1e-9));
    }
}

TEST_CASE("rendered joints land within one pixel of the emitted keypoints") {
    // render-vs-annotation self-consistency over seeds and relations
    for (auto rel : all_relations()) {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            auto scene = synthesize_scene(rel, 1000 + seed);
            for (std::size_t f = 0; f < 2; ++f) {
                const auto& color = scene.figures[f].style.color;
                const auto& kps = scene.keypoints[f];
                for (std::size_t k = 0; k < train::kKeypointCount; ++k) {
                    if (!kps[k].visible) continue;
                    long cx = std::lround(kps[k].x), cy = std::lround(kps[k].y);
                    bool hit = false;
                    for (long dy = -1; dy <= 1 && !hit; ++dy)
                        for (long dx = -1; dx <= 1 && !hit; ++dx) {
                            long x = cx + dx, y = cy + dy;
                            if (!scene.image.in_bounds(x, y)) continue;
                            double d = 0.0;
                            for (std::size_t c = 0; c < 3; ++c)
                                d += std::fabs(scene.image.at(static_cast<std::size_t>(x),
                                                              static_cast<std::size_t>(y), c) -
                                               color[c]);
                            if (d < 1e-9) hit = true;
                        }
                    CHECK(hit);
                }
            }
        }
    }
}

TEST_CASE("mock client: determinism, identity phrase, session cardinality") {
    MockClient c1(9), c2(9);
    auto t1 = build_triplet(c1, "two figures, one hug scene",
                            {std::string(kSameIdentityPhrase) + " (first)",
                             std::string(kSameIdentityPhrase) + " (second)"});
    auto t2 = build_triplet(c2, "two figures, one hug scene",
                            {std::string(kSameIdentityPhrase) + " (first)",
                             std::string(kSameIdentityPhrase) + " (second)"});
    CHECK(t1.target.max_abs_diff(t2.target) == 0.0);
    CHECK(t1.prompts.size() == 2);  // 3 images staged: 1 target + 2 prompts
    CHECK(t1.prompts[0].max_abs_diff(t2.prompts[0]) == 0.0);
    CHECK(t1.prompts[1].max_abs_diff(t2.prompts[1]) == 0.0);

    // follow-ups demand the identity carry-over phrase
    MockClient c3(9);
    c3.open_session("a hug scene");
    CHECK_THROWS_AS(c3.follow_up("another unrelated prompt"), core::Error);
}

TEST_CASE("build_triplet: retries transient failures, then fails the triplet") {
    MockClient flaky(4);
    flaky.fail_next(2);  // first two calls fail, third succeeds
    RetryPolicy retry;
    retry.attempts = 3;
    retry.base_delay_ms = 0;
    auto staged = build_triplet(flaky, "a shake scene", {kSameIdentityPhrase}, retry);
    CHECK(staged.target.width > 0);

    MockClient dead(4);
    dead.fail_next(100);
    CHECK_THROWS_AS(build_triplet(dead, "a shake scene", {kSameIdentityPhrase}, retry),
                    core::Error);
}

TEST_CASE("annotation files: round trip and ingestion errors") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "relgen_ingest_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    auto full = synthesize_triplet(Relation::ride, 33);
    StagedTriplet staged{full.target, full.prompts, full.text};

    // stage the annotation files
    std::vector<std::string> kp_files = {(dir / "t.kp.json").string(),
                                         (dir / "p0.kp.json").string(),
                                         (dir / "p1.kp.json").string()};
    write_keypoint_file(full.kp_target, kp_files[0]);
    write_keypoint_file({full.kp_prompts[0]}, kp_files[1]);
    write_keypoint_file({full.kp_prompts[1]}, kp_files[2]);
    std::vector<std::string> mask_files = {(dir / "t.masks.json").string()};
    write_mask_file(full.masks, mask_files[0]);
    std::vector<std::string> cap_files;
    for (std::size_t i = 0; i < full.captions.size(); ++i) {
        cap_files.push_back((dir / ("c" + std::to_string(i) + ".json")).string());
        write_caption_file(full.captions[i], cap_files.back());
    }

    auto triplet = ingest_annotations(staged, kp_files, mask_files, cap_files);
    train::validate_triplet(triplet);
    CHECK(triplet.text == full.text);
    CHECK(triplet.boxes.size() == 2);

    // keypoints at the exact image boundary are accepted
    auto edge = full;
    edge.kp_target[0][0] = {63.0, 63.0, true};
    write_keypoint_file(edge.kp_target, kp_files[0]);
    auto t2 = ingest_annotations(staged, kp_files, mask_files, cap_files);
    CHECK(t2.kp_target[0][0].x == 63.0);

    // a 16-row keypoint file is rejected naming the object
    {
        std::ofstream out(kp_files[1]);
        out << R"({"objects": [[)";
        for (int k = 0; k < 16; ++k) out << "[1,1,1]" << (k + 1 < 16 ? "," : "");
        out << "]]}";
    }
    try {
        ingest_annotations(staged, kp_files, mask_files, cap_files);
        CHECK(false);
    } catch (const core::Error& e) {
        std::string msg = e.what();
        CHECK(msg.find("object 0") != std::string::npos);
        CHECK(msg.find("16") != std::string::npos);
    }

    // out-of-bounds coordinates are rejected
    write_keypoint_file({full.kp_prompts[0]}, kp_files[1]);
    auto bad = full.kp_target;
    bad[0][0] = {500.0, 10.0, true};
    write_keypoint_file(bad, kp_files[0]);
    CHECK_THROWS_AS(ingest_annotations(staged, kp_files, mask_files, cap_files), core::Error);
    fs::remove_all(dir);
}

TEST_CASE("mask RLE: encode/decode round trip") {
    core::Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t w = 8 + rng.uniform_index(24), h = 8 + rng.uniform_index(24);
        std::vector<std::uint8_t> bits(w * h);
        for (auto& b : bits) b = rng.uniform() < 0.3 ? 1 : 0;
        auto mask = train::Mask::encode(bits, w, h);
        CHECK(mask.decode() == bits);
    }
}

TEST_CASE("build_dataset_with_mock: builds loadable triplets through ingestion") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "relgen_databuild_test";
    fs::remove_all(dir);

    DataBuildRequest req;
    req.relations = {Relation::hug, Relation::shake};
    req.per_relation = 2;
    req.seed = 3;
    req.out_dir = dir.string();
    auto report = build_dataset_with_mock(req);
    CHECK(report.triplet_manifests.size() == 4);

    auto dataset = train::load_dataset(report.index_path);
    CHECK(dataset.size() == 4);
    for (const auto& t : dataset) train::validate_triplet(t);
    fs::remove_all(dir);
}

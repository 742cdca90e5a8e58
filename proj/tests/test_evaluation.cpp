// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "data/synthetic.hpp"
#include "eval/metrics.hpp"
#include "eval/predicate.hpp"

using namespace relgen;
using namespace relgen::eval;

#ifndef RELGEN_ASSETS_DIR
#define RELGEN_ASSETS_DIR "assets"
#endif

namespace {

// test stub that maps solid colors and fixed strings onto controllable unit
// vectors, for the aligned/orthogonal score identities
class AlignedStub : public core::EmbeddingBackend {
public:
    std::string name() const override { return "aligned-stub"; }
    core::BackendKind kind() const override { return core::BackendKind::joint_image_text; }
    std::size_t dim() const override { return 4; }

    std::vector<double> image_embed(const core::Image& img) const override {
        // red-ish images on axis 0, blue-ish on axis 1
        core::Color m = core::region_mean(img, 0, 0, img.width, img.height);
        if (m[0] >= m[2]) return {1, 0, 0, 0};
        return {0, 1, 0, 0};
    }
    std::vector<double> text_embed(const std::string& text) const override {
        if (text.find("red") != std::string::npos) return {1, 0, 0, 0};
        if (text.find("blue") != std::string::npos) return {0, 1, 0, 0};
        return {0, 0, 1, 0};
    }
};

core::Image solid(double r, double g, double b) {
    core::Image img(16, 16);
    for (std::size_t i = 0; i < img.data.size(); i += 3) {
        img.data[i] = r;
        img.data[i + 1] = g;
        img.data[i + 2] = b;
    }
    return img;
}

}  // namespace

TEST_CASE("extract_predicate: spec examples") {
    CHECK(extract_predicate("A cat is hugging a dog in front of the mountain") == "hugging");
    CHECK(extract_predicate("A { } is playing guitar on a park bench, serenading passersby.") ==
          "playing guitar");
    CHECK_THROWS_AS(extract_predicate(""), core::Error);
    CHECK_THROWS_AS(extract_predicate("a quiet park bench"), core::Error);  // no verb
}

TEST_CASE("extract_predicate: light verbs keep their object, others do not") {
    CHECK(extract_predicate("A corgi is riding a bike along the road") == "riding a bike");
    CHECK(extract_predicate("A man shakes hands with a woman at a ceremony") == "shakes hands");
    CHECK(extract_predicate("A cat is sitting back to back with a dog on a hilltop.") ==
          "sitting");
    CHECK(extract_predicate("A boy is carrying a plush whale across a river") == "carrying");
    CHECK(extract_predicate("A girl is eating dinner in a diner") == "eating dinner");
}

TEST_CASE("packaged manifest: 44 objects, 25 templates, verbatim predicates") {
    auto manifest =
        load_bench_manifest(std::string(RELGEN_ASSETS_DIR) + "/relationbench.json");
    CHECK(manifest.objects.size() == 44);
    CHECK(manifest.templates.size() == 25);
    CHECK(manifest.cases.size() == 200);

    // every template, instantiated, yields a non-empty verb phrase contained
    // verbatim in the prompt
    for (const auto& tpl : manifest.templates) {
        std::string inst = tpl;
        for (const char* noun : {"cat", "dog"}) {
            auto p = inst.find("{ }");
            if (p == std::string::npos) break;
            inst = inst.substr(0, p) + noun + inst.substr(p + 3);
        }
        auto pred = extract_predicate(inst);
        CHECK_FALSE(pred.empty());
        CHECK(inst.find(pred) != std::string::npos);
    }
    // packaged golds agree with the extractor
    for (const auto& c : manifest.cases)
        CHECK(extract_predicate(c.prompt) == c.predicate_gold);
}

TEST_CASE("clip_t / clip_r: aligned and orthogonal stubs") {
    AlignedStub stub;
    auto red = solid(0.9, 0.1, 0.1);
    CHECK(clip_t(red, "a red figure", stub) == doctest::Approx(100.0));
    CHECK(clip_t(red, "a blue figure", stub) == doctest::Approx(0.0));

    // clip_r equals clip_t on the extracted predicate, exactly
    std::string prompt = "A red figure is hugging a blue figure";
    CHECK(clip_r(red, prompt, stub) == clip_t(red, extract_predicate(prompt), stub));

    // vision-only backends are rejected
    auto vision = core::make_stub_vision_backend();
    CHECK_THROWS_AS(clip_t(red, "anything", *vision), core::Error);
}

TEST_CASE("identity_scores: trivial identities and the mean contract") {
    auto joint = core::make_stub_joint_backend();
    auto vision = core::make_stub_vision_backend();

    auto scene = data::synthesize_scene(data::Relation::hug, 5);
    std::vector<SubjectImages> subjects(1);
    subjects[0].references.push_back(scene.image);
    auto s = identity_scores(scene.image, subjects, *joint, *vision, false);
    CHECK(s.clip_i == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(s.dino == doctest::Approx(100.0).epsilon(1e-9));

    // two subjects, one perfect and one orthogonal -> 50 under a stub
    AlignedStub stub;
    auto red = solid(0.9, 0.1, 0.1);
    auto blue = solid(0.1, 0.1, 0.9);
    std::vector<SubjectImages> two(2);
    two[0].references.push_back(red);   // same axis as the generated image
    two[1].references.push_back(blue);  // orthogonal axis
    auto s2 = identity_scores(red, two, stub, stub, false);
    CHECK(s2.clip_i == doctest::Approx(50.0));

    CHECK_THROWS_AS(identity_scores(red, {}, stub, stub, false), core::Error);
}

TEST_CASE("identity_scores: cropping moves scores toward the boxed subject") {
    // synthetic two-object scene with known patch contents: left half red,
    // right half blue
    core::Image scene(32, 32);
    for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
            scene.at(x, y, 0) = x < 16 ? 0.9 : 0.1;
            scene.at(x, y, 2) = x < 16 ? 0.1 : 0.9;
        }
    AlignedStub stub;
    std::vector<SubjectImages> subject(1);
    subject[0].references.push_back(solid(0.1, 0.1, 0.9));  // the blue identity
    subject[0].box = idext::Box{0.55, 0.05, 0.95, 0.95};    // right half

    auto cropped = identity_scores(scene, subject, stub, stub, true);
    auto full = identity_scores(scene, subject, stub, stub, false);
    // the crop isolates the blue side: same-subject similarity goes up
    CHECK(cropped.clip_i > full.clip_i);
    CHECK(cropped.clip_i == doctest::Approx(100.0));
}

TEST_CASE("run_benchmark: empty manifest, missing outputs, byte stability") {
    namespace fs = std::filesystem;
    auto joint = core::make_stub_joint_backend();
    auto vision = core::make_stub_vision_backend();

    BenchManifest empty;
    auto dir = fs::temp_directory_path() / "relgen_bench_test";
    fs::remove_all(dir);
    fs::create_directories(dir / "outputs");
    fs::create_directories(dir / "refs");

    auto r0 = run_benchmark(empty, dir.string(), (dir / "outputs").string(), *joint, *vision);
    CHECK(r0.cases.empty());
    CHECK(r0.failed_cases == 0);

    // two cases; only one output present
    BenchManifest m;
    auto ref = data::render_reference_image("cat");
    core::write_ppm(ref, (dir / "refs" / "cat.ppm").string());
    BenchCase c1{"case_a", {{"refs/cat.ppm", "cat"}},
                 "A cat is hugging a cat in front of the mountain", "hugging", {"single"}};
    // distinct second subject for the multi case
    auto ref2 = data::render_reference_image("dog");
    core::write_ppm(ref2, (dir / "refs" / "dog.ppm").string());
    BenchCase c2{"case_b", {{"refs/cat.ppm", "cat"}, {"refs/dog.ppm", "dog"}},
                 "A cat is wrestling with a dog in a championship ring.", "wrestling",
                 {"multi"}};
    m.cases = {c2, c1};  // out of order on purpose: report sorts by id

    auto scene = data::synthesize_scene(data::Relation::hug, 2);
    core::write_ppm(scene.image, (dir / "outputs" / "case_a.ppm").string());

    auto r1 = run_benchmark(m, dir.string(), (dir / "outputs").string(), *joint, *vision);
    CHECK(r1.cases.size() == 2);
    CHECK(r1.cases[0].case_id == "case_a");
    CHECK_FALSE(r1.cases[0].failed);
    CHECK(r1.cases[1].failed);  // case_b has no output
    CHECK(r1.failed_cases == 1);

    // byte-identical report across re-runs; aggregates invariant to case order
    auto r2 = run_benchmark(m, dir.string(), (dir / "outputs").string(), *joint, *vision);
    CHECK(r1.to_json() == r2.to_json());
    std::swap(m.cases[0], m.cases[1]);
    auto r3 = run_benchmark(m, dir.string(), (dir / "outputs").string(), *joint, *vision);
    CHECK(r3.to_json() == r1.to_json());

    // report values live on the x100 scale
    CHECK(r1.cases[0].clip_t <= 100.0);
    CHECK(r1.cases[0].clip_t >= -100.0);
    fs::remove_all(dir);
}

TEST_CASE("run_benchmark: a case without a predicate is skipped and logged") {
    namespace fs = std::filesystem;
    auto joint = core::make_stub_joint_backend();
    auto vision = core::make_stub_vision_backend();
    auto dir = fs::temp_directory_path() / "relgen_nopred_test";
    fs::remove_all(dir);
    fs::create_directories(dir / "outputs");
    fs::create_directories(dir / "refs");
    core::write_ppm(data::render_reference_image("cat"), (dir / "refs" / "cat.ppm").string());
    auto scene = data::synthesize_scene(data::Relation::hug, 4);
    core::write_ppm(scene.image, (dir / "outputs" / "np.ppm").string());

    BenchManifest m;
    m.cases.push_back(
        {"np", {{"refs/cat.ppm", "cat"}}, "A cat near a quiet cat corner", "", {"single"}});
    auto r = run_benchmark(m, dir.string(), (dir / "outputs").string(), *joint, *vision);
    CHECK(r.failed_cases == 1);
    CHECK(r.cases[0].failed);
    CHECK(r.cases[0].failure_note.find("no predicate") != std::string::npos);
    CHECK(r.to_json().find("no predicate") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("bench case validation: class nouns must appear exactly once per slot") {
    BenchCase ok{"x", {{"r.ppm", "cat"}}, "A cat is dancing in the moonlight", "dancing", {}};
    validate_bench_case(ok);

    BenchCase missing{"x", {{"r.ppm", "corgi"}}, "A cat is dancing", "dancing", {}};
    CHECK_THROWS_AS(validate_bench_case(missing), core::Error);

    BenchCase dup{"x", {{"r.ppm", "cat"}, {"r2.ppm", "cat"}}, "A cat is hugging a cat", "hugging",
                  {}};
    CHECK_THROWS_AS(validate_bench_case(dup), core::Error);
}

TEST_CASE("external file backend: loads projections from a model file") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "relgen_file_backend";
    fs::create_directories(dir);
    // 4-dim backend with a fixed projection over the 48-value signature
    std::string rows;
    for (int r = 0; r < 4; ++r) {
        rows += r ? ",[" : "[";
        for (int k = 0; k < 48; ++k) rows += (k ? "," : "") + std::to_string((r * 48 + k) % 7 * 0.1);
        rows += "]";
    }
    std::ofstream((dir / "backend.json"))
        << R"({"name": "file-backend", "dim": 4, "projection": [)" << rows << "]}";

    auto backend = core::load_file_backend((dir / "backend.json").string());
    CHECK(backend->name() == "file-backend");
    CHECK(backend->dim() == 4);
    auto scene = data::synthesize_scene(data::Relation::hug, 3);
    auto e1 = backend->image_embed(scene.image);
    auto e2 = backend->image_embed(scene.image);
    CHECK(e1 == e2);
    double norm = 0;
    for (double v : e1) norm += v * v;
    CHECK(norm == doctest::Approx(1.0));

    // malformed files are rejected
    std::ofstream((dir / "bad.json")) << R"({"dim": 4})";
    CHECK_THROWS_AS(core::load_file_backend((dir / "bad.json").string()), core::Error);
    fs::remove_all(dir);
}

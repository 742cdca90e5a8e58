// SPDX-License-Identifier: Apache-2.0
#include "eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "eval/predicate.hpp"

namespace relgen::eval {

namespace fs = std::filesystem;
using nlohmann::json;

double clip_t(const Image& image, const std::string& prompt, const EmbeddingBackend& backend) {
    core::require(backend.kind() == core::BackendKind::joint_image_text,
                  "clip_t: needs a joint image-text backend");
    core::require(!prompt.empty(), "clip_t: empty prompt");
    return 100.0 * core::cosine(backend.image_embed(image), backend.text_embed(prompt));
}

double clip_r(const Image& image, const std::string& prompt, const EmbeddingBackend& backend) {
    return clip_t(image, extract_predicate(prompt), backend);
}

IdentityScores identity_scores(const Image& generated, const std::vector<SubjectImages>& subjects,
                               const EmbeddingBackend& backend_joint,
                               const EmbeddingBackend& backend_vision, bool crop_to_box) {
    core::require(!subjects.empty(), "identity_scores: no subjects");
    for (const auto& s : subjects)
        core::require(!s.references.empty(), "identity_scores: subject without references");

    auto score_with = [&](const EmbeddingBackend& backend) {
        double subject_mean = 0.0;
        for (const auto& s : subjects) {
            Image region = generated;
            if (crop_to_box && s.box) {
                auto px = [&](double v, std::size_t extent) {
                    double c = std::clamp(v, 0.0, 1.0) * static_cast<double>(extent);
                    return static_cast<std::size_t>(c);
                };
                std::size_t x0 = px(s.box->x0, generated.width);
                std::size_t y0 = px(s.box->y0, generated.height);
                std::size_t x1 = std::max(x0 + 4, px(s.box->x1, generated.width));
                std::size_t y1 = std::max(y0 + 4, px(s.box->y1, generated.height));
                x1 = std::min(x1, generated.width);
                y1 = std::min(y1, generated.height);
                if (x1 > x0 + 3 && y1 > y0 + 3) region = core::crop(generated, x0, y0, x1, y1);
            }
            auto emb = backend.image_embed(region);
            double acc = 0.0;
            for (const auto& ref : s.references) acc += core::cosine(emb, backend.image_embed(ref));
            subject_mean += acc / static_cast<double>(s.references.size());
        }
        return 100.0 * subject_mean / static_cast<double>(subjects.size());
    };

    IdentityScores out;
    out.clip_i = score_with(backend_joint);
    out.dino = score_with(backend_vision);
    return out;
}

void validate_bench_case(const BenchCase& c) {
    core::require(!c.case_id.empty(), "bench case: empty id");
    core::require(!c.subjects.empty() && c.subjects.size() <= 2,
                  "bench case " + c.case_id + ": 1..2 subjects required");
    core::require(!c.prompt.empty(), "bench case " + c.case_id + ": empty prompt");
    // every class noun must appear in the instantiated prompt
    std::set<std::string> seen;
    for (const auto& s : c.subjects) {
        core::require(c.prompt.find(s.class_noun) != std::string::npos,
                      "bench case " + c.case_id + ": class noun '" + s.class_noun +
                          "' missing from the prompt");
        core::require(!seen.count(s.class_noun),
                      "bench case " + c.case_id + ": duplicate class noun per slot");
        seen.insert(s.class_noun);
    }
}

BenchManifest load_bench_manifest(const std::string& path) {
    std::ifstream in(path);
    core::require(in.good(), "bench manifest: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        core::fail_invalid("bench manifest: bad JSON in " + path + ": " + e.what());
    }
    BenchManifest m;
    if (j.contains("objects")) m.objects = j.at("objects").get<std::vector<std::string>>();
    if (j.contains("templates")) m.templates = j.at("templates").get<std::vector<std::string>>();
    for (const auto& c : j.at("cases")) {
        BenchCase bc;
        bc.case_id = c.at("id").get<std::string>();
        for (const auto& s : c.at("subjects"))
            bc.subjects.push_back(
                {s.at("ref_image").get<std::string>(), s.at("class").get<std::string>()});
        bc.prompt = c.at("prompt").get<std::string>();
        bc.predicate_gold = c.value("predicate_gold", std::string());
        if (c.contains("tags")) bc.tags = c.at("tags").get<std::vector<std::string>>();
        validate_bench_case(bc);
        m.cases.push_back(std::move(bc));
    }
    return m;
}

namespace {

std::string fmt1(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

std::string fmt4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc / static_cast<double>(xs.size());
}

double round1(double v) { return std::round(v * 10.0) / 10.0; }

}  // namespace

std::string MetricReport::to_json() const {
    // hand-assembled with fixed float formatting so re-runs are byte-identical
    std::string out = "{\n";
    out += "  \"backend_joint\": \"" + backend_joint + "\",\n";
    out += "  \"backend_vision\": \"" + backend_vision + "\",\n";
    out += "  \"config_hash\": \"" + config_hash + "\",\n";
    out += "  \"failed_cases\": " + std::to_string(failed_cases) + ",\n";
    out += "  \"aggregates\": {";
    bool first = true;
    for (const auto& [k, v] : aggregates) {
        out += first ? "" : ", ";
        out += "\"" + k + "\": " + fmt1(v);
        first = false;
    }
    out += "},\n  \"aggregates_by_tag\": {";
    first = true;
    for (const auto& [tag, metrics] : aggregates_by_tag) {
        out += first ? "" : ", ";
        out += "\"" + tag + "\": {";
        bool f2 = true;
        for (const auto& [k, v] : metrics) {
            out += f2 ? "" : ", ";
            out += "\"" + k + "\": " + fmt1(v);
            f2 = false;
        }
        out += "}";
        first = false;
    }
    out += "},\n  \"cases\": [\n";
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& c = cases[i];
        out += "    {\"id\": \"" + c.case_id + "\", \"failed\": " +
               (c.failed ? "true" : "false");
        if (c.failed && !c.failure_note.empty()) {
            out += ", \"note\": \"" + c.failure_note + "\"";
        }
        if (!c.failed) {
            out += ", \"clip_t\": " + fmt4(c.clip_t) + ", \"clip_r\": " + fmt4(c.clip_r) +
                   ", \"clip_i\": " + fmt4(c.clip_i) + ", \"dino\": " + fmt4(c.dino);
        }
        out += i + 1 < cases.size() ? "},\n" : "}\n";
    }
    out += "  ]\n}\n";
    return out;
}

std::string MetricReport::to_table() const {
    std::string out;
    out += "Group         CLIP-T  CLIP-R  CLIP-I  DINO\n";
    auto row = [&](const std::string& name, const std::map<std::string, double>& m) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%-12s  %6s  %6s  %6s  %6s\n", name.c_str(),
                      fmt1(m.count("clip_t") ? m.at("clip_t") : 0.0).c_str(),
                      fmt1(m.count("clip_r") ? m.at("clip_r") : 0.0).c_str(),
                      fmt1(m.count("clip_i") ? m.at("clip_i") : 0.0).c_str(),
                      fmt1(m.count("dino") ? m.at("dino") : 0.0).c_str());
        out += buf;
    };
    for (const auto& [tag, metrics] : aggregates_by_tag) row(tag, metrics);
    row("all", aggregates);
    return out;
}

MetricReport run_benchmark(const BenchManifest& manifest, const std::string& manifest_dir,
                           const std::string& outputs_dir,
                           const EmbeddingBackend& backend_joint,
                           const EmbeddingBackend& backend_vision, const BenchmarkOptions& opts) {
    core::require(backend_joint.kind() == core::BackendKind::joint_image_text,
                  "run_benchmark: joint backend required");
    MetricReport report;
    report.backend_joint = backend_joint.name();
    report.backend_vision = backend_vision.name();
    report.config_hash = opts.config_hash;

    std::vector<BenchCase> cases = manifest.cases;
    std::sort(cases.begin(), cases.end(),
              [](const BenchCase& a, const BenchCase& b) { return a.case_id < b.case_id; });

    std::map<std::string, std::vector<double>> agg;
    std::map<std::string, std::map<std::string, std::vector<double>>> agg_tag;

    for (const auto& c : cases) {
        CaseScore score;
        score.case_id = c.case_id;
        fs::path out_path = fs::path(outputs_dir) / (c.case_id + ".ppm");
        if (!fs::exists(out_path)) {
            score.failed = true;
            score.failure_note = "missing output";
            ++report.failed_cases;
            report.cases.push_back(score);
            continue;
        }
        try {
            Image generated = core::read_ppm(out_path.string());

            std::vector<SubjectImages> subjects;
            for (const auto& s : c.subjects) {
                fs::path rp = s.ref_image;
                if (rp.is_relative()) rp = fs::path(manifest_dir) / rp;
                SubjectImages si;
                si.references.push_back(core::read_ppm(rp.string()));
                subjects.push_back(std::move(si));
            }

            score.clip_t = clip_t(generated, c.prompt, backend_joint);
            score.clip_r = clip_r(generated, c.prompt, backend_joint);
            IdentityScores ids = identity_scores(generated, subjects, backend_joint,
                                                 backend_vision, opts.crop_to_box);
            score.clip_i = ids.clip_i;
            score.dino = ids.dino;
        } catch (const core::Error& e) {
            // e.g. "no predicate": the case is skipped and logged, the run continues
            score.failed = true;
            score.failure_note = e.what();
            ++report.failed_cases;
            report.cases.push_back(score);
            continue;
        }
        report.cases.push_back(score);

        agg["clip_t"].push_back(score.clip_t);
        agg["clip_r"].push_back(score.clip_r);
        agg["clip_i"].push_back(score.clip_i);
        agg["dino"].push_back(score.dino);
        std::string group = c.subjects.size() > 1 ? "multi" : "single";
        agg_tag[group]["clip_t"].push_back(score.clip_t);
        agg_tag[group]["clip_r"].push_back(score.clip_r);
        agg_tag[group]["clip_i"].push_back(score.clip_i);
        agg_tag[group]["dino"].push_back(score.dino);
    }

    for (const auto& [k, xs] : agg) report.aggregates[k] = round1(mean_of(xs));
    for (const auto& [tag, metrics] : agg_tag)
        for (const auto& [k, xs] : metrics)
            report.aggregates_by_tag[tag][k] = round1(mean_of(xs));
    return report;
}

}  // namespace relgen::eval

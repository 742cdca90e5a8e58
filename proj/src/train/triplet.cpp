// SPDX-License-Identifier: Apache-2.0
#include "train/triplet.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace relgen::train {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

Mask Mask::encode(const std::vector<std::uint8_t>& bits, std::size_t w, std::size_t h) {
    core::require(bits.size() == w * h, "mask: bit count does not match dimensions");
    Mask m;
    m.width = w;
    m.height = h;
    std::uint8_t cur = 0;  // runs start with a zero run (possibly empty)
    std::size_t run = 0;
    for (std::uint8_t b : bits) {
        if ((b != 0) == (cur != 0)) {
            ++run;
        } else {
            m.runs.push_back(run);
            cur = b;
            run = 1;
        }
    }
    m.runs.push_back(run);
    return m;
}

std::vector<std::uint8_t> Mask::decode() const {
    std::vector<std::uint8_t> bits;
    bits.reserve(width * height);
    std::uint8_t cur = 0;
    for (std::size_t run : runs) {
        bits.insert(bits.end(), run, cur);
        cur = cur ? 0 : 1;
    }
    core::require(bits.size() == width * height, "mask: runs do not cover the mask area");
    return bits;
}

void validate_triplet(const Triplet& t) {
    std::size_t n = t.prompts.size();
    core::require(n >= 1, "triplet: needs at least one image prompt");
    core::require(n <= 2, "triplet: at most two image prompts");
    core::require(t.target.width > 0 && t.target.height > 0, "triplet: empty target image");
    core::require(!t.text.empty(), "triplet: empty text prompt");
    core::require(t.kp_target.size() == n && t.kp_prompts.size() == n && t.boxes.size() == n,
                  "triplet: object count inconsistent across keypoints/boxes");
    core::require(t.captions.size() == n + 1, "triplet: expected one caption per image");
    if (!t.masks.empty())
        core::require(t.masks.size() == n, "triplet: mask count must match objects");

    auto check_kp = [](const KeypointSet& kp, const Image& img, const std::string& what,
                       std::size_t obj) {
        for (std::size_t k = 0; k < kKeypointCount; ++k) {
            const Keypoint& p = kp[k];
            if (!p.visible) continue;
            core::require(p.x >= 0.0 && p.y >= 0.0 && p.x <= static_cast<double>(img.width - 1) &&
                              p.y <= static_cast<double>(img.height - 1),
                          "triplet: keypoint out of bounds in " + what + " for object " +
                              std::to_string(obj));
        }
    };
    for (std::size_t j = 0; j < n; ++j) {
        check_kp(t.kp_target[j], t.target, "target", j);
        check_kp(t.kp_prompts[j], t.prompts[j], "prompt", j);
        t.boxes[j].validate();
        core::require(t.prompts[j].width > 0 && t.prompts[j].height > 0,
                      "triplet: empty prompt image for object " + std::to_string(j));
    }
}

static ordered_json keypoints_to_json(const std::vector<KeypointSet>& sets) {
    ordered_json out = ordered_json::array();
    for (const auto& set : sets) {
        ordered_json rows = ordered_json::array();
        for (const auto& p : set) rows.push_back({p.x, p.y, p.visible ? 1 : 0});
        out.push_back(rows);
    }
    return out;
}

static std::vector<KeypointSet> keypoints_from_json(const json& j, const std::string& what) {
    std::vector<KeypointSet> out;
    for (std::size_t obj = 0; obj < j.size(); ++obj) {
        const auto& rows = j.at(obj);
        core::require(rows.size() == kKeypointCount,
                      "triplet manifest: expected 17 keypoint rows in " + what + " for object " +
                          std::to_string(obj) + ", got " + std::to_string(rows.size()));
        KeypointSet set;
        for (std::size_t k = 0; k < kKeypointCount; ++k) {
            const auto& row = rows.at(k);
            core::require(row.size() == 3, "triplet manifest: keypoint rows are [x, y, v]");
            set[k] = {row.at(0).get<double>(), row.at(1).get<double>(),
                      row.at(2).get<double>() != 0.0};
        }
        out.push_back(set);
    }
    return out;
}

void save_triplet_manifest(const Triplet& t, const std::string& dir, const std::string& stem) {
    validate_triplet(t);
    fs::create_directories(dir);
    fs::path base(dir);

    std::string target_name = stem + "_target.ppm";
    core::write_ppm(t.target, (base / target_name).string());
    std::vector<std::string> prompt_names;
    for (std::size_t j = 0; j < t.prompts.size(); ++j) {
        prompt_names.push_back(stem + "_prompt" + std::to_string(j) + ".ppm");
        core::write_ppm(t.prompts[j], (base / prompt_names.back()).string());
    }

    ordered_json j;
    j["target"] = target_name;
    j["prompts"] = prompt_names;
    j["text"] = t.text;
    j["keypoints"]["target"] = keypoints_to_json(t.kp_target);
    j["keypoints"]["prompts"] = keypoints_to_json(t.kp_prompts);
    ordered_json boxes = ordered_json::array();
    for (const auto& b : t.boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
    j["boxes"] = boxes;
    j["captions"] = t.captions;
    if (!t.masks.empty()) {
        ordered_json masks = ordered_json::array();
        for (const auto& m : t.masks)
            masks.push_back({{"w", m.width}, {"h", m.height}, {"runs", m.runs}});
        j["masks"] = masks;
    }

    std::ofstream out(base / (stem + ".json"));
    core::require(out.good(), "triplet manifest: cannot write to " + dir);
    out << j.dump(2) << "\n";
}

Triplet load_triplet_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    core::require(in.good(), "triplet manifest: cannot open " + manifest_path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        core::fail_invalid("triplet manifest: bad JSON in " + manifest_path + ": " + e.what());
    }
    fs::path base = fs::path(manifest_path).parent_path();

    Triplet t;
    t.target = core::read_ppm((base / j.at("target").get<std::string>()).string());
    for (const auto& p : j.at("prompts"))
        t.prompts.push_back(core::read_ppm((base / p.get<std::string>()).string()));
    t.text = j.at("text").get<std::string>();
    t.kp_target = keypoints_from_json(j.at("keypoints").at("target"), "target");
    t.kp_prompts = keypoints_from_json(j.at("keypoints").at("prompts"), "prompts");
    for (const auto& b : j.at("boxes")) {
        core::require(b.size() == 4, "triplet manifest: boxes are [x0, y0, x1, y1]");
        t.boxes.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                           b.at(3).get<double>()});
    }
    t.captions = j.at("captions").get<std::vector<std::string>>();
    if (j.contains("masks")) {
        for (const auto& m : j.at("masks")) {
            Mask mask;
            mask.width = m.at("w").get<std::size_t>();
            mask.height = m.at("h").get<std::size_t>();
            mask.runs = m.at("runs").get<std::vector<std::size_t>>();
            mask.decode();  // validates coverage
            t.masks.push_back(std::move(mask));
        }
    }
    validate_triplet(t);
    return t;
}

std::vector<Triplet> load_dataset(const std::string& index_path) {
    std::ifstream in(index_path);
    core::require(in.good(), "dataset: cannot open " + index_path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        core::fail_invalid("dataset: bad JSON in " + index_path + ": " + e.what());
    }
    fs::path base = fs::path(index_path).parent_path();
    std::vector<Triplet> out;
    for (const auto& rel : j.at("triplets"))
        out.push_back(load_triplet_manifest((base / rel.get<std::string>()).string()));
    return out;
}

void save_dataset_index(const std::vector<std::string>& manifest_paths,
                        const std::string& index_path) {
    ordered_json j;
    j["triplets"] = manifest_paths;
    std::ofstream out(index_path);
    core::require(out.good(), "dataset: cannot write " + index_path);
    out << j.dump(2) << "\n";
}

}  // namespace relgen::train

// SPDX-License-Identifier: Apache-2.0
#include "gen/generation.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "core/archive.hpp"

namespace relgen::gen {

namespace fs = std::filesystem;
using core::Rng;
using diffusion::LatentGrid;
using nlohmann::json;
using nlohmann::ordered_json;

void GenerationRequest::validate() const {
    core::require(!text_prompt.empty(), "generate: empty text prompt");
    core::require(!subjects.empty() && subjects.size() <= 2,
                  "generate: between 1 and 2 subjects required");
    for (const auto& s : subjects) {
        s.box.validate();
        core::require(!s.class_noun.empty(), "generate: subject missing class noun");
        core::require(s.ref_image.width > 0, "generate: subject missing reference image");
    }
    core::require(num_steps >= 1, "generate: num_steps must be >= 1");
    if (gamma) core::require(*gamma >= 0.0 && *gamma <= 1.0, "generate: gamma out of range");
}

GenerationResult generate(Model& model, const GenerationRequest& req) {
    req.validate();
    const auto& cfg = model.config();
    const auto& sched = model.schedule();

    if (!req.adapter_archive.empty())
        model.import_adapters(core::load_archive(req.adapter_archive));

    // conditions: text tokens plus per-subject identity tokens
    std::vector<core::Image> prompts;
    std::vector<idext::Box> boxes;
    std::vector<std::string> captions;
    for (const auto& s : req.subjects) {
        prompts.push_back(s.ref_image);
        boxes.push_back(s.box);
        captions.push_back(s.class_noun);
    }
    auto c_t = core::ad::constant(model.text_condition(req.text_prompt));
    auto c_i = model.image_condition(prompts, boxes, captions, train::AblationMode::full);

    double gamma = req.gamma.value_or(cfg.gamma);

    // timestep grid, descending
    std::size_t T = sched.T();
    std::size_t steps = std::min(req.num_steps, T);
    std::vector<std::size_t> ts(steps);
    for (std::size_t k = 0; k < steps; ++k)
        ts[k] = steps == 1 ? T - 1
                           : (T - 1) - k * (T - 1) / (steps - 1);

    Rng rng(core::derive_seed(req.seed, "sampler"));
    std::size_t side = cfg.latent_side();
    LatentGrid z;
    z.downscale_factor = cfg.downscale_factor;
    z.data = core::Tensor({cfg.latent_channels, side, side});
    rng.fill_normal(z.data.vec());

    LatentGrid z0_hat = z;
    for (std::size_t k = 0; k < steps; ++k) {
        std::size_t t = ts[k];
        auto eps_hat_var =
            model.denoiser().forward(z.to_position_major(), t, c_i, c_t, gamma);
        LatentGrid eps_hat =
            LatentGrid::from_position_major(core::ad::val(eps_hat_var), side, side,
                                            cfg.downscale_factor);
        z0_hat = diffusion::predict_z0(z, eps_hat, t, sched);

        if (k + 1 == steps) break;
        std::size_t s = ts[k + 1];
        double abar_t = sched.alpha_bar(t), abar_s = sched.alpha_bar(s);
        // ancestral step: sigma at the eta=1 setting
        double sigma = std::sqrt((1.0 - abar_s) / (1.0 - abar_t)) *
                       std::sqrt(1.0 - abar_t / abar_s);
        double dir = std::sqrt(std::max(0.0, 1.0 - abar_s - sigma * sigma));
        for (std::size_t i = 0; i < z.data.size(); ++i)
            z.data[i] = std::sqrt(abar_s) * z0_hat.data[i] + dir * eps_hat.data[i] +
                        sigma * rng.normal();
    }

    GenerationResult out;
    out.image = model.decode_standardized(z0_hat);

    ordered_json meta;
    meta["text_prompt"] = req.text_prompt;
    ordered_json subs = ordered_json::array();
    for (const auto& s : req.subjects)
        subs.push_back({{"ref_image", s.ref_image_path},
                        {"class", s.class_noun},
                        {"box", {s.box.x0, s.box.y0, s.box.x1, s.box.y1}}});
    meta["subjects"] = subs;
    meta["seed"] = req.seed;
    meta["num_steps"] = steps;
    meta["gamma"] = gamma;
    meta["adapters"] = req.adapter_archive;
    meta["schedule"] = json::parse(sched.to_json());
    meta["model"] = json::parse(cfg.meta_json());
    out.metadata_json = meta.dump(2) + "\n";
    return out;
}

std::vector<GenerationRequest> load_request_manifest(const std::string& path) {
    std::ifstream in(path);
    core::require(in.good(), "requests: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        core::fail_invalid("requests: bad JSON in " + path + ": " + e.what());
    }
    fs::path base = fs::path(path).parent_path();

    std::vector<GenerationRequest> out;
    for (const auto& r : j.at("requests")) {
        GenerationRequest req;
        req.text_prompt = r.at("text_prompt").get<std::string>();
        for (const auto& s : r.at("subjects")) {
            SubjectRef ref;
            ref.ref_image_path = s.at("ref_image").get<std::string>();
            fs::path p = ref.ref_image_path;
            if (p.is_relative()) p = base / p;
            ref.ref_image = core::read_ppm(p.string());
            ref.class_noun = s.at("class").get<std::string>();
            const auto& b = s.at("box");
            core::require(b.size() == 4, "requests: box must be [x0, y0, x1, y1]");
            ref.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                       b.at(3).get<double>()};
            req.subjects.push_back(std::move(ref));
        }
        req.seed = r.value("seed", 0ull);
        req.num_steps = r.value("num_steps", 30ull);
        if (r.contains("gamma")) req.gamma = r.at("gamma").get<double>();
        req.validate();
        out.push_back(std::move(req));
    }
    return out;
}

GridReport grid_report(const std::vector<GenerationRequest>& requests,
                       const std::vector<Image>& outputs) {
    core::require(requests.size() == outputs.size(),
                  "grid_report: requests and outputs must align");
    core::require(!outputs.empty(), "grid_report: nothing to report");

    std::size_t n = outputs.size();
    std::size_t cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    std::size_t rows = (n + cols - 1) / cols;
    std::size_t tile_w = outputs[0].width, tile_h = outputs[0].height;
    for (const auto& img : outputs)
        core::require(img.width == tile_w && img.height == tile_h,
                      "grid_report: outputs must share dimensions");

    const std::size_t pad = 2, caption_h = 10;
    Image grid(cols * (tile_w + pad) + pad, rows * (tile_h + caption_h + pad) + pad, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = i / cols, c = i % cols;
        std::size_t ox = pad + c * (tile_w + pad), oy = pad + r * (tile_h + caption_h + pad);
        for (std::size_t y = 0; y < tile_h; ++y)
            for (std::size_t x = 0; x < tile_w; ++x)
                for (std::size_t ch = 0; ch < 3; ++ch)
                    grid.at(ox + x, oy + y, ch) = outputs[i].at(x, y, ch);
        std::string caption = requests[i].text_prompt;
        std::size_t max_chars = tile_w / 6;
        if (caption.size() > max_chars && max_chars > 2)
            caption = caption.substr(0, max_chars - 2) + "..";
        core::draw_text(grid, static_cast<long>(ox), static_cast<long>(oy + tile_h + 1), caption,
                        {0.1, 0.1, 0.1});
    }

    ordered_json side;
    ordered_json reqs = ordered_json::array();
    for (const auto& r : requests) {
        ordered_json jr;
        jr["text_prompt"] = r.text_prompt;
        ordered_json subs = ordered_json::array();
        for (const auto& s : r.subjects)
            subs.push_back({{"ref_image", s.ref_image_path},
                            {"class", s.class_noun},
                            {"box", {s.box.x0, s.box.y0, s.box.x1, s.box.y1}}});
        jr["subjects"] = subs;
        jr["seed"] = r.seed;
        jr["num_steps"] = r.num_steps;
        if (r.gamma) jr["gamma"] = *r.gamma;
        reqs.push_back(jr);
    }
    side["requests"] = reqs;
    side["grid"] = {{"rows", rows}, {"cols", cols}, {"tile_w", tile_w}, {"tile_h", tile_h}};

    GridReport out;
    out.grid = std::move(grid);
    out.sidecar_json = side.dump(2) + "\n";
    return out;
}

}  // namespace relgen::gen

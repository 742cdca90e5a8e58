// SPDX-License-Identifier: Apache-2.0
#include "cli/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

namespace relgen::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        core::require(allowed.count(it.key()) != 0,
                      "config: unknown key '" + it.key() + "' in " + where);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void RunConfig::apply_json_text(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        core::fail_invalid("config: bad JSON in " + origin + ": " + e.what());
    }
    check_keys(j, {"model", "train", "generate", "distill", "data"}, origin);

    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m,
                   {"image_size", "downscale_factor", "latent_channels", "d_model", "heads",
                    "text_dim", "id_tokens", "extractor_depth", "local_grid", "injection_method",
                    "lora_rank", "lora_scale", "lora_a_init", "gamma", "seed", "latent_scale",
                    "proj_out_scale", "scale_correction_by_signal", "timesteps", "beta_start",
                    "beta_end"},
                   origin + ":model");
        auto& mc = model;
        mc.image_size = m.value("image_size", mc.image_size);
        mc.downscale_factor = m.value("downscale_factor", mc.downscale_factor);
        mc.latent_channels = m.value("latent_channels", mc.latent_channels);
        mc.d_model = m.value("d_model", mc.d_model);
        mc.heads = m.value("heads", mc.heads);
        mc.text_dim = m.value("text_dim", mc.text_dim);
        mc.id_tokens = m.value("id_tokens", mc.id_tokens);
        mc.extractor_depth = m.value("extractor_depth", mc.extractor_depth);
        mc.local_grid = m.value("local_grid", mc.local_grid);
        mc.injection_method = m.value("injection_method", mc.injection_method);
        mc.lora_rank = m.value("lora_rank", mc.lora_rank);
        mc.lora_scale = m.value("lora_scale", mc.lora_scale);
        mc.lora_a_init = m.value("lora_a_init", mc.lora_a_init);
        mc.gamma = m.value("gamma", mc.gamma);
        mc.seed = m.value("seed", mc.seed);
        mc.latent_scale = m.value("latent_scale", mc.latent_scale);
        mc.proj_out_scale = m.value("proj_out_scale", mc.proj_out_scale);
        mc.scale_correction_by_signal =
            m.value("scale_correction_by_signal", mc.scale_correction_by_signal);
        mc.timesteps = m.value("timesteps", mc.timesteps);
        mc.beta_start = m.value("beta_start", mc.beta_start);
        mc.beta_end = m.value("beta_end", mc.beta_end);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t,
                   {"lora_rank", "lora_scale", "gamma", "lambda_kml", "steps", "lr", "batch_size",
                    "seed", "ablation_mode", "train_extractor_gates"},
                   origin + ":train");
        train.lora_rank = t.value("lora_rank", train.lora_rank);
        train.lora_scale = t.value("lora_scale", train.lora_scale);
        train.gamma = t.value("gamma", train.gamma);
        train.lambda_kml = t.value("lambda_kml", train.lambda_kml);
        train.steps = t.value("steps", train.steps);
        train.lr = t.value("lr", train.lr);
        train.batch_size = t.value("batch_size", train.batch_size);
        train.seed = t.value("seed", train.seed);
        if (t.contains("ablation_mode"))
            train.ablation = train::ablation_from_string(t.at("ablation_mode"));
        train.train_extractor_gates =
            t.value("train_extractor_gates", train.train_extractor_gates);
    }
    if (j.contains("generate")) {
        const json& g = j.at("generate");
        check_keys(g, {"num_steps", "seed"}, origin + ":generate");
        generate.num_steps = g.value("num_steps", generate.num_steps);
        generate.seed = g.value("seed", generate.seed);
    }
    if (j.contains("distill")) {
        const json& d = j.at("distill");
        check_keys(d, {"steps", "lr", "batch_size", "seed", "grid"}, origin + ":distill");
        distill.steps = d.value("steps", distill.steps);
        distill.lr = d.value("lr", distill.lr);
        distill.batch_size = d.value("batch_size", distill.batch_size);
        distill.seed = d.value("seed", distill.seed);
        distill.grid = d.value("grid", distill.grid);
    }
    if (j.contains("data")) {
        const json& d = j.at("data");
        check_keys(d, {"relations", "per_relation", "seed"}, origin + ":data");
        if (d.contains("relations"))
            data.relations = d.at("relations").get<std::vector<std::string>>();
        data.per_relation = d.value("per_relation", data.per_relation);
        data.seed = d.value("seed", data.seed);
    }
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    core::require(in.good(), "config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    RunConfig cfg;
    cfg.apply_json_text(text, path);
    return cfg;
}

std::string RunConfig::canonical_json() const {
    ordered_json j;
    ordered_json m;
    m["image_size"] = model.image_size;
    m["downscale_factor"] = model.downscale_factor;
    m["latent_channels"] = model.latent_channels;
    m["d_model"] = model.d_model;
    m["heads"] = model.heads;
    m["text_dim"] = model.text_dim;
    m["id_tokens"] = model.id_tokens;
    m["extractor_depth"] = model.extractor_depth;
    m["local_grid"] = model.local_grid;
    m["injection_method"] = model.injection_method;
    m["lora_rank"] = model.lora_rank;
    m["lora_scale"] = fmt_double(model.lora_scale);
    m["lora_a_init"] = fmt_double(model.lora_a_init);
    m["gamma"] = fmt_double(model.gamma);
    m["seed"] = model.seed;
    m["latent_scale"] = fmt_double(model.latent_scale);
    m["proj_out_scale"] = fmt_double(model.proj_out_scale);
    m["scale_correction_by_signal"] = model.scale_correction_by_signal;
    m["timesteps"] = model.timesteps;
    m["beta_start"] = fmt_double(model.beta_start);
    m["beta_end"] = fmt_double(model.beta_end);
    j["model"] = m;
    ordered_json t;
    t["lora_rank"] = train.lora_rank;
    t["lora_scale"] = fmt_double(train.lora_scale);
    t["gamma"] = fmt_double(train.gamma);
    t["lambda_kml"] = fmt_double(train.lambda_kml);
    t["steps"] = train.steps;
    t["lr"] = fmt_double(train.lr);
    t["batch_size"] = train.batch_size;
    t["seed"] = train.seed;
    t["ablation_mode"] = train::to_string(train.ablation);
    t["train_extractor_gates"] = train.train_extractor_gates;
    j["train"] = t;
    ordered_json g;
    g["num_steps"] = generate.num_steps;
    g["seed"] = generate.seed;
    j["generate"] = g;
    ordered_json d;
    d["steps"] = distill.steps;
    d["lr"] = fmt_double(distill.lr);
    d["batch_size"] = distill.batch_size;
    d["seed"] = distill.seed;
    d["grid"] = distill.grid;
    j["distill"] = d;
    ordered_json dd;
    dd["relations"] = data.relations;
    dd["per_relation"] = data.per_relation;
    dd["seed"] = data.seed;
    j["data"] = dd;
    return j.dump(2) + "\n";
}

std::string RunConfig::resolved_hash() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(core::fnv1a64(canonical_json())));
    return buf;
}

}  // namespace relgen::cli

// SPDX-License-Identifier: Apache-2.0
#include "cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli/run_config.hpp"
#include "core/archive.hpp"
#include "data/pipeline.hpp"
#include "eval/metrics.hpp"
#include "eval/predicate.hpp"
#include "gen/generation.hpp"
#include "train/trainer.hpp"

namespace relgen::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    core::require(out.good(), "cannot write " + path);
    out << text;
}

RunConfig load_config_opt(const std::string& config_path) {
    return config_path.empty() ? RunConfig::defaults() : RunConfig::from_file(config_path);
}

std::string dataset_index_path(const std::string& data_arg) {
    fs::path p(data_arg);
    if (fs::is_directory(p)) p /= "dataset.json";
    core::require(fs::exists(p), "dataset index not found: " + p.string());
    return p.string();
}

// --- subcommand bodies ------------------------------------------------------

int cmd_data_build(const RunConfig& cfg, const std::string& client, const std::string& out_dir) {
    core::require(client == "mock" || client == "external",
                  "data build: --client must be mock or external");
    core::require(client != "external",
                  "data build: no external generative client is shipped; the client contract is "
                  "mock-only in this build (set credentials via RELGEN_CLIENT_TOKEN once an "
                  "external client exists)");
    data::DataBuildRequest req;
    req.relations.clear();
    for (const auto& r : cfg.data.relations)
        req.relations.push_back(data::relation_from_string(r));
    req.per_relation = cfg.data.per_relation;
    req.seed = cfg.data.seed;
    req.image_size = cfg.model.image_size;
    req.out_dir = out_dir;
    auto report = data::build_dataset_with_mock(req);
    write_text((fs::path(out_dir) / "resolved_config.json").string(), cfg.canonical_json());
    std::cout << "built " << report.triplet_manifests.size() << " triplets -> "
              << report.index_path << " (config " << cfg.resolved_hash() << ")\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data_arg, const std::string& out_dir) {
    auto dataset = train::load_dataset(dataset_index_path(data_arg));
    train::ModelConfig mc = cfg.model;
    mc.lora_rank = cfg.train.lora_rank;
    if (cfg.train.lora_scale > 0.0) mc.lora_scale = cfg.train.lora_scale;
    mc.gamma = cfg.train.gamma;
    train::Model model(mc);

    auto result = train::finetune(model, dataset, cfg.train);

    fs::create_directories(out_dir);
    core::WeightArchive ar = result.adapters;
    json meta = json::parse(ar.meta_json);
    meta["config_hash"] = cfg.resolved_hash();
    ar.meta_json = meta.dump();
    std::string adapters_path = (fs::path(out_dir) / "adapters.rgwt").string();
    core::save_archive(ar, adapters_path);
    write_text((fs::path(out_dir) / "train_log.jsonl").string(),
               train::format_train_log(result.log));
    write_text((fs::path(out_dir) / "resolved_config.json").string(), cfg.canonical_json());
    std::cout << "trained " << result.log.size() << " steps; final total "
              << result.log.back().total << "; adapters -> " << adapters_path << " (config "
              << cfg.resolved_hash() << ")\n";
    return 0;
}

int cmd_generate(const RunConfig& cfg, const std::string& manifest, const std::string& adapters,
                 const std::string& out_dir, bool make_grid) {
    auto requests = gen::load_request_manifest(manifest);
    core::require(!requests.empty(), "generate: empty request manifest");
    train::Model model(cfg.model);

    fs::create_directories(out_dir);
    std::vector<core::Image> outputs;
    for (std::size_t i = 0; i < requests.size(); ++i) {
        gen::GenerationRequest req = requests[i];
        if (req.adapter_archive.empty()) req.adapter_archive = adapters;
        if (req.seed == 0) req.seed = cfg.generate.seed + i;
        if (req.num_steps == 30 && cfg.generate.num_steps != 30)
            req.num_steps = cfg.generate.num_steps;
        auto result = gen::generate(model, req);

        char stem[32];
        std::snprintf(stem, sizeof(stem), "gen_%03zu", i);
        core::write_ppm(result.image, (fs::path(out_dir) / (std::string(stem) + ".ppm")).string());
        json meta = json::parse(result.metadata_json);
        meta["config_hash"] = cfg.resolved_hash();
        write_text((fs::path(out_dir) / (std::string(stem) + ".meta.json")).string(),
                   meta.dump(2) + "\n");
        outputs.push_back(std::move(result.image));
    }
    if (make_grid) {
        auto grid = gen::grid_report(requests, outputs);
        core::write_ppm(grid.grid, (fs::path(out_dir) / "grid.ppm").string());
        json side = json::parse(grid.sidecar_json);
        side["config_hash"] = cfg.resolved_hash();
        write_text((fs::path(out_dir) / "grid.json").string(), side.dump(2) + "\n");
    }
    std::cout << "generated " << outputs.size() << " image(s) -> " << out_dir << " (config "
              << cfg.resolved_hash() << ")\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& manifest, const std::string& outputs,
                 const std::string& backend, const std::string& backend_file,
                 const std::string& out_dir, bool full_image, const std::string& refs_dir) {
    std::shared_ptr<core::EmbeddingBackend> joint, vision;
    if (backend == "stub") {
        joint = core::make_stub_joint_backend();
        vision = core::make_stub_vision_backend();
    } else if (backend == "external") {
        core::require(!backend_file.empty(),
                      "evaluate: --backend external requires --backend-file <model.json>");
        joint = core::load_file_backend(backend_file);
        vision = core::make_stub_vision_backend();
    } else {
        core::fail_invalid("evaluate: --backend must be stub or external");
    }

    auto m = eval::load_bench_manifest(manifest);
    eval::BenchmarkOptions opts;
    opts.crop_to_box = !full_image;
    opts.config_hash = cfg.resolved_hash();
    std::string base = refs_dir.empty() ? fs::path(manifest).parent_path().string() : refs_dir;
    auto report = eval::run_benchmark(m, base, outputs, *joint, *vision, opts);
    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "report.json").string(), report.to_json());
    write_text((fs::path(out_dir) / "report.txt").string(), report.to_table());
    std::cout << report.to_table();
    std::cout << "report -> " << (fs::path(out_dir) / "report.json").string() << " ("
              << report.failed_cases << " failed case(s), config " << cfg.resolved_hash()
              << ")\n";
    return 0;
}

int cmd_distill(const RunConfig& cfg, const std::string& images_dir, const std::string& out_path) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(images_dir))
        if (e.path().extension() == ".ppm") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    core::require(!files.empty(), "distill: no .ppm images in " + images_dir);
    std::vector<core::Image> images;
    for (const auto& f : files) images.push_back(core::read_ppm(f));

    train::Model model(cfg.model);
    auto teacher = core::make_mean_color_backend(cfg.model.d_model);
    auto result = localenc::distill(model.local_encoder(), images, *teacher, cfg.distill);

    core::WeightArchive ar = model.export_local_encoder();
    json meta = json::parse(ar.meta_json);
    meta["config_hash"] = cfg.resolved_hash();
    meta["distill_final_loss"] = result.final_loss;
    ar.meta_json = meta.dump();
    fs::create_directories(fs::path(out_path).parent_path().empty()
                               ? "."
                               : fs::path(out_path).parent_path().string());
    core::save_archive(ar, out_path);
    std::cout << "distilled " << cfg.distill.steps << " steps on " << images.size()
              << " images; final loss " << result.final_loss << "; weights -> " << out_path
              << " (config " << cfg.resolved_hash() << ")\n";
    return 0;
}

// 2-component PCA via power iteration with deflation; deterministic.
std::vector<std::array<double, 2>> pca2(const core::Tensor& tokens) {
    std::size_t n = tokens.rows(), d = tokens.cols();
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += tokens.at(i, j) / n;
    core::Tensor cov({d, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                cov.at(a, b) += (tokens.at(i, a) - mean[a]) * (tokens.at(i, b) - mean[b]) / n;

    std::vector<std::vector<double>> comps;
    for (int c = 0; c < 2; ++c) {
        std::vector<double> v(d);
        for (std::size_t j = 0; j < d; ++j) v[j] = 1.0 / std::sqrt(static_cast<double>(d));
        for (int it = 0; it < 256; ++it) {
            std::vector<double> w(d, 0.0);
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t b = 0; b < d; ++b) w[a] += cov.at(a, b) * v[b];
            for (const auto& prev : comps) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += w[j] * prev[j];
                for (std::size_t j = 0; j < d; ++j) w[j] -= dot * prev[j];
            }
            double norm = 0.0;
            for (double x : w) norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-12) break;
            for (std::size_t j = 0; j < d; ++j) v[j] = w[j] / norm;
        }
        comps.push_back(v);
    }
    std::vector<std::array<double, 2>> out(n);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 2; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                acc += (tokens.at(i, j) - mean[j]) * comps[c][j];
            out[i][c] = acc;
        }
    return out;
}

int cmd_inspect(const RunConfig& cfg, const std::string& image_path,
                const std::string& weights_path, const std::string& out_path, std::size_t grid) {
    core::Image img = core::read_ppm(image_path);
    train::Model model(cfg.model);
    if (!weights_path.empty()) model.import_local_encoder(core::load_archive(weights_path));

    std::size_t g = grid == 0 ? cfg.model.local_grid : grid;
    auto map = model.local_encoder().dense_map(img);
    auto tokens = localenc::partition_pool(map, g);
    auto pca = pca2(tokens);

    ordered_json j;
    j["image"] = image_path;
    j["grid"] = g;
    j["token_dim"] = tokens.cols();
    j["config_hash"] = cfg.resolved_hash();
    ordered_json toks = ordered_json::array();
    for (std::size_t i = 0; i < tokens.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (std::size_t c = 0; c < tokens.cols(); ++c) row.push_back(tokens.at(i, c));
        toks.push_back(row);
    }
    j["tokens"] = toks;
    ordered_json proj = ordered_json::array();
    for (const auto& p : pca) proj.push_back({p[0], p[1]});
    j["pca"] = proj;
    write_text(out_path, j.dump(2) + "\n");
    std::cout << "local tokens (" << tokens.rows() << " x " << tokens.cols() << ") -> "
              << out_path << "\n";
    return 0;
}

int cmd_ablate(const RunConfig& base_cfg, const std::string& data_arg,
               const std::vector<std::string>& axes, const std::string& out_dir) {
    static const std::map<std::string, std::vector<std::string>> kAxisValues = {
        {"lambda", {"1e-2", "1e-3", "1e-4"}},
        {"num_local_tokens", {"2", "4", "8"}},
        {"injection_method", {"add", "linear_projection", "concatenate"}},
        {"ablation_mode", {"full", "blank_image_prompt", "no_kml", "no_local_tokens"}},
    };
    core::require(!axes.empty(), "ablate: at least one axis required");
    std::size_t combos = 1;
    for (const auto& ax : axes) {
        core::require(kAxisValues.count(ax), "ablate: unknown axis " + ax);
        combos *= kAxisValues.at(ax).size();
    }
    core::require(combos <= 32, "ablate: combinatorial budget exceeded (" +
                                    std::to_string(combos) + " > 32 runs)");

    auto dataset = train::load_dataset(dataset_index_path(data_arg));
    fs::create_directories(out_dir);

    // enumerate the cartesian product in axis order
    std::vector<std::map<std::string, std::string>> runs(1);
    for (const auto& ax : axes) {
        std::vector<std::map<std::string, std::string>> next;
        for (const auto& partial : runs)
            for (const auto& v : kAxisValues.at(ax)) {
                auto m = partial;
                m[ax] = v;
                next.push_back(std::move(m));
            }
        runs = std::move(next);
    }

    auto stub_joint = core::make_stub_joint_backend();
    auto stub_vision = core::make_stub_vision_backend();

    std::string table = "run  " + std::string("setting").append(34, ' ') +
                        "CLIP-T  CLIP-R  CLIP-I  DINO\n";
    ordered_json results = ordered_json::array();
    for (std::size_t r = 0; r < runs.size(); ++r) {
        RunConfig cfg = base_cfg;
        std::string label;
        for (const auto& [ax, v] : runs[r]) {
            label += ax + "=" + v + " ";
            if (ax == "lambda") cfg.train.lambda_kml = std::stod(v);
            if (ax == "num_local_tokens") cfg.model.local_grid = std::stoul(v);
            if (ax == "injection_method") cfg.model.injection_method = v;
            if (ax == "ablation_mode") cfg.train.ablation = train::ablation_from_string(v);
        }

        train::ModelConfig mc = cfg.model;
        mc.lora_rank = cfg.train.lora_rank;
        mc.gamma = cfg.train.gamma;
        train::Model model(mc);
        auto ft = train::finetune(model, dataset, cfg.train);

        // evaluate on the first few triplets: generate with the trained
        // adapters and score against the prompt images
        fs::path run_dir = fs::path(out_dir) / ("run_" + std::to_string(r));
        fs::create_directories(run_dir / "refs");
        fs::create_directories(run_dir / "outputs");
        eval::BenchManifest bench;
        std::size_t n_eval = std::min<std::size_t>(4, dataset.size());
        for (std::size_t i = 0; i < n_eval; ++i) {
            const train::Triplet& trip = dataset[i];
            eval::BenchCase bc;
            bc.case_id = "case_" + std::to_string(i);
            gen::GenerationRequest req;
            req.text_prompt = trip.text;
            for (std::size_t s = 0; s < trip.object_count(); ++s) {
                std::string ref_name = "refs/c" + std::to_string(i) + "_s" + std::to_string(s) +
                                       ".ppm";
                core::write_ppm(trip.prompts[s], (run_dir / ref_name).string());
                std::string noun = trip.captions[1 + s];
                bc.subjects.push_back({ref_name, noun});
                req.subjects.push_back({ref_name, trip.prompts[s], noun, trip.boxes[s]});
            }
            bc.prompt = trip.text;
            req.seed = 1000 + i;
            req.num_steps = cfg.generate.num_steps;
            auto gen_result = gen::generate(model, req);
            core::write_ppm(gen_result.image,
                            (run_dir / "outputs" / (bc.case_id + ".ppm")).string());
            bench.cases.push_back(std::move(bc));
        }
        eval::BenchmarkOptions opts;
        opts.config_hash = cfg.resolved_hash();
        auto report = eval::run_benchmark(bench, run_dir.string(),
                                          (run_dir / "outputs").string(), *stub_joint,
                                          *stub_vision, opts);
        write_text((run_dir / "report.json").string(), report.to_json());

        char buf[256];
        std::snprintf(buf, sizeof(buf), "%-4zu %-40s %6.1f  %6.1f  %6.1f  %6.1f\n", r,
                      label.c_str(), report.aggregates["clip_t"], report.aggregates["clip_r"],
                      report.aggregates["clip_i"], report.aggregates["dino"]);
        table += buf;
        ordered_json jr;
        jr["run"] = r;
        jr["setting"] = runs[r];
        jr["aggregates"] = report.aggregates;
        jr["final_train_loss"] = ft.log.back().total;
        results.push_back(jr);
    }

    write_text((fs::path(out_dir) / "ablation_table.txt").string(), table);
    ordered_json j;
    j["axes"] = axes;
    j["results"] = results;
    j["config_hash"] = base_cfg.resolved_hash();
    write_text((fs::path(out_dir) / "ablation.json").string(), j.dump(2) + "\n");
    std::cout << table;
    return 0;
}

int cmd_bench_refs(const std::string& manifest, const std::string& out_dir,
                   std::size_t image_size) {
    auto m = eval::load_bench_manifest(manifest);
    fs::create_directories(out_dir);
    std::set<std::string> written;
    std::size_t count = 0;
    for (const auto& c : m.cases)
        for (const auto& s : c.subjects) {
            if (written.count(s.ref_image)) continue;
            fs::path p = fs::path(out_dir) / s.ref_image;
            fs::create_directories(p.parent_path());
            core::write_ppm(data::render_reference_image(s.class_noun, image_size), p.string());
            written.insert(s.ref_image);
            ++count;
        }
    std::cout << "materialized " << count << " reference image(s) -> " << out_dir << "\n";
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"relation-aware customized image generation, desk scale"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_arg, client = "mock";
    std::string manifest, adapters, outputs_dir, backend = "stub", backend_file;
    std::string image_path, weights_path, out_path, images_dir, refs_dir;
    std::vector<std::string> axes;
    bool make_grid = false, full_image = false;
    std::size_t grid = 0, image_size = 64;
    // flag overrides (applied over config-file values when the flag is given)
    double f_lambda = -1.0, f_gamma = -1.0, f_lr = -1.0;
    long long f_steps = -1, f_seed = -1, f_gen_steps = -1;
    std::string f_ablation;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
    };
    auto add_train_overrides = [&](CLI::App* cmd) {
        cmd->add_option("--steps", f_steps, "override train.steps");
        cmd->add_option("--seed", f_seed, "override train.seed");
        cmd->add_option("--lambda", f_lambda, "override train.lambda_kml");
        cmd->add_option("--gamma", f_gamma, "override train.gamma");
        cmd->add_option("--lr", f_lr, "override train.lr");
        cmd->add_option("--ablation", f_ablation, "override train.ablation_mode");
    };

    auto* c_data = app.add_subcommand("data", "data engine");
    auto* c_build = c_data->add_subcommand("build", "build a triplet dataset");
    add_config(c_build);
    c_build->add_option("--relations", manifest, "relations JSON file");
    c_build->add_option("--client", client, "mock|external")->capture_default_str();
    c_build->add_option("--out", out_dir, "output directory")->required();
    c_build->add_option("--seed", f_seed, "override data.seed");

    auto* c_train = app.add_subcommand("train", "fine-tune relation adapters");
    add_config(c_train);
    c_train->add_option("--data", data_arg, "dataset dir or index JSON")->required();
    c_train->add_option("--out", out_dir, "output directory")->required();
    add_train_overrides(c_train);

    auto* c_gen = app.add_subcommand("generate", "sample images from a request manifest");
    add_config(c_gen);
    c_gen->add_option("--manifest", manifest, "request manifest JSON")->required();
    c_gen->add_option("--adapters", adapters, "adapter archive");
    c_gen->add_option("--out", out_dir, "output directory")->required();
    c_gen->add_option("--seed", f_seed, "override generate.seed");
    c_gen->add_option("--steps", f_gen_steps, "override generate.num_steps");
    c_gen->add_flag("--grid", make_grid, "also write a comparison grid");

    auto* c_eval = app.add_subcommand("evaluate", "score generated outputs");
    add_config(c_eval);
    c_eval->add_option("--manifest", manifest, "benchmark manifest JSON")->required();
    c_eval->add_option("--outputs", outputs_dir, "directory of <case_id>.ppm images")->required();
    c_eval->add_option("--backend", backend, "stub|external")->capture_default_str();
    c_eval->add_option("--backend-file", backend_file, "external backend model file");
    c_eval->add_option("--refs", refs_dir, "base directory for relative ref_image paths");
    c_eval->add_option("--out", out_dir, "output directory")->required();
    c_eval->add_flag("--full-image", full_image, "embed full images instead of subject crops");

    auto* c_distill = app.add_subcommand("distill", "align local tokens to a frozen teacher");
    add_config(c_distill);
    c_distill->add_option("--images", images_dir, "directory of .ppm training images")->required();
    c_distill->add_option("--out", out_path, "output weight archive")->required();
    c_distill->add_option("--steps", f_steps, "override distill.steps");
    c_distill->add_option("--seed", f_seed, "override distill.seed");

    auto* c_inspect = app.add_subcommand("inspect", "inspection tools");
    auto* c_tokens = c_inspect->add_subcommand("local-tokens",
                                               "dump local tokens and their 2-component PCA");
    add_config(c_tokens);
    c_tokens->add_option("--image", image_path, "input image (.ppm)")->required();
    c_tokens->add_option("--weights", weights_path, "local-encoder weight archive");
    c_tokens->add_option("--out", out_path, "output JSON")->required();
    c_tokens->add_option("--grid", grid, "partition grid g (default from config)");

    auto* c_ablate = app.add_subcommand("ablate", "train+evaluate over ablation axes");
    add_config(c_ablate);
    c_ablate->add_option("--data", data_arg, "dataset dir or index JSON")->required();
    c_ablate
        ->add_option("--axes", axes,
                     "axes: lambda,num_local_tokens,injection_method,ablation_mode")
        ->required()
        ->delimiter(',');
    c_ablate->add_option("--out", out_dir, "output directory")->required();
    add_train_overrides(c_ablate);

    auto* c_bench = app.add_subcommand("bench", "benchmark utilities");
    auto* c_refs = c_bench->add_subcommand("refs", "materialize procedural reference images");
    c_refs->add_option("--manifest", manifest, "benchmark manifest JSON")->required();
    c_refs->add_option("--out", out_dir, "output directory")->required();
    c_refs->add_option("--image-size", image_size, "reference image size");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg = load_config_opt(config_path);
        // flags override the config file
        if (f_steps >= 0) {
            cfg.train.steps = static_cast<std::size_t>(f_steps);
            cfg.distill.steps = static_cast<std::size_t>(f_steps);
        }
        if (f_seed >= 0) {
            cfg.train.seed = static_cast<std::uint64_t>(f_seed);
            cfg.generate.seed = static_cast<std::uint64_t>(f_seed);
            cfg.distill.seed = static_cast<std::uint64_t>(f_seed);
            cfg.data.seed = static_cast<std::uint64_t>(f_seed);
        }
        if (f_gen_steps >= 0) cfg.generate.num_steps = static_cast<std::size_t>(f_gen_steps);
        if (f_lambda >= 0) cfg.train.lambda_kml = f_lambda;
        if (f_gamma >= 0) cfg.train.gamma = f_gamma;
        if (f_lr >= 0) cfg.train.lr = f_lr;
        if (!f_ablation.empty()) cfg.train.ablation = train::ablation_from_string(f_ablation);

        if (c_build->parsed()) {
            if (!manifest.empty()) {
                std::ifstream in(manifest);
                core::require(in.good(), "data build: cannot open relations file " + manifest);
                std::string text((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
                cfg.apply_json_text("{\"data\": " + text + "}", manifest);
            }
            return cmd_data_build(cfg, client, out_dir);
        }
        if (c_train->parsed()) return cmd_train(cfg, data_arg, out_dir);
        if (c_gen->parsed()) return cmd_generate(cfg, manifest, adapters, out_dir, make_grid);
        if (c_eval->parsed())
            return cmd_evaluate(cfg, manifest, outputs_dir, backend, backend_file, out_dir,
                                full_image, refs_dir);
        if (c_distill->parsed()) return cmd_distill(cfg, images_dir, out_path);
        if (c_tokens->parsed())
            return cmd_inspect(cfg, image_path, weights_path, out_path, grid);
        if (c_ablate->parsed()) return cmd_ablate(cfg, data_arg, axes, out_dir);
        if (c_refs->parsed()) return cmd_bench_refs(manifest, out_dir, image_size);
        std::cerr << app.help();
        return 1;
    } catch (const core::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == core::ErrorKind::invalid_input ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int dispatch(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args);
}

}  // namespace relgen::cli

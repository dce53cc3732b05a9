// nht: fit HDR images with neural harmonic textures on an adaptive
// triangle mesh, render/compress the resulting containers, and run the 2D
// splat compositor demo.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "nht/codec.hpp"
#include "nht/metrics.hpp"
#include "nht/trainer.hpp"

using namespace nht;

namespace {

HdrImage render_model_linear(const Model& model) {
    if (model.mode == ModelMode::MeshFit) return render_mesh(model.mesh);
    HdrImage disp = render_splat_display(model.splat);
    // splat fits live in display space; lift back to linear for HDR outputs
    HdrImage out(disp.width, disp.height, 3, kDefaultWhiteLevel);
    for (size_t i = 0; i < disp.data.size(); ++i)
        out.data[i] = float(std::pow(double(disp.data[i]), 2.2) * out.white_level);
    return out;
}

void write_output_image(const HdrImage& linear, const std::string& path,
                        bool tonemap_png) {
    if (tonemap_png)
        save_png16(tonemap(linear), path);
    else
        save_pfm(linear, path);
}

QuantSpec parse_quantize(const std::string& s) {
    QuantSpec q{false, false, false, true};
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "int8") q.features_i8 = true;
        else if (item == "uint16") q.positions_u16 = true;
        else if (item == "fp16") q.mlp_f16 = true;
        else if (item == "none") {}
        else throw NhtError("unknown quantize option: " + item);
    }
    return q;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural harmonic texture image fitting"};
    app.require_subcommand(1);

    std::string image_path, model_path, out_path, config_path, scene_path;
    std::string mode = "mesh", quantize = "int8,uint16,fp16";
    bool tonemap_png = false;
    std::vector<std::string> overrides;

    auto* fit = app.add_subcommand("fit", "fit an image and write a model container");
    fit->add_option("image", image_path, "input image (.pfm or .png)")->required();
    fit->add_option("--config", config_path, "key=value config file");
    fit->add_option("--out", out_path, "output model path")->required();
    fit->add_option("--mode", mode, "mesh|splat")->check(CLI::IsMember({"mesh", "splat"}));
    fit->add_option("--set", overrides, "config override key=value")->take_all();
    fit->add_option("--log", model_path, "training log path (JSON lines; default <out>.log)");

    auto* render = app.add_subcommand("render", "decode a model to an image");
    render->add_option("model", model_path, "model container")->required();
    render->add_option("--out", out_path, "output image (.pfm, or .png with --tonemap)")
        ->required();
    render->add_flag("--tonemap", tonemap_png, "write a tonemapped 16-bit PNG");

    auto* compress = app.add_subcommand("compress", "re-encode with quantization");
    compress->add_option("model", model_path)->required();
    compress->add_option("--quantize", quantize, "comma list: int8,uint16,fp16");
    compress->add_option("--out", out_path)->required();

    auto* decompress = app.add_subcommand("decompress", "re-encode as lossless floats");
    decompress->add_option("model", model_path)->required();
    decompress->add_option("--out", out_path)->required();

    auto* eval = app.add_subcommand("eval", "print metrics against a reference image");
    eval->add_option("model", model_path)->required();
    eval->add_option("reference", image_path)->required();

    auto* demo = app.add_subcommand("splat-demo", "render a splat scene file");
    demo->add_option("--scene", scene_path)->required();
    demo->add_option("--out", out_path)->required();
    demo->add_flag("--tonemap", tonemap_png, "write a tonemapped 16-bit PNG");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit->parsed()) {
            TrainConfig cfg = config_path.empty() ? TrainConfig{}
                                                  : load_train_config(config_path);
            for (const std::string& kv : overrides) {
                auto eq = kv.find('=');
                if (eq == std::string::npos)
                    throw NhtError("--set expects key=value, got " + kv);
                set_config_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
            }
            HdrImage img = load_image(image_path);
            std::string log_path = model_path.empty() ? out_path + ".log" : model_path;
            std::ofstream log(log_path);
            if (!log) throw NhtError("cannot write log: " + log_path);
            LogSink sink = [&log](const std::string& line) { log << line << "\n"; };
            Model model;
            if (mode == "mesh") {
                model.mode = ModelMode::MeshFit;
                model.mesh = fit_image(img, cfg, sink);
            } else {
                model.mode = ModelMode::Splat;
                model.splat = fit_splats(img, cfg, sink);
            }
            save_model(model, QuantSpec{false, false, false, false}, out_path);
            std::printf("wrote %s (log: %s)\n", out_path.c_str(), log_path.c_str());
        } else if (render->parsed()) {
            Model model = load_model(model_path);
            write_output_image(render_model_linear(model), out_path, tonemap_png);
            std::printf("wrote %s\n", out_path.c_str());
        } else if (compress->parsed()) {
            Model model = load_model(model_path);
            save_model(model, parse_quantize(quantize), out_path);
            std::printf("wrote %s\n", out_path.c_str());
        } else if (decompress->parsed()) {
            Model model = load_model(model_path);
            save_model(model, QuantSpec{false, false, false, false}, out_path);
            std::printf("wrote %s\n", out_path.c_str());
        } else if (eval->parsed()) {
            Model model = load_model(model_path);
            HdrImage ref = load_image(image_path);
            HdrImage pred = render_model_linear(model);
            if (pred.width != ref.width || pred.height != ref.height)
                throw NhtError("eval: model and reference dimensions differ");
            MuLawParams p = model.mode == ModelMode::MeshFit
                                ? model.mesh.mulaw()
                                : MuLawParams{kDefaultMu, ref.white_level};
            double psnr_mu = psnr(pred, ref, MetricSpace::MuLaw, p);
            double psnr_tm = psnr(pred, ref, MetricSpace::Tonemapped);
            double ssim_tm = ssim_map(tonemap(pred), tonemap(ref)).mean;
            std::printf("%-12s %10s %10s %10s\n", "", "PSNR_mu", "PSNR_tm", "SSIM_tm");
            std::printf("%-12s %10.2f %10.2f %10.4f\n", "model", psnr_mu, psnr_tm,
                        ssim_tm);
        } else if (demo->parsed()) {
            SplatScene scene = load_splat_scene(scene_path);
            scene.set.sort_by_depth();
            Rng rng(scene.seed);
            std::vector<int> dims{2 * scene.n_f + 9};
            for (int l = 0; l < scene.hidden_layers; ++l)
                dims.push_back(scene.hidden_width);
            dims.push_back(3);
            MlpParams mlp = make_mlp(dims, rng);
            PinholeCamera cam;
            RenderStats stats;
            HdrImage disp = render_deferred(scene.set, mlp, scene.width, scene.height,
                                            cam, scene.dir_scale, 1e-4, &stats);
            HdrImage linear(disp.width, disp.height, 3, kDefaultWhiteLevel);
            for (size_t i = 0; i < disp.data.size(); ++i)
                linear.data[i] =
                    float(std::pow(double(disp.data[i]), 2.2) * linear.white_level);
            write_output_image(linear, out_path, tonemap_png);
            std::printf("wrote %s (%llu mlp evals)\n", out_path.c_str(),
                        static_cast<unsigned long long>(stats.mlp_evals));
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

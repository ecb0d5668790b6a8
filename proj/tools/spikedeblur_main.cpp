// Command-line driver: dataset synthesis, reconstruction and evaluation for
// spike-guided deblurring. Every option of every subcommand can also be given
// through a flat key=value config file (--config); command-line flags win.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "spikedeblur/spikedeblur.hpp"

namespace fs = std::filesystem;
using namespace spikedeblur;

namespace {

// Flat key=value config support. CLI11's own config hook only fires on the
// root app, so the file is expanded into ordinary flags before parsing;
// command-line flags always win because file keys that already appear on the
// command line are dropped.

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open: " + path);
    std::vector<std::pair<std::string, std::string>> items;
    std::string line;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(lineno) +
                                     " is not key=value: " + t);
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("config: empty key at line " + std::to_string(lineno));
        items.emplace_back(key, value);
    }
    return items;
}

bool truthy(const std::string& v) {
    return v == "1" || v == "true" || v == "yes" || v == "on";
}

bool is_flag_key(const std::string& key) { return key == "unclamped" || key == "tiling"; }

/// argv with the config file expanded after the subcommand token.
std::vector<std::string> merge_config_args(const std::vector<std::string>& args) {
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (config_path.empty() || args.empty() || args[0].empty() || args[0][0] == '-') return args;

    const auto given_on_cli = [&](const std::string& key) {
        const std::string flag = "--" + key;
        for (const std::string& a : args)
            if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
        return false;
    };

    std::vector<std::string> merged;
    merged.push_back(args[0]);  // subcommand
    for (const auto& [key, value] : read_config_file(config_path)) {
        if (given_on_cli(key)) continue;
        if (is_flag_key(key)) {
            if (truthy(value)) merged.push_back("--" + key);
            continue;
        }
        merged.push_back("--" + key);
        if (key == "weights") {
            // the one multi-value option: space- or comma-separated triple
            std::string token;
            for (char c : value) {
                if (c == ' ' || c == '\t' || c == ',') {
                    if (!token.empty()) merged.push_back(std::exchange(token, {}));
                } else {
                    token.push_back(c);
                }
            }
            if (!token.empty()) merged.push_back(token);
        } else {
            merged.push_back(value);
        }
    }
    merged.insert(merged.end(), args.begin() + 1, args.end());
    return merged;
}

struct CliOptions {
    PipelineConfig cfg;
    std::string config_path;
    std::string recon_dir;
    std::string reset_mode = "zero";
    std::string bit_order = "lsb";
    std::vector<double> weights;  // r,g,b override
    int raw_width = 0;
    int raw_height = 0;
    int raw_frames = 0;
    int window_start = 0;
    int window_len = 0;  // 0 = full stream
    int start_frame = 0;
    int supersample = 1;
    int png_bits = 8;

    void resolve() {
        if (reset_mode == "zero")
            cfg.reset_mode = ResetMode::reset_to_zero;
        else if (reset_mode == "subtract")
            cfg.reset_mode = ResetMode::reset_subtract;
        else
            throw CLI::ValidationError("--reset-mode must be 'zero' or 'subtract'");
        if (bit_order != "lsb" && bit_order != "msb")
            throw CLI::ValidationError("--bit-order must be 'lsb' or 'msb'");
        if (!weights.empty()) {
            if (weights.size() != 3)
                throw CLI::ValidationError("--weights expects three values r,g,b");
            cfg.weights = GrayscaleWeights{weights[0], weights[1], weights[2]};
            cfg.weights.validate();
        }
        cfg.temporal_supersample = supersample;
        cfg.png_bits = png_bits;
    }

    BitOrder order() const {
        return bit_order == "msb" ? BitOrder::msb_first : BitOrder::lsb_first;
    }
};

void add_io_options(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--config", o.config_path, "flat key=value config file (flags win)");
    cmd->add_option("--input", o.cfg.input, "input directory or file");
    cmd->add_option("--output", o.cfg.output_dir, "output directory or file");
}

void add_simulation_options(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--threshold", o.cfg.threshold, "firing threshold C");
    cmd->add_option("--reset-mode", o.reset_mode, "integrator reset: zero|subtract");
    cmd->add_option("--seed", o.cfg.seed, "random seed");
    cmd->add_option("--noise-spurious", o.cfg.noise_spurious, "spurious spike probability");
    cmd->add_option("--noise-drop", o.cfg.noise_drop, "spike drop probability");
    cmd->add_option("--dark-current", o.cfg.dark_current, "dark current per pixel per step");
    cmd->add_option("--supersample", o.supersample, "integration substeps per spike frame");
    cmd->add_option("--weights", o.weights, "grayscale weights r,g,b")->expected(3);
}

void add_raw_options(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--raw-spike-width", o.raw_width, "width for headerless spike dumps");
    cmd->add_option("--raw-spike-height", o.raw_height, "height for headerless spike dumps");
    cmd->add_option("--raw-spike-frames", o.raw_frames, "frame count for headerless dumps (0 = infer)");
    cmd->add_option("--bit-order", o.bit_order, "bit packing of raw dumps: lsb|msb");
}

SpikeStream load_stream(const CliOptions& o) {
    if (o.raw_width > 0 || o.raw_height > 0) {
        if (o.raw_width < 1 || o.raw_height < 1)
            throw std::runtime_error("raw import needs both --raw-spike-width and --raw-spike-height");
        return import_raw_file(o.cfg.input, o.raw_width, o.raw_height, o.raw_frames, o.order());
    }
    return load_spk1(o.cfg.input);
}

void print_kv(const char* key, const std::string& value) {
    std::cout << key << " = " << value << '\n';
}

void print_common_config(const CliOptions& o) {
    print_kv("input", o.cfg.input);
    print_kv("output", o.cfg.output_dir);
    print_kv("threshold", std::to_string(o.cfg.threshold));
    print_kv("reset_mode", o.reset_mode);
    print_kv("seed", std::to_string(o.cfg.seed));
}

FrameSequence load_frames_range(const std::string& dir, int start, int count) {
    const std::vector<fs::path> paths = list_png_frames(dir);
    if (count == 0) count = static_cast<int>(paths.size()) - start;
    if (start < 0 || count < 1 || start + count > static_cast<int>(paths.size()))
        throw std::runtime_error("frame range out of bounds");
    FrameSequence seq;
    for (int i = start; i < start + count; ++i) seq.frames.push_back(load_png(paths[i].string()));
    seq.validate("frames");
    return seq;
}

int run_simulate(CliOptions& o) {
    print_common_config(o);
    print_kv("downsample", std::to_string(o.cfg.spike_downsample));
    print_kv("noise_spurious", std::to_string(o.cfg.noise_spurious));
    print_kv("supersample", std::to_string(o.cfg.temporal_supersample));

    FrameSequence seq = load_frames_range(o.cfg.input, 0, 0);
    FrameSequence gray;
    gray.frame_duration = seq.frame_duration;
    for (const Image& f : seq.frames) {
        Image g = f.channels == 3 ? to_grayscale(f, o.cfg.weights) : f;
        gray.frames.push_back(downsample_area(g, o.cfg.spike_downsample));
    }

    SimulatorConfig sim;
    sim.threshold = o.cfg.threshold;
    sim.reset_mode = o.cfg.reset_mode;
    sim.dark_current = o.cfg.dark_current;
    sim.spurious_spike_prob = o.cfg.noise_spurious;
    sim.seed = o.cfg.seed;
    sim.temporal_supersample = o.cfg.temporal_supersample;

    SimulationResult res = simulate_spikes(gray, sim);
    SpikeStream stream = o.cfg.noise_drop > 0.0
                             ? inject_noise_profile(res.stream, 0.0, o.cfg.noise_drop, o.cfg.seed + 1)
                             : std::move(res.stream);

    fs::path out = o.cfg.output_dir;
    if (out.extension() != ".spk1") {
        fs::create_directories(out);
        out /= "spikes.spk1";
    } else if (out.has_parent_path()) {
        fs::create_directories(out.parent_path());
    }
    save_spk1(out.string(), stream);
    std::cout << "wrote " << out.string() << " (" << stream.width << "x" << stream.height << "x"
              << stream.num_frames << ")\n";
    return 0;
}

int run_blur(CliOptions& o) {
    print_kv("input", o.cfg.input);
    print_kv("output", o.cfg.output_dir);
    print_kv("start", std::to_string(o.start_frame));
    print_kv("frames_per_blur", std::to_string(o.cfg.blur_len));

    FrameSequence seq = load_frames_range(o.cfg.input, o.start_frame, o.cfg.blur_len);
    Image blur = synthesize_blur(seq, 0, seq.size());

    fs::path out = o.cfg.output_dir;
    if (out.extension() != ".png") {
        fs::create_directories(out);
        out /= "blur.png";
    } else if (out.has_parent_path()) {
        fs::create_directories(out.parent_path());
    }
    save_png(out.string(), blur, o.png_bits);
    std::cout << "wrote " << out.string() << '\n';
    return 0;
}

int run_tfp(CliOptions& o) {
    print_common_config(o);
    const SpikeStream stream = load_stream(o);
    WindowSpec window{o.window_start, o.window_len > 0 ? o.window_len : stream.num_frames};
    print_kv("window", "[" + std::to_string(window.start_frame) + ", " +
                           std::to_string(window.end_frame()) + ")");

    Image tfp = tfp_reconstruct(stream, window, o.cfg.threshold);

    fs::path out = o.cfg.output_dir;
    if (out.extension() != ".png") {
        fs::create_directories(out);
        out /= "tfp.png";
    } else if (out.has_parent_path()) {
        fs::create_directories(out.parent_path());
    }
    save_png(out.string(), tfp, o.png_bits);  // clamps to [0,1]
    if (o.cfg.unclamped) {
        fs::path raw = out;
        raw.replace_extension(".rawf");
        save_rawf(raw.string(), tfp);
    }
    std::cout << "wrote " << out.string() << '\n';
    return 0;
}

int run_deblur(CliOptions& o) {
    print_kv("input", o.cfg.input);
    print_kv("output", o.cfg.output_dir);

    DatasetManifest manifest;
    SpikeStream stream;
    if (fs::path(o.cfg.input).extension() == ".json") {
        manifest = load_manifest(o.cfg.input);
        stream = load_spk1(manifest.resolve(manifest.spike_path).string());
        if (o.cfg.tiling) {
            for (BlurRecord& r : manifest.records)
                r.timestamps = tiling_timestamps(r.spike_window.start_frame,
                                                 r.spike_window.len_frames,
                                                 static_cast<int>(r.timestamps.size()));
            manifest.short_len =
                manifest.records.front().spike_window.len_frames /
                static_cast<int>(manifest.records.front().timestamps.size());
        }
    } else {
        // Explicit pair: one record spanning the whole stream.
        if (o.cfg.blurry_path.empty())
            throw std::runtime_error("deblur needs a manifest or --input <spk1> with --blurry <png>");
        stream = load_stream(o);
        manifest.base_dir = "";
        manifest.spike_path = o.cfg.input;
        manifest.spike_downsample = o.cfg.spike_downsample;
        manifest.frame_duration = stream.frame_duration;
        manifest.num_outputs = o.cfg.num_outputs;
        manifest.short_len = o.cfg.kprime;

        BlurRecord r;
        r.id = "blur_0000";
        r.blurry_path = o.cfg.blurry_path;
        r.spike_window = {0, stream.num_frames};
        r.timestamps = o.cfg.tiling ? tiling_timestamps(0, stream.num_frames, o.cfg.num_outputs)
                                    : default_timestamps(0, stream.num_frames, o.cfg.num_outputs);
        manifest.records.push_back(std::move(r));
    }

    if (o.cfg.kprime > 0) manifest.short_len = o.cfg.kprime;
    if (o.cfg.tiling)
        manifest.short_len = manifest.records.front().spike_window.len_frames /
                             static_cast<int>(manifest.records.front().timestamps.size());
    if (manifest.short_len <= 0)
        manifest.short_len = ExposureSpec::default_short_len(
            manifest.records.front().spike_window.len_frames);
    print_kv("kprime", std::to_string(manifest.short_len));
    print_kv("num_outputs", std::to_string(manifest.num_outputs));

    deblur_dataset(manifest, o.cfg, stream);
    std::cout << "wrote " << manifest.records.size() * manifest.records.front().timestamps.size()
              << " reconstructions to " << o.cfg.output_dir << '\n';
    return 0;
}

int run_synthesize(CliOptions& o) {
    print_common_config(o);
    print_kv("frames_per_blur", std::to_string(o.cfg.blur_len));
    print_kv("downsample", std::to_string(o.cfg.spike_downsample));
    print_kv("num_outputs", std::to_string(o.cfg.num_outputs));

    DatasetManifest manifest = synthesize_dataset(o.cfg);
    std::cout << "wrote " << manifest.records.size() << " records to " << o.cfg.output_dir << '\n';
    return 0;
}

int run_eval(CliOptions& o) {
    print_kv("input", o.cfg.input);
    print_kv("recon", o.recon_dir);
    print_kv("output", o.cfg.output_dir);

    const DatasetManifest manifest = load_manifest(o.cfg.input);
    const EvaluationSummary summary = evaluate_dataset(manifest, o.recon_dir, o.cfg);
    write_evaluation_reports(summary, o.cfg.output_dir);
    std::cout << "mean_psnr = " << summary.mean_psnr << "\nmean_ssim = " << summary.mean_ssim
              << "\nmean_reblur_mse = " << summary.mean_reblur_mse << '\n';
    return 0;
}

int run_pipeline(CliOptions& o) {
    const fs::path root = o.cfg.output_dir;

    CliOptions synth = o;
    synth.cfg.output_dir = (root / "dataset").string();
    run_synthesize(synth);

    CliOptions deb = o;
    deb.cfg.input = (root / "dataset" / "manifest.json").string();
    deb.cfg.output_dir = (root / "recon").string();
    run_deblur(deb);

    CliOptions ev = o;
    ev.cfg.input = (root / "dataset" / "manifest.json").string();
    ev.recon_dir = (root / "recon").string();
    ev.cfg.output_dir = (root / "reports").string();
    return run_eval(ev);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spike-camera simulation, motion-blur synthesis and spike-guided deblurring",
                 "spikedeblur"};
    app.require_subcommand(1);

    CliOptions o;

    CLI::App* simulate = app.add_subcommand("simulate", "simulate a spike stream from PNG frames");
    add_io_options(simulate, o);
    add_simulation_options(simulate, o);
    simulate->add_option("--downsample", o.cfg.spike_downsample, "area-downsample factor");
    simulate->add_option("--png-bits", o.png_bits, "PNG bit depth for emitted images");

    CLI::App* blur = app.add_subcommand("blur", "average frames into a blurry image");
    add_io_options(blur, o);
    blur->add_option("--start", o.start_frame, "first frame of the average");
    blur->add_option("--frames-per-blur", o.cfg.blur_len, "frames to average (0 = all)");
    blur->add_option("--png-bits", o.png_bits, "PNG bit depth");

    CLI::App* tfp = app.add_subcommand("tfp", "windowed spike-average reconstruction");
    add_io_options(tfp, o);
    add_raw_options(tfp, o);
    tfp->add_option("--threshold", o.cfg.threshold, "firing threshold C");
    tfp->add_option("--window-start", o.window_start, "window start frame");
    tfp->add_option("--window-len", o.window_len, "window length (0 = full stream)");
    tfp->add_flag("--unclamped", o.cfg.unclamped, "also dump unclamped float values");
    tfp->add_option("--png-bits", o.png_bits, "PNG bit depth");

    CLI::App* deblur = app.add_subcommand("deblur", "reconstruct sharp sequences");
    add_io_options(deblur, o);
    add_raw_options(deblur, o);
    deblur->add_option("--blurry", o.cfg.blurry_path, "blurry PNG for manifest-less deblur");
    deblur->add_option("--kprime", o.cfg.kprime, "short window length K'");
    deblur->add_option("--num-outputs", o.cfg.num_outputs, "reconstructions per blur");
    deblur->add_option("--downsample", o.cfg.spike_downsample,
                       "blurry/spike resolution ratio (manifest-less mode)");
    deblur->add_flag("--unclamped", o.cfg.unclamped, "also dump pre-clamp float values");
    deblur->add_flag("--tiling", o.cfg.tiling, "tile the exposure with disjoint short windows");
    deblur->add_option("--jobs", o.cfg.jobs, "parallel records");
    deblur->add_option("--png-bits", o.png_bits, "PNG bit depth");

    CLI::App* synthesize = app.add_subcommand("synthesize", "build a blur+spike dataset from video");
    add_io_options(synthesize, o);
    add_simulation_options(synthesize, o);
    synthesize->add_option("--frames-per-blur", o.cfg.blur_len, "frames averaged per blur");
    synthesize->add_option("--downsample", o.cfg.spike_downsample, "spike downsample factor");
    synthesize->add_option("--num-outputs", o.cfg.num_outputs, "ground-truth frames per blur");
    synthesize->add_option("--kprime", o.cfg.kprime, "short window length recorded in the manifest");
    synthesize->add_flag("--tiling", o.cfg.tiling, "use tile-center timestamps");
    synthesize->add_option("--png-bits", o.png_bits, "PNG bit depth");

    CLI::App* evalc = app.add_subcommand("eval", "score reconstructions against ground truth");
    add_io_options(evalc, o);
    evalc->add_option("--recon", o.recon_dir, "directory with reconstructions")->required();
    evalc->add_option("--jobs", o.cfg.jobs, "parallel records");

    CLI::App* pipe = app.add_subcommand("pipeline", "synthesize + deblur + eval in one run");
    add_io_options(pipe, o);
    add_simulation_options(pipe, o);
    pipe->add_option("--frames-per-blur", o.cfg.blur_len, "frames averaged per blur");
    pipe->add_option("--downsample", o.cfg.spike_downsample, "spike downsample factor");
    pipe->add_option("--num-outputs", o.cfg.num_outputs, "reconstructions per blur");
    pipe->add_option("--kprime", o.cfg.kprime, "short window length K'");
    pipe->add_flag("--unclamped", o.cfg.unclamped, "also dump pre-clamp float values");
    pipe->add_flag("--tiling", o.cfg.tiling, "tile the exposure with disjoint short windows");
    pipe->add_option("--jobs", o.cfg.jobs, "parallel records");
    pipe->add_option("--png-bits", o.png_bits, "PNG bit depth");

    try {
        std::vector<std::string> args = merge_config_args({argv + 1, argv + argc});
        std::reverse(args.begin(), args.end());  // CLI11 consumes args back to front
        app.parse(std::move(args));
        o.resolve();
        if (simulate->parsed()) return run_simulate(o);
        if (blur->parsed()) return run_blur(o);
        if (tfp->parsed()) return run_tfp(o);
        if (deblur->parsed()) return run_deblur(o);
        if (synthesize->parsed()) return run_synthesize(o);
        if (evalc->parsed()) return run_eval(o);
        if (pipe->parsed()) return run_pipeline(o);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

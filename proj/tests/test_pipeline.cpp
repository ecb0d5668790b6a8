#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>

#include "spikedeblur/pipeline.hpp"
#include "test_support.hpp"

using namespace spikedeblur;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_frames(const fs::path& dir, const std::vector<Image>& frames) {
    fs::create_directories(dir);
    char name[32];
    for (std::size_t i = 0; i < frames.size(); ++i) {
        std::snprintf(name, sizeof(name), "frame_%05zu.png", i);
        save_png((dir / name).string(), frames[i]);
    }
}

std::vector<Image> square_frames(int count, double vx, int size = 64) {
    testsupport::SquareScene scene;
    scene.width = size;
    scene.height = size;
    scene.vx = vx;
    std::vector<Image> frames;
    for (int i = 0; i < count; ++i) frames.push_back(scene.render(i));
    return frames;
}

long total_spikes(const SpikeStream& s) {
    const SpikeCountMap m = accumulate_window(s, {0, s.num_frames});
    long total = 0;
    for (auto c : m.counts) total += c;
    return total;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(SPIKEDEBLUR_CLI_PATH) + " " + args + " > " +
                            log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("a static scene yields one record whose artifacts equal the frame") {
    testsupport::TempDir dir("static");
    std::mt19937_64 rng(1);
    const Image frame = testsupport::random_image(rng, 32, 32, 3);
    write_frames(dir.path / "frames", std::vector<Image>(97, frame));

    PipelineConfig cfg;
    cfg.input = (dir.path / "frames").string();
    cfg.output_dir = (dir.path / "out").string();
    cfg.spike_downsample = 4;
    const DatasetManifest manifest = synthesize_dataset(cfg);

    REQUIRE(manifest.records.size() == 1);
    REQUIRE(manifest.records[0].gt_paths.size() == 7);
    CHECK(manifest.records[0].spike_window.start_frame == 0);
    CHECK(manifest.records[0].spike_window.len_frames == 97);

    const Image quantized = load_png((dir.path / "frames" / "frame_00000.png").string());
    const Image blurry = load_png(manifest.resolve(manifest.records[0].blurry_path).string());
    CHECK(blurry.data == quantized.data);
    for (const std::string& gt : manifest.records[0].gt_paths)
        CHECK(load_png(manifest.resolve(gt).string()).data == quantized.data);
}

TEST_CASE("two exposures partition the video into disjoint spike windows") {
    testsupport::TempDir dir("partition");
    std::vector<Image> frames = square_frames(97, 0.5, 32);
    std::vector<Image> more = square_frames(97, -0.5, 32);
    frames.insert(frames.end(), more.begin(), more.end());
    write_frames(dir.path / "frames", frames);

    PipelineConfig cfg;
    cfg.input = (dir.path / "frames").string();
    cfg.output_dir = (dir.path / "out").string();
    const DatasetManifest manifest = synthesize_dataset(cfg);

    REQUIRE(manifest.records.size() == 2);
    CHECK(manifest.records[0].spike_window.start_frame == 0);
    CHECK(manifest.records[0].spike_window.len_frames == 97);
    CHECK(manifest.records[1].spike_window.start_frame == 97);
    CHECK(manifest.records[1].spike_window.len_frames == 97);

    const SpikeStream stream = load_spk1(manifest.resolve(manifest.spike_path).string());
    CHECK(stream.num_frames == 194);
}

TEST_CASE("synthesize fails without a full exposure of frames") {
    testsupport::TempDir dir("short");
    write_frames(dir.path / "frames", square_frames(10, 0.5, 32));
    PipelineConfig cfg;
    cfg.input = (dir.path / "frames").string();
    cfg.output_dir = (dir.path / "out").string();
    cfg.blur_len = 97;
    CHECK_THROWS_AS(synthesize_dataset(cfg), std::runtime_error);
}

TEST_CASE("doubling the threshold never increases the spike count") {
    testsupport::TempDir dir("vth");
    write_frames(dir.path / "frames", square_frames(40, 0.6, 32));

    long totals[2] = {0, 0};
    int i = 0;
    for (double vth : {1.0, 2.0}) {
        PipelineConfig cfg;
        cfg.input = (dir.path / "frames").string();
        cfg.output_dir = (dir.path / ("out" + std::to_string(i))).string();
        cfg.blur_len = 40;
        cfg.spike_downsample = 2;
        cfg.threshold = vth;  // threshold multiplier on the unit base
        cfg.reset_mode = ResetMode::reset_subtract;
        const DatasetManifest manifest = synthesize_dataset(cfg);
        totals[i++] = total_spikes(load_spk1(manifest.resolve(manifest.spike_path).string()));
    }
    CHECK(totals[1] <= totals[0]);
    CHECK(totals[0] > 0);
}

TEST_CASE("deblurred static records stay within the quantization bound") {
    testsupport::TempDir dir("deblur_static");
    write_frames(dir.path / "frames", std::vector<Image>(97, Image(32, 32, 1, 0.5)));

    PipelineConfig cfg;
    cfg.input = (dir.path / "frames").string();
    cfg.output_dir = (dir.path / "data").string();
    cfg.spike_downsample = 4;
    const DatasetManifest manifest = synthesize_dataset(cfg);

    PipelineConfig dcfg = cfg;
    dcfg.output_dir = (dir.path / "recon").string();
    deblur_dataset(manifest, dcfg);

    const Image blurry = load_png(manifest.resolve(manifest.records[0].blurry_path).string());
    int emitted = 0;
    for (int m = 1; m <= 7; ++m) {
        const fs::path p = dir.path / "recon" / ("blur_0000_" + std::to_string(m) + ".png");
        REQUIRE(fs::exists(p));
        ++emitted;
        const Image out = load_png(p.string());
        // |out - B| <= B * |R - 1|; for the 0.5 static scene |R - 1| < 2C/T'
        const double bound = 2.0 / 13.0 * 0.51 + 2.0 / 255.0;
        for (std::size_t k = 0; k < out.data.size(); ++k)
            CHECK(std::abs(out.data[k] - blurry.data[k]) <= bound);
    }
    CHECK(emitted == 7);
}

TEST_CASE("tiling windows re-synthesize the blurry PNG to one code value") {
    testsupport::TempDir dir("tiling");
    write_frames(dir.path / "frames", square_frames(91, 0.3, 32));

    PipelineConfig cfg;
    cfg.input = (dir.path / "frames").string();
    cfg.output_dir = (dir.path / "data").string();
    cfg.blur_len = 91;
    cfg.num_outputs = 7;
    cfg.spike_downsample = 1;
    cfg.tiling = true;
    cfg.kprime = 13;
    const DatasetManifest manifest = synthesize_dataset(cfg);

    PipelineConfig dcfg = cfg;
    dcfg.output_dir = (dir.path / "recon").string();
    deblur_dataset(manifest, dcfg);

    const Image blurry = load_png(manifest.resolve(manifest.records[0].blurry_path).string());
    Image mean(32, 32, 1, 0.0);
    for (int m = 1; m <= 7; ++m) {
        const Image out =
            load_png((dir.path / "recon" / ("blur_0000_" + std::to_string(m) + ".png")).string());
        for (std::size_t k = 0; k < mean.data.size(); ++k) mean.data[k] += out.data[k] / 7.0;
    }
    for (std::size_t k = 0; k < mean.data.size(); ++k)
        CHECK(std::abs(mean.data[k] - blurry.data[k]) <= 1.0 / 255.0 + 1e-12);
}

TEST_CASE("unclamped dumps accompany the PNGs when requested") {
    testsupport::TempDir dir("uncl");
    write_frames(dir.path / "frames", square_frames(30, 0.4, 32));
    PipelineConfig cfg;
    cfg.input = (dir.path / "frames").string();
    cfg.output_dir = (dir.path / "data").string();
    cfg.blur_len = 30;
    cfg.num_outputs = 3;
    cfg.spike_downsample = 2;
    const DatasetManifest manifest = synthesize_dataset(cfg);

    PipelineConfig dcfg = cfg;
    dcfg.output_dir = (dir.path / "recon").string();
    dcfg.unclamped = true;
    deblur_dataset(manifest, dcfg);
    for (int m = 1; m <= 3; ++m) {
        CHECK(fs::exists(dir.path / "recon" / ("blur_0000_" + std::to_string(m) + ".png")));
        CHECK(fs::exists(dir.path / "recon" / ("blur_0000_" + std::to_string(m) + ".rawf")));
    }
}

TEST_CASE("evaluating ground truth against itself caps the metrics") {
    testsupport::TempDir dir("evalgt");
    write_frames(dir.path / "frames", square_frames(30, 0.4, 32));
    PipelineConfig cfg;
    cfg.input = (dir.path / "frames").string();
    cfg.output_dir = (dir.path / "data").string();
    cfg.blur_len = 30;
    cfg.num_outputs = 3;
    cfg.spike_downsample = 2;
    const DatasetManifest manifest = synthesize_dataset(cfg);

    // reconstructions := ground truth
    fs::create_directories(dir.path / "recon");
    for (std::size_t m = 0; m < manifest.records[0].gt_paths.size(); ++m)
        fs::copy_file(manifest.resolve(manifest.records[0].gt_paths[m]),
                      dir.path / "recon" / ("blur_0000_" + std::to_string(m + 1) + ".png"));

    const EvaluationSummary summary = evaluate_dataset(manifest, (dir.path / "recon").string(), cfg);
    CHECK(summary.mean_psnr == 99.0);
    CHECK(summary.mean_ssim == 1.0);

    write_evaluation_reports(summary, (dir.path / "reports").string());
    CHECK(fs::exists(dir.path / "reports" / "report.csv"));
    CHECK(fs::exists(dir.path / "reports" / "report.json"));
    CHECK(fs::exists(dir.path / "reports" / "report_blur_0000.json"));
}

TEST_CASE("the blurry input repeated M times has zero reblur residual") {
    testsupport::TempDir dir("evalblur");
    write_frames(dir.path / "frames", square_frames(30, 0.4, 32));
    PipelineConfig cfg;
    cfg.input = (dir.path / "frames").string();
    cfg.output_dir = (dir.path / "data").string();
    cfg.blur_len = 30;
    cfg.num_outputs = 3;
    cfg.spike_downsample = 2;
    const DatasetManifest manifest = synthesize_dataset(cfg);

    fs::create_directories(dir.path / "recon");
    for (int m = 1; m <= 3; ++m)
        fs::copy_file(manifest.resolve(manifest.records[0].blurry_path),
                      dir.path / "recon" / ("blur_0000_" + std::to_string(m) + ".png"));

    const EvaluationSummary summary = evaluate_dataset(manifest, (dir.path / "recon").string(), cfg);
    CHECK(summary.records[0].report.reblur_residual_mse < 1e-30);  // double rounding residue
    CHECK(summary.records[0].report.reblur_residual_psnr == 99.0);

    // PSNR vs GT equals psnr(blurry, GT) frame by frame
    const Image blurry = load_png(manifest.resolve(manifest.records[0].blurry_path).string());
    for (std::size_t m = 0; m < 3; ++m) {
        const Image gt = load_png(manifest.resolve(manifest.records[0].gt_paths[m]).string());
        CHECK(summary.records[0].report.per_frame[m].psnr ==
              doctest::Approx(psnr(blurry, gt)).epsilon(1e-12));
    }
}

TEST_CASE("the reconstruction beats the blurry baseline on the oracle scene") {
    testsupport::TempDir dir("benefit");
    write_frames(dir.path / "frames", square_frames(91, 0.6, 64));
    PipelineConfig cfg;
    cfg.input = (dir.path / "frames").string();
    cfg.output_dir = (dir.path / "data").string();
    cfg.blur_len = 91;
    cfg.num_outputs = 7;
    cfg.spike_downsample = 2;
    cfg.kprime = 13;
    const DatasetManifest manifest = synthesize_dataset(cfg);

    PipelineConfig dcfg = cfg;
    dcfg.output_dir = (dir.path / "recon").string();
    deblur_dataset(manifest, dcfg);
    const EvaluationSummary sdm_eval =
        evaluate_dataset(manifest, (dir.path / "recon").string(), cfg);

    // blurry-input baseline
    fs::create_directories(dir.path / "base");
    for (int m = 1; m <= 7; ++m)
        fs::copy_file(manifest.resolve(manifest.records[0].blurry_path),
                      dir.path / "base" / ("blur_0000_" + std::to_string(m) + ".png"));
    const EvaluationSummary base_eval =
        evaluate_dataset(manifest, (dir.path / "base").string(), cfg);

    CHECK(sdm_eval.mean_psnr > base_eval.mean_psnr);
    CHECK(sdm_eval.mean_ssim > base_eval.mean_ssim);
}

TEST_CASE("identical configs produce byte-identical artifacts, in parallel too") {
    testsupport::TempDir dir("determinism");
    write_frames(dir.path / "frames", square_frames(60, 0.5, 32));

    auto run = [&](const std::string& tag, int jobs) {
        PipelineConfig cfg;
        cfg.input = (dir.path / "frames").string();
        cfg.output_dir = (dir.path / tag / "data").string();
        cfg.blur_len = 30;
        cfg.num_outputs = 3;
        cfg.spike_downsample = 2;
        cfg.noise_spurious = 0.02;
        cfg.noise_drop = 0.01;
        cfg.seed = 99;
        cfg.jobs = jobs;
        const DatasetManifest manifest = synthesize_dataset(cfg);
        PipelineConfig dcfg = cfg;
        dcfg.output_dir = (dir.path / tag / "recon").string();
        deblur_dataset(manifest, dcfg);
        return manifest;
    };

    run("a", 1);
    run("b", 1);
    run("c", 3);

    CHECK(file_bytes(dir.path / "a" / "data" / "spikes.spk1") ==
          file_bytes(dir.path / "b" / "data" / "spikes.spk1"));
    CHECK(file_bytes(dir.path / "a" / "data" / "spikes.spk1") ==
          file_bytes(dir.path / "c" / "data" / "spikes.spk1"));
    for (int rec = 0; rec < 2; ++rec)
        for (int m = 1; m <= 3; ++m) {
            const std::string name =
                "blur_000" + std::to_string(rec) + "_" + std::to_string(m) + ".png";
            CHECK(file_bytes(dir.path / "a" / "recon" / name) ==
                  file_bytes(dir.path / "b" / "recon" / name));
            CHECK(file_bytes(dir.path / "a" / "recon" / name) ==
                  file_bytes(dir.path / "c" / "recon" / name));
        }
}

TEST_CASE("manifests round-trip through JSON") {
    DatasetManifest m;
    m.spike_path = "spikes.spk1";
    m.spike_downsample = 2;
    m.frame_duration = 0.5;
    m.short_len = 13;
    m.num_outputs = 3;
    BlurRecord r;
    r.id = "blur_0000";
    r.blurry_path = "blur_0000.png";
    r.spike_window = {10, 30};
    r.timestamps = {15, 25, 35};
    r.gt_paths = {"a.png", "b.png", "c.png"};
    m.records.push_back(r);

    const DatasetManifest back = manifest_from_json(manifest_to_json(m));
    CHECK(back.spike_path == m.spike_path);
    CHECK(back.short_len == 13);
    REQUIRE(back.records.size() == 1);
    CHECK(back.records[0].spike_window.start_frame == 10);
    CHECK(back.records[0].spike_window.len_frames == 30);
    CHECK(back.records[0].timestamps == r.timestamps);
    CHECK(back.records[0].gt_paths == r.gt_paths);
}

TEST_CASE("cli: the full pipeline runs headlessly from one config file") {
    testsupport::TempDir dir("cli");
    write_frames(dir.path / "frames", square_frames(30, 0.4, 32));

    const fs::path cfg_path = dir.path / "run.cfg";
    {
        std::ofstream cfg(cfg_path);
        cfg << "input=" << (dir.path / "frames").string() << "\n";
        cfg << "output=" << (dir.path / "out").string() << "\n";
        cfg << "frames-per-blur=30\n";
        cfg << "num-outputs=3\n";
        cfg << "downsample=2\n";
        cfg << "kprime=5\n";
        cfg << "seed=7\n";
    }
    const int code = run_cli("pipeline --config " + cfg_path.string(), dir.path / "log.txt");
    CHECK(code == 0);
    CHECK(fs::exists(dir.path / "out" / "dataset" / "manifest.json"));
    CHECK(fs::exists(dir.path / "out" / "dataset" / "spikes.spk1"));
    CHECK(fs::exists(dir.path / "out" / "recon" / "blur_0000_1.png"));
    CHECK(fs::exists(dir.path / "out" / "recon" / "blur_0000_3.png"));
    CHECK(fs::exists(dir.path / "out" / "reports" / "report.csv"));
    CHECK(fs::exists(dir.path / "out" / "reports" / "report.json"));
}

TEST_CASE("cli: flags override config-file values") {
    testsupport::TempDir dir("cliflags");
    write_frames(dir.path / "frames", square_frames(20, 0.4, 32));

    const fs::path cfg_path = dir.path / "run.cfg";
    {
        std::ofstream cfg(cfg_path);
        cfg << "input=" << (dir.path / "frames").string() << "\n";
        cfg << "output=" << (dir.path / "ignored").string() << "\n";
        cfg << "frames-per-blur=20\n";
        cfg << "num-outputs=2\n";
    }
    const int code = run_cli("synthesize --config " + cfg_path.string() + " --output " +
                                 (dir.path / "flagwins").string(),
                             dir.path / "log.txt");
    CHECK(code == 0);
    CHECK(fs::exists(dir.path / "flagwins" / "manifest.json"));
    CHECK(!fs::exists(dir.path / "ignored"));
}

TEST_CASE("cli: deterministic simulate runs emit identical spk1 files") {
    testsupport::TempDir dir("clisim");
    write_frames(dir.path / "frames", square_frames(20, 0.4, 32));
    const std::string base = "simulate --input " + (dir.path / "frames").string() +
                             " --downsample 2 --noise-spurious 0.05 --seed 21 --output ";
    CHECK(run_cli(base + (dir.path / "s1.spk1").string(), dir.path / "log1.txt") == 0);
    CHECK(run_cli(base + (dir.path / "s2.spk1").string(), dir.path / "log2.txt") == 0);
    CHECK(file_bytes(dir.path / "s1.spk1") == file_bytes(dir.path / "s2.spk1"));
}

TEST_CASE("cli: blur averages two frames") {
    testsupport::TempDir dir("cliblur");
    std::vector<Image> frames{Image(16, 16, 1, 0.0), Image(16, 16, 1, 1.0)};
    write_frames(dir.path / "frames", frames);
    const int code = run_cli("blur --input " + (dir.path / "frames").string() +
                                 " --frames-per-blur 2 --output " + (dir.path / "b.png").string(),
                             dir.path / "log.txt");
    CHECK(code == 0);
    const Image b = load_png((dir.path / "b.png").string());
    for (double v : b.data) CHECK(v == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("cli: tfp of a silent stream is a black image") {
    testsupport::TempDir dir("clitfp");
    save_spk1((dir.path / "z.spk1").string(), SpikeStream::zeros(16, 16, 20));
    const int code = run_cli("tfp --input " + (dir.path / "z.spk1").string() + " --output " +
                                 (dir.path / "tfp.png").string(),
                             dir.path / "log.txt");
    CHECK(code == 0);
    const Image img = load_png((dir.path / "tfp.png").string());
    for (double v : img.data) CHECK(v == 0.0);
}

TEST_CASE("cli: tfp reads headerless dumps with either bit order") {
    testsupport::TempDir dir("cliraw");
    std::mt19937_64 rng(17);
    const SpikeStream s = testsupport::random_stream(rng, 16, 16, 40, 0.6);
    {
        std::ofstream f(dir.path / "dump.dat", std::ios::binary);
        f.write(reinterpret_cast<const char*>(s.data.data()),
                static_cast<std::streamsize>(s.data.size()));
    }
    const int code = run_cli("tfp --input " + (dir.path / "dump.dat").string() +
                                 " --raw-spike-width 16 --raw-spike-height 16 --bit-order lsb" +
                                 " --output " + (dir.path / "tfp.png").string(),
                             dir.path / "log.txt");
    CHECK(code == 0);
    const Image via_cli = load_png((dir.path / "tfp.png").string());
    Image expected = tfp_reconstruct(s, {0, 40}, 1.0);
    expected.clamp01();
    for (std::size_t k = 0; k < expected.data.size(); ++k)
        CHECK(via_cli.data[k] == doctest::Approx(expected.data[k]).epsilon(1.0 / 255.0));

    // msb interpretation must differ for this stream
    const int code2 = run_cli("tfp --input " + (dir.path / "dump.dat").string() +
                                  " --raw-spike-width 16 --raw-spike-height 16 --bit-order msb" +
                                  " --output " + (dir.path / "tfp_msb.png").string(),
                              dir.path / "log2.txt");
    CHECK(code2 == 0);
    CHECK(load_png((dir.path / "tfp_msb.png").string()).data != via_cli.data);
}

TEST_CASE("cli: manifest-less deblur works on spk1 files and raw dumps") {
    testsupport::TempDir dir("clipair");
    testsupport::SquareScene scene;
    scene.width = 16;
    scene.height = 16;
    scene.vx = 0.5;
    FrameSequence frames = scene.render_sequence(40);
    const Image blurry = synthesize_blur(frames, 0, 40);
    save_png((dir.path / "blurry.png").string(), blurry);
    const SpikeStream stream = simulate_spikes(frames, {}).stream;
    save_spk1((dir.path / "s.spk1").string(), stream);
    {
        std::ofstream f(dir.path / "s.dat", std::ios::binary);
        f.write(reinterpret_cast<const char*>(stream.data.data()),
                static_cast<std::streamsize>(stream.data.size()));
    }

    const std::string common = " --blurry " + (dir.path / "blurry.png").string() +
                               " --downsample 1 --num-outputs 3 --kprime 5 --output ";
    CHECK(run_cli("deblur --input " + (dir.path / "s.spk1").string() + common +
                      (dir.path / "r1").string(),
                  dir.path / "log1.txt") == 0);
    CHECK(run_cli("deblur --input " + (dir.path / "s.dat").string() +
                      " --raw-spike-width 16 --raw-spike-height 16" + common +
                      (dir.path / "r2").string(),
                  dir.path / "log2.txt") == 0);
    for (int m = 1; m <= 3; ++m) {
        const std::string name = "blur_0000_" + std::to_string(m) + ".png";
        REQUIRE(fs::exists(dir.path / "r1" / name));
        REQUIRE(fs::exists(dir.path / "r2" / name));
        // same spikes either way, so identical reconstructions
        CHECK(file_bytes(dir.path / "r1" / name) == file_bytes(dir.path / "r2" / name));
    }
}

TEST_CASE("cli: failures exit nonzero with a one-line error") {
    testsupport::TempDir dir("clierr");
    const int code = run_cli("tfp --input " + (dir.path / "missing.spk1").string() + " --output " +
                                 (dir.path / "x.png").string(),
                             dir.path / "log.txt");
    CHECK(code != 0);
    std::ifstream log(dir.path / "log.txt");
    std::string line;
    bool found = false;
    while (std::getline(log, line))
        if (line.rfind("error:", 0) == 0) found = true;
    CHECK(found);
}

}  // TEST_SUITE

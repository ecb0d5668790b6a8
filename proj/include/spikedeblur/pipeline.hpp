#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <fstream>
#include <future>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "spikedeblur/blur_model.hpp"
#include "spikedeblur/image.hpp"
#include "spikedeblur/metrics.hpp"
#include "spikedeblur/png_io.hpp"
#include "spikedeblur/sdm.hpp"
#include "spikedeblur/simulator.hpp"
#include "spikedeblur/spike_stream.hpp"

namespace spikedeblur {

/// Settings shared by the dataset-level commands. Every field mirrors a CLI
/// flag; flags win over config-file values.
struct PipelineConfig {
    std::string input;        // frames dir, manifest, or spk1 depending on command
    std::string blurry_path;  // explicit blurry image for manifest-less deblur
    std::string output_dir = "out";

    int blur_len = 97;        // frames averaged per blurry image
    int spike_downsample = 4; // spike resolution = video resolution / this
    double threshold = 1.0;   // firing threshold C (threshold-multiplier sweeps scale this)
    int kprime = 0;           // short window K'; 0 picks the documented default
    int num_outputs = 7;      // M reconstructions per blur
    ResetMode reset_mode = ResetMode::reset_to_zero;
    double noise_spurious = 0.0;
    double noise_drop = 0.0;
    double dark_current = 0.0;
    std::uint64_t seed = 0;
    int temporal_supersample = 1;
    bool unclamped = false;   // additionally emit pre-clamp float dumps
    bool tiling = false;      // place output timestamps at tile centers
    int jobs = 1;             // parallel records in deblur/eval
    int png_bits = 8;
    GrayscaleWeights weights;

    void validate_synthesize() const {
        if (blur_len < 1) throw std::invalid_argument("pipeline: blur_len must be >= 1");
        if (num_outputs < 1) throw std::invalid_argument("pipeline: num_outputs must be >= 1");
        if (spike_downsample < 1)
            throw std::invalid_argument("pipeline: downsample factor must be >= 1");
    }
};

struct BlurRecord {
    std::string id;
    std::string blurry_path;       // relative to the manifest directory
    WindowSpec spike_window;       // exposure window into the shared stream
    std::vector<int> timestamps;   // absolute frame indices, one per output
    std::vector<std::string> gt_paths;  // empty when no ground truth exists
};

/// Index of a synthesized (or externally prepared) dataset: one shared SPK1
/// stream plus per-blur records with disjoint exposure windows.
struct DatasetManifest {
    std::string spike_path;
    int spike_downsample = 4;
    double frame_duration = 1.0;
    int short_len = 0;   // K' the dataset was prepared for (deblur may override)
    int num_outputs = 7;
    std::vector<BlurRecord> records;

    std::filesystem::path base_dir;  // set on load/save; resolves relative paths

    std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    nlohmann::json j;
    j["spike_file"] = m.spike_path;
    j["spike_downsample"] = m.spike_downsample;
    j["frame_duration"] = m.frame_duration;
    j["short_len"] = m.short_len;
    j["num_outputs"] = m.num_outputs;
    j["records"] = nlohmann::json::array();
    for (const BlurRecord& r : m.records) {
        nlohmann::json jr;
        jr["id"] = r.id;
        jr["blurry"] = r.blurry_path;
        jr["window"] = {{"start", r.spike_window.start_frame}, {"len", r.spike_window.len_frames}};
        jr["timestamps"] = r.timestamps;
        jr["gt"] = r.gt_paths;
        j["records"].push_back(jr);
    }
    return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.spike_path = j.at("spike_file").get<std::string>();
    m.spike_downsample = j.at("spike_downsample").get<int>();
    m.frame_duration = j.at("frame_duration").get<double>();
    m.short_len = j.value("short_len", 0);
    m.num_outputs = j.value("num_outputs", 7);
    for (const auto& jr : j.at("records")) {
        BlurRecord r;
        r.id = jr.at("id").get<std::string>();
        r.blurry_path = jr.at("blurry").get<std::string>();
        r.spike_window = {jr.at("window").at("start").get<int>(),
                          jr.at("window").at("len").get<int>()};
        r.timestamps = jr.at("timestamps").get<std::vector<int>>();
        if (jr.contains("gt")) r.gt_paths = jr.at("gt").get<std::vector<std::string>>();
        m.records.push_back(std::move(r));
    }
    return m;
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot open for writing: " + path.string());
    f << manifest_to_json(m).dump(2) << '\n';
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot open: " + path.string());
    nlohmann::json j;
    f >> j;
    DatasetManifest m = manifest_from_json(j);
    m.base_dir = path.parent_path();
    return m;
}

/// Lexicographically sorted *.png paths in a directory (frames are expected
/// to be zero-padded so name order is time order).
inline std::vector<std::filesystem::path> list_png_frames(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("frames: not a directory: " + dir);
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw std::runtime_error("frames: no .png files in " + dir);
    return paths;
}

namespace detail {

inline std::string record_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "blur_%04zu", index);
    return buf;
}

inline std::string output_name(const std::string& record_id, int m) {
    return record_id + "_" + std::to_string(m) + ".png";
}

inline std::vector<int> record_timestamps(int start, int len, int m_total, bool tiling) {
    return tiling ? tiling_timestamps(start, len, m_total)
                  : default_timestamps(start, len, m_total);
}

/// Run fn(record_index) for every record, optionally across jobs threads.
/// Records are independent; any schedule yields identical artifacts.
template <typename Fn>
void for_each_record(std::size_t count, int jobs, Fn&& fn) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    const int workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
    std::vector<std::future<void>> futs;
    futs.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        futs.push_back(std::async(std::launch::async, [&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        }));
    for (auto& f : futs) f.get();  // rethrows worker exceptions
}

}  // namespace detail

/// Partition a PNG video into consecutive blur_len windows. Per window: emit
/// the blurry average (full resolution), append spikes simulated from the
/// area-downsampled grayscale video to one shared SPK1 stream, and save the
/// ground-truth frames at the M output timestamps. Frames are streamed one at
/// a time; the integrator carries across windows, so the stream is one
/// continuous simulation.
inline DatasetManifest synthesize_dataset(const PipelineConfig& config) {
    namespace fs = std::filesystem;
    config.validate_synthesize();

    const std::vector<fs::path> frame_paths = list_png_frames(config.input);
    const std::size_t num_records = frame_paths.size() / static_cast<std::size_t>(config.blur_len);
    if (num_records == 0)
        throw std::runtime_error("synthesize: need at least blur_len (" +
                                 std::to_string(config.blur_len) + ") frames, found " +
                                 std::to_string(frame_paths.size()));

    fs::create_directories(config.output_dir);

    SimulatorConfig sim;
    sim.threshold = config.threshold;
    sim.reset_mode = config.reset_mode;
    sim.dark_current = config.dark_current;
    sim.spurious_spike_prob = config.noise_spurious;
    sim.seed = config.seed;
    sim.temporal_supersample = config.temporal_supersample;

    DatasetManifest manifest;
    manifest.base_dir = config.output_dir;
    manifest.spike_path = "spikes.spk1";
    manifest.spike_downsample = config.spike_downsample;
    manifest.frame_duration = 1.0;
    manifest.num_outputs = config.num_outputs;

    IntegratorState state;
    std::vector<std::uint8_t> all_spikes;
    int spike_w = 0, spike_h = 0;
    int video_w = 0, video_h = 0, video_c = 0;

    for (std::size_t rec = 0; rec < num_records; ++rec) {
        const std::size_t base = rec * static_cast<std::size_t>(config.blur_len);
        const std::vector<int> rel_ts = detail::record_timestamps(
            0, config.blur_len, config.num_outputs, config.tiling);

        BlurRecord record;
        record.id = detail::record_id(rec);
        record.spike_window = {static_cast<int>(base), config.blur_len};
        for (int t : rel_ts) record.timestamps.push_back(static_cast<int>(base) + t);

        Image blur_sum;
        FrameSequence window_gray;  // downsampled grayscale frames for the simulator
        window_gray.frame_duration = 1.0;

        for (int i = 0; i < config.blur_len; ++i) {
            Image frame = load_png(frame_paths[base + static_cast<std::size_t>(i)].string());
            if (rec == 0 && i == 0) {
                video_w = frame.width;
                video_h = frame.height;
                video_c = frame.channels;
            } else if (frame.width != video_w || frame.height != video_h ||
                       frame.channels != video_c) {
                throw std::runtime_error("synthesize: frame shape drift at " +
                                         frame_paths[base + static_cast<std::size_t>(i)].string());
            }

            if (blur_sum.data.empty())
                blur_sum = Image(frame.width, frame.height, frame.channels, 0.0);
            for (std::size_t k = 0; k < blur_sum.data.size(); ++k)
                blur_sum.data[k] += frame.data[k];

            // Ground truth at the output timestamps, full resolution.
            for (std::size_t m = 0; m < rel_ts.size(); ++m) {
                if (rel_ts[m] == i) {
                    const std::string name =
                        "gt_" + record.id.substr(5) + "_" + std::to_string(m + 1) + ".png";
                    save_png((fs::path(config.output_dir) / name).string(), frame, config.png_bits);
                    record.gt_paths.push_back(name);
                }
            }

            Image gray = frame.channels == 3 ? to_grayscale(frame, config.weights) : frame;
            window_gray.frames.push_back(downsample_area(gray, config.spike_downsample));
        }

        // Simulate this window's spikes, carrying the integrator across windows.
        SimulationResult sr =
            simulate_spikes(window_gray, sim, state.empty() ? nullptr : &state);
        state = std::move(sr.state);
        spike_w = sr.stream.width;
        spike_h = sr.stream.height;
        all_spikes.insert(all_spikes.end(), sr.stream.data.begin(), sr.stream.data.end());

        const double inv = 1.0 / config.blur_len;
        for (double& v : blur_sum.data) v *= inv;
        record.blurry_path = record.id + ".png";
        save_png((fs::path(config.output_dir) / record.blurry_path).string(), blur_sum,
                 config.png_bits);
        manifest.records.push_back(std::move(record));
    }

    SpikeStream stream = SpikeStream::zeros(spike_w, spike_h,
                                            static_cast<int>(num_records) * config.blur_len,
                                            manifest.frame_duration, 0.0);
    stream.data = std::move(all_spikes);
    if (config.noise_drop > 0.0)
        stream = inject_noise_profile(stream, 0.0, config.noise_drop, config.seed + 1);
    save_spk1((fs::path(config.output_dir) / manifest.spike_path).string(), stream);

    manifest.short_len = config.kprime > 0 ? config.kprime
                                           : ExposureSpec::default_short_len(config.blur_len);
    save_manifest(fs::path(config.output_dir) / "manifest.json", manifest);
    return manifest;
}

/// Reconstruct every record of a manifest: M PNGs per blur named
/// <id>_<m>.png, plus <id>_<m>.rawf pre-clamp dumps when requested. Records
/// are independent and may run on several threads. The stream overload lets
/// callers supply spikes that did not come from the manifest's SPK1 path
/// (raw camera dumps, already-decoded streams).
inline void deblur_dataset(const DatasetManifest& manifest, const PipelineConfig& config,
                           const SpikeStream& stream) {
    namespace fs = std::filesystem;
    if (manifest.records.empty()) throw std::runtime_error("deblur: manifest has no records");
    fs::create_directories(config.output_dir);

    const int short_len = config.kprime > 0 ? config.kprime : manifest.short_len;

    detail::for_each_record(manifest.records.size(), config.jobs, [&](std::size_t idx) {
        const BlurRecord& record = manifest.records[idx];
        const Image blurry = load_png(manifest.resolve(record.blurry_path).string());

        ExposureSpec exposure;
        exposure.exposure_window = record.spike_window;
        exposure.short_len = std::clamp(short_len, 1, record.spike_window.len_frames);
        exposure.num_outputs = static_cast<int>(record.timestamps.size());
        exposure.timestamps = record.timestamps;

        ReconstructionConfig rc;
        rc.clamp_output = false;  // clamping happens at PNG emission
        rc.upsample_factor = manifest.spike_downsample;

        const FrameSequence seq = sdm_reconstruct_sequence(blurry, stream, exposure, rc);
        for (std::size_t m = 0; m < seq.size(); ++m) {
            const std::string name = detail::output_name(record.id, static_cast<int>(m) + 1);
            save_png((fs::path(config.output_dir) / name).string(), seq[m], config.png_bits);
            if (config.unclamped) {
                fs::path raw = fs::path(config.output_dir) / name;
                raw.replace_extension(".rawf");
                save_rawf(raw.string(), seq[m]);
            }
        }
    });
}

inline void deblur_dataset(const DatasetManifest& manifest, const PipelineConfig& config) {
    deblur_dataset(manifest, config, load_spk1(manifest.resolve(manifest.spike_path).string()));
}

struct RecordEvaluation {
    std::string id;
    MetricReport report;   // per_frame empty when the record has no ground truth
    bool has_ground_truth = false;
    double middle_psnr = 0.0;
    double middle_ssim = 0.0;
};

struct EvaluationSummary {
    std::vector<RecordEvaluation> records;
    double mean_psnr = 0.0;   // over records with ground truth
    double mean_ssim = 0.0;
    double mean_middle_psnr = 0.0;
    double mean_middle_ssim = 0.0;
    double mean_reblur_mse = 0.0;  // over all records
};

/// Score reconstructions against the manifest's ground truth and the reblur
/// residual against the blurry input. Ground truth is optional per record;
/// the residual is always reported.
inline EvaluationSummary evaluate_dataset(const DatasetManifest& manifest,
                                          const std::string& recon_dir,
                                          const PipelineConfig& config) {
    namespace fs = std::filesystem;
    EvaluationSummary summary;
    summary.records.resize(manifest.records.size());

    detail::for_each_record(manifest.records.size(), config.jobs, [&](std::size_t idx) {
        const BlurRecord& record = manifest.records[idx];
        RecordEvaluation ev;
        ev.id = record.id;

        const Image blurry = load_png(manifest.resolve(record.blurry_path).string());
        FrameSequence recon;
        for (std::size_t m = 0; m < record.timestamps.size(); ++m) {
            const fs::path p =
                fs::path(recon_dir) / detail::output_name(record.id, static_cast<int>(m) + 1);
            if (!fs::exists(p)) throw std::runtime_error("eval: missing reconstruction: " + p.string());
            recon.frames.push_back(load_png(p.string()));
        }

        if (!record.gt_paths.empty()) {
            if (record.gt_paths.size() != record.timestamps.size())
                throw std::runtime_error("eval: ground-truth count mismatch for " + record.id);
            FrameSequence gt;
            for (const std::string& g : record.gt_paths)
                gt.frames.push_back(load_png(manifest.resolve(g).string()));
            ev.report = evaluate_sequence(recon, gt, blurry);
            ev.has_ground_truth = true;
            const std::size_t mid = record.timestamps.size() / 2;
            ev.middle_psnr = ev.report.per_frame[mid].psnr;
            ev.middle_ssim = ev.report.per_frame[mid].ssim;
        } else {
            const ReblurResidual rr = reblur_residual(blurry, recon);
            ev.report.reblur_residual_mse = rr.mse;
            ev.report.reblur_residual_psnr = rr.psnr;
        }
        summary.records[idx] = std::move(ev);
    });

    std::size_t with_gt = 0;
    for (const RecordEvaluation& ev : summary.records) {
        summary.mean_reblur_mse += ev.report.reblur_residual_mse;
        if (ev.has_ground_truth) {
            summary.mean_psnr += ev.report.mean_psnr;
            summary.mean_ssim += ev.report.mean_ssim;
            summary.mean_middle_psnr += ev.middle_psnr;
            summary.mean_middle_ssim += ev.middle_ssim;
            ++with_gt;
        }
    }
    if (!summary.records.empty())
        summary.mean_reblur_mse /= static_cast<double>(summary.records.size());
    if (with_gt) {
        summary.mean_psnr /= static_cast<double>(with_gt);
        summary.mean_ssim /= static_cast<double>(with_gt);
        summary.mean_middle_psnr /= static_cast<double>(with_gt);
        summary.mean_middle_ssim /= static_cast<double>(with_gt);
    }
    return summary;
}

inline nlohmann::json summary_to_json(const EvaluationSummary& summary) {
    nlohmann::json j;
    j["records"] = nlohmann::json::array();
    for (const RecordEvaluation& ev : summary.records) {
        nlohmann::json jr = report_to_json(ev.report);
        jr["id"] = ev.id;
        jr["has_ground_truth"] = ev.has_ground_truth;
        if (ev.has_ground_truth) {
            jr["middle_psnr"] = ev.middle_psnr;
            jr["middle_ssim"] = ev.middle_ssim;
        }
        j["records"].push_back(jr);
    }
    j["aggregate"] = {{"mean_psnr", summary.mean_psnr},
                      {"mean_ssim", summary.mean_ssim},
                      {"mean_middle_psnr", summary.mean_middle_psnr},
                      {"mean_middle_ssim", summary.mean_middle_ssim},
                      {"mean_reblur_mse", summary.mean_reblur_mse}};
    return j;
}

inline std::string summary_to_csv(const EvaluationSummary& summary) {
    std::ostringstream out;
    out.precision(12);
    out << "record,mean_psnr_db,mean_ssim,middle_psnr_db,middle_ssim,reblur_mse,reblur_psnr_db\n";
    for (const RecordEvaluation& ev : summary.records) {
        out << ev.id << ',';
        if (ev.has_ground_truth)
            out << ev.report.mean_psnr << ',' << ev.report.mean_ssim << ',' << ev.middle_psnr
                << ',' << ev.middle_ssim << ',';
        else
            out << ",,,,";
        out << ev.report.reblur_residual_mse << ',' << ev.report.reblur_residual_psnr << '\n';
    }
    out << "mean," << summary.mean_psnr << ',' << summary.mean_ssim << ','
        << summary.mean_middle_psnr << ',' << summary.mean_middle_ssim << ','
        << summary.mean_reblur_mse << ",\n";
    return out.str();
}

/// Write the aggregate report plus one CSV/JSON pair per record.
inline void write_evaluation_reports(const EvaluationSummary& summary, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    for (const RecordEvaluation& ev : summary.records) {
        std::ofstream csv(fs::path(out_dir) / ("report_" + ev.id + ".csv"));
        csv << report_to_csv(ev.report);
        std::ofstream js(fs::path(out_dir) / ("report_" + ev.id + ".json"));
        js << report_to_json(ev.report).dump(2) << '\n';
    }
    std::ofstream csv(fs::path(out_dir) / "report.csv");
    csv << summary_to_csv(summary);
    std::ofstream js(fs::path(out_dir) / "report.json");
    js << summary_to_json(summary).dump(2) << '\n';
}

}  // namespace spikedeblur

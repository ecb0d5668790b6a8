#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikedeblur/image.hpp"
#include "spikedeblur/sdm.hpp"

namespace spikedeblur {

/// PSNR reported for identical images instead of infinity, so reports stay
/// finite and sortable.
constexpr double psnr_cap_db = 99.0;
constexpr double psnr_mse_floor = 1e-12;

inline double mse(const Image& a, const Image& b) {
    require_same_shape(a, b, "mse");
    double sum = 0.0;
    for (std::size_t k = 0; k < a.data.size(); ++k) {
        const double d = a.data[k] - b.data[k];
        sum += d * d;
    }
    return sum / static_cast<double>(a.data.size());
}

/// 10*log10(peak^2 / MSE), over all channels jointly; capped at 99 dB when
/// the MSE falls below 1e-12.
inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
    if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be > 0");
    const double err = mse(a, b);
    if (err < psnr_mse_floor) return psnr_cap_db;
    return 10.0 * std::log10(peak * peak / err);
}

inline double psnr_from_mse(double err, double peak = 1.0) {
    if (err < psnr_mse_floor) return psnr_cap_db;
    return 10.0 * std::log10(peak * peak / err);
}

namespace detail {

inline std::vector<double> gaussian_kernel(int radius, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable Gaussian filter, valid region only: output is
// (h - 2r) x (w - 2r), anchored at (r, r) in the source.
inline std::vector<double> gaussian_valid(const std::vector<double>& src, int w, int h,
                                          const std::vector<double>& kernel) {
    const int r = static_cast<int>(kernel.size() / 2);
    const int ow = w - 2 * r;
    const int oh = h - 2 * r;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            const double* row = src.data() + static_cast<std::size_t>(y) * w + x;
            for (std::size_t i = 0; i < kernel.size(); ++i) s += kernel[i] * row[i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (std::size_t i = 0; i < kernel.size(); ++i)
                s += kernel[i] * tmp[(static_cast<std::size_t>(y) + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

}  // namespace detail

/// Mean local SSIM with the canonical parameter set: 11x11 Gaussian window
/// (sigma 1.5), C1 = (0.01*peak)^2, C2 = (0.03*peak)^2, evaluated where the
/// window fully fits, computed per channel and averaged. Symmetric in (a, b).
inline double ssim(const Image& a, const Image& b, double peak = 1.0) {
    require_same_shape(a, b, "ssim");
    constexpr int window = 11;
    constexpr int radius = window / 2;
    if (a.width < window || a.height < window)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");

    const std::vector<double> kernel = detail::gaussian_kernel(radius, 1.5);
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const int w = a.width;
    const int h = a.height;
    const std::size_t n = a.plane_size();

    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        std::vector<double> x(a.plane(c), a.plane(c) + n);
        std::vector<double> y(b.plane(c), b.plane(c) + n);
        std::vector<double> xx(n), yy(n), xy(n);
        for (std::size_t p = 0; p < n; ++p) {
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        const std::vector<double> mu_x = detail::gaussian_valid(x, w, h, kernel);
        const std::vector<double> mu_y = detail::gaussian_valid(y, w, h, kernel);
        const std::vector<double> m_xx = detail::gaussian_valid(xx, w, h, kernel);
        const std::vector<double> m_yy = detail::gaussian_valid(yy, w, h, kernel);
        const std::vector<double> m_xy = detail::gaussian_valid(xy, w, h, kernel);

        double acc = 0.0;
        for (std::size_t p = 0; p < mu_x.size(); ++p) {
            const double var_x = m_xx[p] - mu_x[p] * mu_x[p];
            const double var_y = m_yy[p] - mu_y[p] * mu_y[p];
            const double cov = m_xy[p] - mu_x[p] * mu_y[p];
            const double num = (2.0 * mu_x[p] * mu_y[p] + c1) * (2.0 * cov + c2);
            const double den = (mu_x[p] * mu_x[p] + mu_y[p] * mu_y[p] + c1) * (var_x + var_y + c2);
            acc += num / den;
        }
        total += acc / static_cast<double>(mu_x.size());
    }
    return total / a.channels;
}

struct ReblurResidual {
    double mse = 0.0;
    double psnr = 0.0;
};

/// Consistency diagnostic: how well the mean of a reconstructed sequence
/// re-synthesizes the blurry input. Needs no ground truth.
inline ReblurResidual reblur_residual(const Image& blurry, const FrameSequence& sequence) {
    const Image reblurred = reblur(sequence);
    require_same_shape(blurry, reblurred, "reblur_residual");
    ReblurResidual r;
    r.mse = mse(blurry, reblurred);
    r.psnr = psnr_from_mse(r.mse);
    return r;
}

struct FrameMetrics {
    int frame_index = 0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    std::vector<FrameMetrics> per_frame;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double reblur_residual_mse = 0.0;
    double reblur_residual_psnr = 0.0;
};

/// Full-reference report for a reconstructed sequence against ground truth,
/// plus the reblur residual against the blurry input.
inline MetricReport evaluate_sequence(const FrameSequence& reconstructed,
                                      const FrameSequence& ground_truth, const Image& blurry) {
    if (reconstructed.size() != ground_truth.size())
        throw std::invalid_argument("evaluate_sequence: sequence length mismatch");
    MetricReport rep;
    double sum_psnr = 0.0;
    double sum_ssim = 0.0;
    for (std::size_t m = 0; m < reconstructed.size(); ++m) {
        FrameMetrics fm;
        fm.frame_index = static_cast<int>(m);
        fm.psnr = psnr(reconstructed[m], ground_truth[m]);
        fm.ssim = ssim(reconstructed[m], ground_truth[m]);
        sum_psnr += fm.psnr;
        sum_ssim += fm.ssim;
        rep.per_frame.push_back(fm);
    }
    rep.mean_psnr = sum_psnr / static_cast<double>(reconstructed.size());
    rep.mean_ssim = sum_ssim / static_cast<double>(reconstructed.size());
    const ReblurResidual rr = reblur_residual(blurry, reconstructed);
    rep.reblur_residual_mse = rr.mse;
    rep.reblur_residual_psnr = rr.psnr;
    return rep;
}

/// One row per frame plus a summary row.
inline std::string report_to_csv(const MetricReport& report) {
    std::ostringstream out;
    out.precision(12);
    out << "frame,psnr_db,ssim\n";
    for (const FrameMetrics& fm : report.per_frame)
        out << fm.frame_index << ',' << fm.psnr << ',' << fm.ssim << '\n';
    out << "mean," << report.mean_psnr << ',' << report.mean_ssim << '\n';
    out << "reblur_residual_mse," << report.reblur_residual_mse << ",\n";
    out << "reblur_residual_psnr," << report.reblur_residual_psnr << ",\n";
    return out.str();
}

inline nlohmann::json report_to_json(const MetricReport& report) {
    nlohmann::json j;
    j["per_frame"] = nlohmann::json::array();
    for (const FrameMetrics& fm : report.per_frame)
        j["per_frame"].push_back(
            {{"frame_index", fm.frame_index}, {"psnr", fm.psnr}, {"ssim", fm.ssim}});
    j["mean_psnr"] = report.mean_psnr;
    j["mean_ssim"] = report.mean_ssim;
    j["reblur_residual_mse"] = report.reblur_residual_mse;
    j["reblur_residual_psnr"] = report.reblur_residual_psnr;
    return j;
}

}  // namespace spikedeblur

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtu/dataset.hpp"
#include "mtu/pipeline.hpp"

namespace mtu::metrics {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) over all pixels and channels, capped at 100 dB.
double psnr(const ImagePlane& a, const ImagePlane& b);

/// Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, range 1),
/// averaged over channels and every position where the window fits.
double ssim(const ImagePlane& a, const ImagePlane& b);

/// 4x4 area average.
ImagePlane downsample_area(const ImagePlane& img, std::int64_t factor = 4);

struct AlignmentScore {
  double psnr = 0.0;
  double ssim = 0.0;
  double valid_fraction = 0.0;  // share of quarter-scale pixels whose warp read stayed inside
};

/// Warps the downsampled previous sharp frame with the quarter-scale
/// displacement and compares it with the downsampled current one on the
/// valid-warp mask.
AlignmentScore alignment_accuracy(const ImagePlane& gt_prev, const ImagePlane& gt_cur, const DisplacementMap& w_quarter);

/// Mean Euclidean distance between integer displacements and real flow,
/// both at quarter scale.
double endpoint_error(const DisplacementMap& w_quarter, const FlowField& flow_quarter);

double mean_abs_difference(const std::vector<ImagePlane>& a, const std::vector<ImagePlane>& b);

struct EvalRow {
  std::string video;  // "all" for the aggregate
  std::size_t frames = 0;
  double deblur_psnr = 0.0;
  double deblur_ssim = 0.0;
  double blurry_psnr = 0.0;
  double blurry_ssim = 0.0;
  std::optional<double> align_psnr;
  std::optional<double> align_ssim;
  std::optional<double> endpoint_error;  // needs flow files
};

struct EvalReport {
  std::vector<EvalRow> rows;  // one per video, then the aggregate
  Precision precision = Precision::full;
  bool alignment_probed = false;

  const EvalRow& aggregate() const { return rows.back(); }
};

struct EvalOptions {
  Precision precision = Precision::full;
  data::Split split = data::Split::test;
  /// Measure alignment even when the model has no motion compensation.
  bool probe_alignment = false;
};

/// Frame-weighted means in the aggregate row. Alignment metrics are
/// reported when the model computes displacements.
EvalReport evaluate_videos(const StackedModel<float>& model, const std::vector<std::string>& names,
                           const std::vector<data::VideoFrames>& videos, const EvalOptions& opts = {});

EvalReport evaluate_dataset(const StackedModel<float>& model, const data::Dataset& dataset, const EvalOptions& opts = {});

}  // namespace mtu::metrics

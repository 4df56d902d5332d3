#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mtu/metrics.hpp"
#include "mtu/report.hpp"
#include "mtu/train.hpp"

namespace mtu::ablation {

struct Variant {
  std::string name;
  ModelConfig config;
};

/// Named grids derived from `base`:
///   table1    - {residual learning} x {motion compensation + motion loss}
///   table2    - no MC; MC without motion loss; MC + loss without structure
///               injection; full model
///   structure - the two structure-injection components toggled separately
/// Unknown names throw std::invalid_argument.
std::vector<Variant> grid(const std::string& name, const ModelConfig& base);
std::vector<std::string> grid_names();

struct Row {
  std::string name;
  ModelConfig config;
  metrics::EvalRow metrics;  // aggregate over the evaluation videos
  double final_loss = 0.0;   // mean total loss over the last logged window
  double train_seconds = 0.0;
};

struct Options {
  train::TrainSchedule schedule;
  train::TrainOptions train;  // the seed is shared by every variant
  metrics::EvalOptions eval;  // alignment is always probed so every row has it
  std::function<void(const std::string& variant, const train::TrainRecord&)> on_record;
};

/// Trains every variant from the same seed on `train_videos` and evaluates
/// it on `eval_videos`.
std::vector<Row> run(const std::vector<Variant>& variants, const std::vector<data::VideoFrames>& train_videos,
                     const std::vector<std::string>& eval_names, const std::vector<data::VideoFrames>& eval_videos,
                     const Options& opts);

std::vector<Row> run(const std::vector<Variant>& variants, const data::Dataset& dataset, const Options& opts);

const Row& find_row(const std::vector<Row>& rows, const std::string& name);

report::Rendered render(const std::vector<Row>& rows, const std::string& title);

}  // namespace mtu::ablation

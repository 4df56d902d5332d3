#include "mtu/ablation.hpp"

#include <chrono>
#include <stdexcept>

#include <json.hpp>

namespace mtu::ablation {

using json = nlohmann::json;

namespace {

ModelConfig with(ModelConfig cfg, bool residual, bool mc, bool motion_loss, bool addition, bool motion_layer) {
  cfg.enable_residual_learning = residual;
  cfg.enable_motion_compensation = mc;
  cfg.enable_motion_loss = motion_loss;
  cfg.enable_structure_injection_addition = addition;
  cfg.enable_motion_layer = motion_layer;
  return validate_config(cfg);
}

double tail_mean_loss(const std::vector<train::TrainRecord>& records) {
  if (records.empty()) return 0.0;
  const std::size_t window = std::min<std::size_t>(records.size(), 100);
  double sum = 0.0;
  for (std::size_t i = records.size() - window; i < records.size(); ++i) sum += records[i].loss;
  return sum / static_cast<double>(window);
}

std::string on_off(bool v) { return v ? "on" : "off"; }

}  // namespace

std::vector<std::string> grid_names() { return {"table1", "table2", "structure"}; }

std::vector<Variant> grid(const std::string& name, const ModelConfig& base) {
  if (name == "table1") {
    return {{"baseline", with(base, false, false, false, true, true)},
            {"residual", with(base, true, false, false, true, true)},
            {"mc", with(base, false, true, true, true, true)},
            {"residual_mc", with(base, true, true, true, true, true)}};
  }
  if (name == "table2") {
    return {{"no_mc", with(base, true, false, false, true, true)},
            {"mc_no_motion_loss", with(base, true, true, false, true, true)},
            {"mc_loss_no_si", with(base, true, true, true, false, false)},
            {"full", with(base, true, true, true, true, true)}};
  }
  if (name == "structure") {
    return {{"full", with(base, true, true, true, true, true)},
            {"no_addition", with(base, true, true, true, false, true)},
            {"no_motion_layer", with(base, true, true, true, true, false)},
            {"no_si", with(base, true, true, true, false, false)}};
  }
  throw std::invalid_argument("unknown ablation grid '" + name + "' (expected table1, table2 or structure)");
}

std::vector<Row> run(const std::vector<Variant>& variants, const std::vector<data::VideoFrames>& train_videos,
                     const std::vector<std::string>& eval_names, const std::vector<data::VideoFrames>& eval_videos,
                     const Options& opts) {
  std::vector<Row> rows;
  for (const auto& v : variants) {
    train::TrainOptions to = opts.train;
    if (!to.out_dir.empty()) to.out_dir = to.out_dir / v.name;
    to.resume.reset();
    if (opts.on_record) {
      to.on_record = [&](const train::TrainRecord& r) { opts.on_record(v.name, r); };
    }
    const auto start = std::chrono::steady_clock::now();
    auto trained = train::train(StackedModel<float>::create(v.config, to.seed), train_videos, opts.schedule, to);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    metrics::EvalOptions eo = opts.eval;
    eo.probe_alignment = true;
    const auto report = metrics::evaluate_videos(trained.model, eval_names, eval_videos, eo);
    rows.push_back({v.name, v.config, report.aggregate(), tail_mean_loss(trained.records), seconds});
  }
  return rows;
}

std::vector<Row> run(const std::vector<Variant>& variants, const data::Dataset& dataset, const Options& opts) {
  if (dataset.train.empty()) throw std::invalid_argument("dataset has no training videos");
  bool with_flow = false;
  for (const auto& v : variants) with_flow = with_flow || train::needs_flow(v.config);
  std::vector<data::VideoFrames> train_videos;
  for (const auto& e : dataset.train) train_videos.push_back(data::load_video(e, with_flow));
  const auto& eval_entries = dataset.videos(opts.eval.split);
  if (eval_entries.empty()) throw std::invalid_argument("dataset has no " + data::to_string(opts.eval.split) + " videos");
  std::vector<std::string> names;
  std::vector<data::VideoFrames> eval_videos;
  for (const auto& e : eval_entries) {
    names.push_back(e.name);
    eval_videos.push_back(data::load_video(e, e.has_flow));
  }
  return run(variants, train_videos, names, eval_videos, opts);
}

const Row& find_row(const std::vector<Row>& rows, const std::string& name) {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw std::out_of_range("ablation: no row named '" + name + "'");
}

report::Rendered render(const std::vector<Row>& rows, const std::string& title) {
  report::TextTable table({"variant", "residual", "MC", "motion loss", "addition", "motion layer", "PSNR", "SSIM",
                           "blurry PSNR", "align PSNR", "align SSIM", "EPE", "loss", "train s"});
  json out = json::array();
  for (const auto& r : rows) {
    const auto& c = r.config;
    const auto& m = r.metrics;
    auto cell = [](const std::optional<double>& v, int d) { return v ? report::fixed(*v, d) : std::string("-"); };
    table.add_row({r.name, on_off(c.enable_residual_learning), on_off(c.enable_motion_compensation),
                   on_off(c.enable_motion_loss), on_off(c.enable_structure_injection_addition),
                   on_off(c.enable_motion_layer), report::fixed(m.deblur_psnr, 2), report::fixed(m.deblur_ssim, 4),
                   report::fixed(m.blurry_psnr, 2), cell(m.align_psnr, 2), cell(m.align_ssim, 4),
                   cell(m.endpoint_error, 3), report::fixed(r.final_loss, 4), report::fixed(r.train_seconds, 1)});
    json metrics = json::array();
    auto add = [&](const std::string& n, double v, const std::string& u) {
      metrics.push_back(json{{"name", n}, {"value", v}, {"units", u}});
    };
    add("deblur_psnr", m.deblur_psnr, "dB");
    add("deblur_ssim", m.deblur_ssim, "1");
    add("blurry_psnr", m.blurry_psnr, "dB");
    if (m.align_psnr) add("align_psnr", *m.align_psnr, "dB");
    if (m.align_ssim) add("align_ssim", *m.align_ssim, "1");
    if (m.endpoint_error) add("endpoint_error", *m.endpoint_error, "px (quarter scale)");
    add("final_loss", r.final_loss, "1");
    add("train_seconds", r.train_seconds, "s");
    out.push_back(json{{"variant", r.name},
                       {"switches",
                        {{"residual_learning", c.enable_residual_learning},
                         {"motion_compensation", c.enable_motion_compensation},
                         {"motion_loss", c.enable_motion_loss},
                         {"structure_injection_addition", c.enable_structure_injection_addition},
                         {"motion_layer", c.enable_motion_layer}}},
                       {"metrics", std::move(metrics)}});
  }
  json doc{{"report", "ablation"}, {"title", title}, {"rows", std::move(out)}};
  return {title + "\n" + table.str(), doc.dump(2) + "\n"};
}

}  // namespace mtu::ablation

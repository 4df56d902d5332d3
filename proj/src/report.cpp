#include "mtu/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>
#include "mtu/image_io.hpp"

namespace mtu::report {

using json = nlohmann::json;

namespace {

json metric(const std::string& name, double value, const std::string& units) {
  return json{{"name", name}, {"value", value}, {"units", units}};
}

std::string optional_cell(const std::optional<double>& v, int decimals) { return v ? fixed(*v, decimals) : "-"; }

}  // namespace

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

TextTable::TextTable(std::vector<std::string> header) { rows_.push_back(std::move(header)); }

void TextTable::add_row(std::vector<std::string> row) {
  row.resize(rows_.front().size());
  rows_.push_back(std::move(row));
}

std::string TextTable::str() const {
  std::vector<std::size_t> widths(rows_.front().size(), 0);
  for (const auto& row : rows_)
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out << "  ";
      // First column left-aligned, numbers right-aligned.
      if (c == 0) {
        out << row[c] << std::string(widths[c] - row[c].size(), ' ');
      } else {
        out << std::string(widths[c] - row[c].size(), ' ') << row[c];
      }
    }
    out << '\n';
  };
  emit(rows_.front());
  std::size_t total = 0;
  for (auto w : widths) total += w;
  out << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
  for (std::size_t r = 1; r < rows_.size(); ++r) emit(rows_[r]);
  return out.str();
}

Rendered render_eval(const metrics::EvalReport& report) {
  TextTable table({"video", "frames", "PSNR", "SSIM", "blurry PSNR", "blurry SSIM", "align PSNR", "align SSIM", "EPE"});
  json rows = json::array();
  for (const auto& r : report.rows) {
    table.add_row({r.video, std::to_string(r.frames), fixed(r.deblur_psnr, 2), fixed(r.deblur_ssim, 4),
                   fixed(r.blurry_psnr, 2), fixed(r.blurry_ssim, 4), optional_cell(r.align_psnr, 2),
                   optional_cell(r.align_ssim, 4), optional_cell(r.endpoint_error, 3)});
    json m = json::array({metric("deblur_psnr", r.deblur_psnr, "dB"), metric("deblur_ssim", r.deblur_ssim, "1"),
                          metric("blurry_psnr", r.blurry_psnr, "dB"), metric("blurry_ssim", r.blurry_ssim, "1")});
    if (r.align_psnr) m.push_back(metric("align_psnr", *r.align_psnr, "dB"));
    if (r.align_ssim) m.push_back(metric("align_ssim", *r.align_ssim, "1"));
    if (r.endpoint_error) m.push_back(metric("endpoint_error", *r.endpoint_error, "px (quarter scale)"));
    rows.push_back(json{{"video", r.video}, {"frames", r.frames}, {"metrics", std::move(m)}});
  }
  json doc{{"report", "evaluation"},
           {"precision", to_string(report.precision)},
           {"alignment_probed", report.alignment_probed},
           {"rows", std::move(rows)}};
  std::string title = "evaluation (" + to_string(report.precision) + " precision)\n";
  return {title + table.str(), doc.dump(2) + "\n"};
}

Rendered render_latency(const std::vector<bench::LatencyReport>& reports, const std::string& title) {
  TextTable table({"model", "backend", "size", "precision", "params", "sync mean ms", "sync median ms", "fps",
                   "naive mean ms"});
  json rows = json::array();
  for (const auto& r : reports) {
    const std::string size = std::to_string(r.width) + "x" + std::to_string(r.height);
    const bool has_naive = !r.naive.samples_ms.empty();
    table.add_row({r.label, r.backend, size, to_string(r.precision), std::to_string(r.params), fixed(r.sync.mean_ms, 3),
                   fixed(r.sync.median_ms, 3), fixed(r.sync.fps, 2), has_naive ? fixed(r.naive.mean_ms, 3) : "-"});
    json m = json::array({metric("sync_mean", r.sync.mean_ms, "ms"), metric("sync_median", r.sync.median_ms, "ms"),
                          metric("fps", r.sync.fps, "frames/s"), metric("params", static_cast<double>(r.params), "count")});
    if (has_naive) {
      m.push_back(metric("naive_mean", r.naive.mean_ms, "ms"));
      m.push_back(metric("naive_median", r.naive.median_ms, "ms"));
    }
    rows.push_back(json{{"model", r.label},
                        {"backend", r.backend},
                        {"width", r.width},
                        {"height", r.height},
                        {"frames", r.frames},
                        {"precision", to_string(r.precision)},
                        {"metrics", std::move(m)}});
  }
  json doc{{"report", "latency"}, {"title", title}, {"rows", std::move(rows)}};
  return {title + "\n" + table.str(), doc.dump(2) + "\n"};
}

void write_rendered(const Rendered& rendered, const std::filesystem::path& base) {
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
  io::write_file_atomic(std::filesystem::path(base.string() + ".txt"), rendered.table);
  io::write_file_atomic(std::filesystem::path(base.string() + ".json"), rendered.json);
}

}  // namespace mtu::report

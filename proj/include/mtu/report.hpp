#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mtu/bench.hpp"
#include "mtu/metrics.hpp"

namespace mtu::report {

/// Every report is emitted twice: an aligned text table for people and a
/// JSON document whose metrics carry name, value and units.
struct Rendered {
  std::string table;
  std::string json;
};

Rendered render_eval(const metrics::EvalReport& report);
Rendered render_latency(const std::vector<bench::LatencyReport>& reports, const std::string& title);

/// Writes `<base>.txt` and `<base>.json` atomically.
void write_rendered(const Rendered& rendered, const std::filesystem::path& base);

/// Minimal column-aligned table builder shared by the renderers.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header);
  void add_row(std::vector<std::string> row);
  std::string str() const;

 private:
  std::vector<std::vector<std::string>> rows_;
};

std::string fixed(double value, int decimals);

}  // namespace mtu::report

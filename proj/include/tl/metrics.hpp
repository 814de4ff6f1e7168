#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace tl {

// Round-trippable decimal ("%.17g").
std::string format_double(double v);

// Append-only CSV with a fixed header; step numbers must not decrease. Each
// record is flushed so a crashed run keeps its history.
class MetricsLog {
 public:
  MetricsLog(const std::filesystem::path& path, std::vector<std::string> columns);

  void append(int64_t step, const std::vector<double>& values);
  const std::vector<std::string>& columns() const { return columns_; }
  int64_t last_step() const { return last_step_; }

 private:
  std::ofstream out_;
  std::vector<std::string> columns_;
  int64_t last_step_ = -1;
};

// Wall-clock side log (kept apart from MetricsLog so metrics stay bit-reproducible).
class TimingLog {
 public:
  explicit TimingLog(const std::filesystem::path& path);
  // Seconds since the previous mark (or construction), with an optional throughput.
  void mark(int64_t step, const std::string& what, double items = 0.0);

 private:
  std::ofstream out_;
  std::chrono::steady_clock::time_point last_;
};

struct Report {
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> notes;

  void add_row(std::vector<std::string> row);
  void write_csv(const std::filesystem::path& path) const;
  void write_markdown(const std::filesystem::path& path) const;
};

}  // namespace tl

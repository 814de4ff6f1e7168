#include "tl/metrics.hpp"

#include <cstdio>

#include "tl/errors.hpp"

namespace tl {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

MetricsLog::MetricsLog(const std::filesystem::path& path, std::vector<std::string> columns)
    : out_(path), columns_(std::move(columns)) {
  if (!out_) throw IoError("cannot write " + path.string());
  out_ << "step";
  for (const auto& c : columns_) out_ << ',' << c;
  out_ << '\n' << std::flush;
}

void MetricsLog::append(int64_t step, const std::vector<double>& values) {
  if (values.size() != columns_.size()) throw ContractError("metrics record has the wrong number of values");
  if (step < last_step_) throw ContractError("metrics steps must not decrease");
  last_step_ = step;
  out_ << step;
  for (double v : values) out_ << ',' << format_double(v);
  out_ << '\n' << std::flush;
}

TimingLog::TimingLog(const std::filesystem::path& path) : out_(path), last_(std::chrono::steady_clock::now()) {
  if (!out_) throw IoError("cannot write " + path.string());
  out_ << "step,what,seconds,items_per_sec\n";
}

void TimingLog::mark(int64_t step, const std::string& what, double items) {
  const auto now = std::chrono::steady_clock::now();
  const double s = std::chrono::duration<double>(now - last_).count();
  last_ = now;
  out_ << step << ',' << what << ',' << format_double(s) << ',' << format_double(items > 0 && s > 0 ? items / s : 0.0)
       << '\n' << std::flush;
}

void Report::add_row(std::vector<std::string> row) {
  if (row.size() != columns.size()) throw ContractError("report row has the wrong number of cells");
  rows.push_back(std::move(row));
}

void Report::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  }
}

void Report::write_markdown(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# " << title << "\n\n|";
  for (const auto& c : columns) out << ' ' << c << " |";
  out << "\n|";
  for (std::size_t i = 0; i < columns.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& r : rows) {
    out << '|';
    for (const auto& c : r) out << ' ' << c << " |";
    out << '\n';
  }
  if (!notes.empty()) out << '\n';
  for (const auto& n : notes) out << n << "\n\n";
}

}  // namespace tl

#pragma once

// Plot-ready result files. Every CSV starts with a '#' comment block holding
// the experiment, the config hash and the seeds, followed by one header row.
// Numbers are written in shortest round-trip form, so identical results give
// identical bytes.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace collemit {

struct OutputHeader {
  std::string experiment;
  std::string config_hash;
  std::uint64_t master_seed = 0;
  std::size_t realizations = 0;
  /// Extra "key: value" lines.
  std::vector<std::string> notes;
};

std::string format_number(double x);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const OutputHeader& header,
            const std::vector<std::string>& columns);

  void row(std::span<const double> values);
  void row(std::initializer_list<double> values) {
    row(std::span<const double>(values.begin(), values.size()));
  }

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::filesystem::path path_;
};

/// Dense grid: first column the row coordinate, then one column per column
/// coordinate; values are row-major [row * cols + col].
void write_dense_grid(const std::filesystem::path& path,
                      const OutputHeader& header, const std::string& row_name,
                      std::span<const double> rows, const std::string& col_name,
                      std::span<const double> cols,
                      std::span<const double> values);

/// Realization index and seed per line. Seeds are written as integers since
/// they exceed the exactly representable double range.
void write_seed_table(const std::filesystem::path& path,
                      const OutputHeader& header,
                      std::span<const std::size_t> indices,
                      std::span<const std::uint64_t> seeds);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace collemit

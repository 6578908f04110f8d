#include "collemit/output.hpp"

#include <fmt/format.h>

#include "collemit/error.hpp"

namespace collemit {

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_header(std::ofstream& out, const OutputHeader& h) {
  out << "# experiment: " << h.experiment << '\n'
      << "# config_hash: fnv1a64:" << h.config_hash << '\n'
      << "# master_seed: " << h.master_seed << '\n'
      << "# realizations: " << h.realizations << '\n';
  for (const auto& note : h.notes) out << "# " << note << '\n';
}

}  // namespace

std::string format_number(double x) { return fmt::format("{}", x); }

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const OutputHeader& header,
                     const std::vector<std::string>& columns)
    : out_(open_output(path)), columns_(columns.size()), path_(path) {
  write_header(out_, header);
  for (std::size_t i = 0; i < columns.size(); ++i)
    out_ << (i ? "," : "") << columns[i];
  out_ << '\n';
}

void CsvWriter::row(std::span<const double> values) {
  if (values.size() != columns_)
    throw std::logic_error(fmt::format("{}: row has {} values, expected {}",
                                       path_.string(), values.size(), columns_));
  for (std::size_t i = 0; i < values.size(); ++i)
    out_ << (i ? "," : "") << format_number(values[i]);
  out_ << '\n';
}

void write_dense_grid(const std::filesystem::path& path,
                      const OutputHeader& header, const std::string& row_name,
                      std::span<const double> rows, const std::string& col_name,
                      std::span<const double> cols,
                      std::span<const double> values) {
  if (values.size() != rows.size() * cols.size())
    throw std::logic_error("write_dense_grid: value count mismatch");
  auto out = open_output(path);
  write_header(out, header);
  out << "# rows: " << row_name << ", columns: " << col_name << '\n';
  out << row_name << "\\" << col_name;
  for (double c : cols) out << ',' << format_number(c);
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << format_number(rows[r]);
    for (std::size_t c = 0; c < cols.size(); ++c)
      out << ',' << format_number(values[r * cols.size() + c]);
    out << '\n';
  }
}

void write_seed_table(const std::filesystem::path& path,
                      const OutputHeader& header,
                      std::span<const std::size_t> indices,
                      std::span<const std::uint64_t> seeds) {
  auto out = open_output(path);
  write_header(out, header);
  out << "index,seed\n";
  for (std::size_t k = 0; k < indices.size(); ++k)
    out << indices[k] << ',' << seeds[k] << '\n';
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
}

}  // namespace collemit

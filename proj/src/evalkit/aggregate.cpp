#include "dfseg/evalkit.hpp"

#include "dfseg/errors.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace dfseg::evalkit {
namespace {

AggregateRow summarize(const std::string& name, const std::vector<double>& values,
                       std::size_t excluded) {
  AggregateRow row;
  row.metric = name;
  row.n = values.size();
  row.excluded = excluded;
  if (values.empty()) return row;
  double sum = 0.0;
  for (double v : values) sum += v;
  row.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - row.mean) * (v - row.mean);
  row.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return row;
}

}  // namespace

std::vector<AggregateRow> aggregate(const std::vector<MetricRecord>& records) {
  if (records.empty()) throw ValidationError("aggregate: no metric records");
  using Getter = std::function<double(const MetricRecord&)>;
  const std::vector<std::pair<std::string, Getter>> overlap{
      {"dsc", [](const MetricRecord& r) { return r.dsc; }},
      {"jsc", [](const MetricRecord& r) { return r.jsc; }}};
  const std::vector<std::pair<std::string, Getter>> distance{
      {"mad_px", [](const MetricRecord& r) { return r.mad_px; }},
      {"hd_px", [](const MetricRecord& r) { return r.hd_px; }},
      {"mad_norm", [](const MetricRecord& r) { return r.mad_norm; }},
      {"hd_norm", [](const MetricRecord& r) { return r.hd_norm; }}};

  std::vector<AggregateRow> rows;
  for (const auto& [name, get] : overlap) {
    std::vector<double> v;
    for (const auto& r : records) v.push_back(get(r));
    rows.push_back(summarize(name, v, 0));
  }
  for (const auto& [name, get] : distance) {
    std::vector<double> v;
    std::size_t excluded = 0;
    for (const auto& r : records) {
      if (r.flag == Degenerate::none) {
        v.push_back(get(r));
      } else {
        ++excluded;
      }
    }
    rows.push_back(summarize(name, v, excluded));
  }
  return rows;
}

const AggregateRow& find_row(const std::vector<AggregateRow>& rows, const std::string& metric) {
  for (const auto& r : rows) {
    if (r.metric == metric) return r;
  }
  throw ValidationError("no aggregate row for metric '" + metric + "'");
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out.precision(17);
  out << "sample_id,dsc,jsc,mad_px,hd_px,mad_norm,hd_norm,flag\n";
  for (const auto& r : records) {
    out << r.sample_id << ',' << r.dsc << ',' << r.jsc << ',' << r.mad_px << ',' << r.hd_px << ','
        << r.mad_norm << ',' << r.hd_norm << ',' << to_string(r.flag) << '\n';
  }
}

std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "sample_id,dsc,jsc,mad_px,hd_px,mad_norm,hd_norm,flag") {
    throw ValidationError("unexpected metrics CSV header in " + path.string());
  }
  std::vector<MetricRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw ValidationError("malformed metrics CSV row: " + line);
    MetricRecord r;
    r.sample_id = cells[0];
    r.dsc = std::stod(cells[1]);
    r.jsc = std::stod(cells[2]);
    r.mad_px = std::stod(cells[3]);
    r.hd_px = std::stod(cells[4]);
    r.mad_norm = std::stod(cells[5]);
    r.hd_norm = std::stod(cells[6]);
    r.flag = parse_degenerate(cells[7]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dfseg::evalkit

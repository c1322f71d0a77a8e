#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "srmq/errors.hpp"
#include "srmq/format.hpp"
#include "srmq/sim.hpp"

namespace srmq {

namespace {

constexpr const char* kCsvHeader = "k,t_s,theta_deg,r_A,x_A,u_V,K1,K2,cell_row,cell_col,cost";

nlohmann::json to_json(const TraceRecord& r) {
  return {{"k", r.k},   {"t_s", r.t},         {"theta_deg", r.theta},
          {"r_A", r.r}, {"x_A", r.x},         {"u_V", r.u},
          {"K1", r.K1}, {"K2", r.K2},         {"cell_row", r.cell_row},
          {"cell_col", r.cell_col}, {"cost", r.cost}};
}

}  // namespace

TraceFormat parse_trace_format(const std::string& name) {
  if (name == "csv") return TraceFormat::Csv;
  if (name == "jsonl") return TraceFormat::Jsonl;
  throw ValidationError("unknown trace format '" + name + "' (csv or jsonl)");
}

void export_trace(const SimTrace& trace, const std::filesystem::path& path,
                  TraceFormat format) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("trace: cannot write " + path.string());
  if (format == TraceFormat::Csv) {
    out << kCsvHeader << '\n';
    for (const auto& r : trace.records) {
      out << r.k << ',' << format_double(r.t) << ',' << format_double(r.theta) << ','
          << format_double(r.r) << ',' << format_double(r.x) << ','
          << format_double(r.u) << ',' << format_double(r.K1) << ','
          << format_double(r.K2) << ',' << r.cell_row << ',' << r.cell_col << ','
          << format_double(r.cost) << '\n';
    }
  } else {
    for (const auto& r : trace.records) out << to_json(r).dump() << '\n';
  }
  if (!out) throw std::runtime_error("trace: write failed for " + path.string());
}

std::vector<TraceRecord> import_trace(const std::filesystem::path& path,
                                      TraceFormat format) {
  std::ifstream in(path);
  if (!in) throw ValidationError("trace: cannot open " + path.string());
  std::vector<TraceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw ValidationError("trace: " + path.string() + ":" + std::to_string(line_no) + ": " + what);
  };

  if (format == TraceFormat::Csv) {
    if (!std::getline(in, line) || line != kCsvHeader) fail("missing or unexpected header");
    ++line_no;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::vector<double> v;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) {
        const auto d = parse_double(cell);
        if (!d) fail("bad number '" + cell + "'");
        v.push_back(*d);
      }
      if (v.size() != 11) fail("expected 11 columns");
      TraceRecord r;
      r.k = static_cast<std::int64_t>(v[0]);
      r.t = v[1];
      r.theta = v[2];
      r.r = v[3];
      r.x = v[4];
      r.u = v[5];
      r.K1 = v[6];
      r.K2 = v[7];
      r.cell_row = static_cast<int>(v[8]);
      r.cell_col = static_cast<int>(v[9]);
      r.cost = v[10];
      records.push_back(r);
    }
  } else {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        TraceRecord r;
        r.k = j.at("k").get<std::int64_t>();
        r.t = j.at("t_s").get<double>();
        r.theta = j.at("theta_deg").get<double>();
        r.r = j.at("r_A").get<double>();
        r.x = j.at("x_A").get<double>();
        r.u = j.at("u_V").get<double>();
        r.K1 = j.at("K1").get<double>();
        r.K2 = j.at("K2").get<double>();
        r.cell_row = j.at("cell_row").get<int>();
        r.cell_col = j.at("cell_col").get<int>();
        r.cost = j.at("cost").get<double>();
        records.push_back(r);
      } catch (const nlohmann::json::exception& e) {
        fail(e.what());
      }
    }
  }
  return records;
}

}  // namespace srmq

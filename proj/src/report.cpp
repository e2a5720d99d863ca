#include "terc/report.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "terc/common.hpp"
#include "terc/sample_table.hpp"

namespace terc {

ReportFormat report_format_from_string(std::string_view name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  if (name == "dot") return ReportFormat::dot;
  if (name == "plotdata") return ReportFormat::plotdata;
  throw ConfigError("unknown report format '" + std::string(name) + "' (expected csv, json, dot or plotdata)");
}

Units units_from_string(std::string_view name) {
  if (name == "nats") return Units::nats;
  if (name == "bits") return Units::bits;
  throw ConfigError("unknown units '" + std::string(name) + "' (expected nats or bits)");
}

void validate_report(const nlohmann::ordered_json& report) {
  if (!report.is_object() || report.value("format", "") != "terc-report") {
    throw std::invalid_argument("not a terc report (missing \"format\": \"terc-report\")");
  }
  if (report.value("version", 0) != 1) throw std::invalid_argument("unsupported report version");
  for (const char* key : {"variables", "null_model", "selected", "significant"}) {
    if (!report.contains(key)) throw std::invalid_argument(std::string("report lacks \"") + key + "\"");
  }
  if (!report["variables"].is_array()) throw std::invalid_argument("report variables must be an array");
  for (const auto& v : report["variables"]) {
    if (!v.contains("variable") || !v.contains("significant")) {
      throw std::invalid_argument("report variable entries need \"variable\" and \"significant\"");
    }
  }
}

namespace {

constexpr const char* kColumns[] = {"phi_mean", "phi_std", "lower", "upper"};

std::string cell(const nlohmann::ordered_json& value, double scale) {
  if (!value.is_number()) return "";
  return format_double(value.get<double>() * scale);
}

double unit_scale(Units units) { return units == Units::bits ? 1.0 / std::numbers::ln2 : 1.0; }

std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_rows(std::ostringstream& out, const std::string& prefix, const nlohmann::ordered_json& variables,
                const nlohmann::ordered_json& null_model, double scale) {
  const std::string bound = null_model.is_object() ? cell(null_model.value("upper", nlohmann::ordered_json()), scale) : "";
  for (const auto& v : variables) {
    out << prefix << quoted(v.at("variable").get<std::string>());
    for (const char* c : kColumns) out << ',' << cell(v.value(c, nlohmann::ordered_json()), scale);
    out << ',' << bound << ',' << (v.value("significant", false) ? "true" : "false") << '\n';
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

nlohmann::ordered_json parse_number(const std::string& s) {
  if (s.empty()) return nullptr;
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

}  // namespace

std::string report_to_csv(const nlohmann::ordered_json& report, Units units) {
  validate_report(report);
  std::ostringstream out;
  out << "variable,phi_mean,phi_std,lower,upper,null_bound,significant\n";
  write_rows(out, "", report["variables"], report["null_model"], unit_scale(units));
  return out.str();
}

nlohmann::ordered_json report_from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      split_csv_line(line) != std::vector<std::string>{"variable", "phi_mean", "phi_std", "lower", "upper",
                                                       "null_bound", "significant"}) {
    throw std::invalid_argument("not a terc report CSV (unexpected header)");
  }
  nlohmann::ordered_json variables = nlohmann::ordered_json::array();
  nlohmann::ordered_json bound = nullptr;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 7) throw std::invalid_argument("report CSV line " + std::to_string(line_no) + ": expected 7 cells");
    nlohmann::ordered_json v;
    v["variable"] = cells[0];
    for (std::size_t k = 0; k < 4; ++k) v[kColumns[k]] = parse_number(cells[k + 1]);
    bound = parse_number(cells[5]);
    if (cells[6] != "true" && cells[6] != "false") {
      throw std::invalid_argument("report CSV line " + std::to_string(line_no) + ": significant must be true or false");
    }
    v["significant"] = cells[6] == "true";
    variables.push_back(std::move(v));
  }
  return {{"variables", std::move(variables)}, {"null_model", {{"upper", bound}}}};
}

std::string report_to_dot(const nlohmann::ordered_json& report) {
  validate_report(report);
  std::ostringstream out;
  out << "digraph terc {\n";
  out << "  \"A\" [shape=box];\n";
  for (const auto& v : report["variables"]) out << "  \"" << v.at("variable").get<std::string>() << "\";\n";
  for (const auto& v : report["variables"]) {
    if (v.value("significant", false)) out << "  \"" << v.at("variable").get<std::string>() << "\" -> \"A\";\n";
  }
  out << "}\n";
  return out.str();
}

std::string report_to_plotdata(const nlohmann::ordered_json& report, Units units) {
  validate_report(report);
  std::ostringstream out;
  out << "segment,variable,phi_mean,phi_std,lower,upper,null_bound,significant\n";
  const double scale = unit_scale(units);
  const auto quartiles = report.value("quartiles", nlohmann::ordered_json::array());
  if (quartiles.is_array() && !quartiles.empty()) {
    for (const auto& q : quartiles) {
      write_rows(out, "q" + std::to_string(q.at("quartile").get<int>()) + ",", q.at("variables"),
                 q.value("null_model", nlohmann::ordered_json()), scale);
    }
  } else {
    write_rows(out, "all,", report["variables"], report["null_model"], scale);
  }
  return out.str();
}

std::string render_report(const nlohmann::ordered_json& report, ReportFormat format, Units units) {
  switch (format) {
    case ReportFormat::json:
      validate_report(report);
      return report.dump(2) + "\n";
    case ReportFormat::csv: return report_to_csv(report, units);
    case ReportFormat::dot: return report_to_dot(report);
    case ReportFormat::plotdata: return report_to_plotdata(report, units);
  }
  return {};
}

}  // namespace terc

#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

#include "json.hpp"

// Analysis reports are JSON documents:
//
//   {"format": "terc-report", "version": 1,
//    "provenance": {...}, "units": "nats",
//    "variables": [{"variable", "phi_mean", "phi_std", "lower", "upper",
//                   "runs", "context", "selected", "significant", "failed"}],
//    "null_model": {"mean", "std", "upper", "runs"},
//    "selected": [...], "significant": [...],
//    "selection": {...}, "quartiles": [...], "baselines": {...},
//    "failures": [...]}
//
// Failed estimates hold null statistics. This header renders a report into
// its other formats.
namespace terc {

enum class ReportFormat { json, csv, dot, plotdata };
ReportFormat report_format_from_string(std::string_view name);

enum class Units { nats, bits };
Units units_from_string(std::string_view name);

// Throws std::invalid_argument when required report fields are missing.
void validate_report(const nlohmann::ordered_json& report);

// variable,phi_mean,phi_std,lower,upper,null_bound,significant with reals
// printed to 17 significant digits (empty cells for failed estimates).
std::string report_to_csv(const nlohmann::ordered_json& report, Units units = Units::nats);
// Inverse of report_to_csv: {"variables": [...], "null_model": {"upper": x}}.
nlohmann::ordered_json report_from_csv(std::istream& in);

// digraph with one edge per significant variable into the action node.
std::string report_to_dot(const nlohmann::ordered_json& report);

// Long format, one row per variable and segment:
// segment,variable,phi_mean,phi_std,lower,upper,null_bound,significant.
// With quartile analysis the segments are q1..q4, otherwise a single "all".
std::string report_to_plotdata(const nlohmann::ordered_json& report, Units units = Units::nats);

std::string render_report(const nlohmann::ordered_json& report, ReportFormat format, Units units = Units::nats);

}  // namespace terc

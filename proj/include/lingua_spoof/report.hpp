#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lingua_spoof/attack.hpp"
#include "lingua_spoof/csv.hpp"
#include "lingua_spoof/error.hpp"

namespace lingua_spoof {

struct MetricsSummary {
  std::size_t n_total = 0;
  std::size_t n_originally_correct = 0;
  std::size_t n_correct_under_attack = 0;
  std::size_t n_flipped = 0;
  double oc = 0.0;   // percent
  double aua = 0.0;  // percent
  double asr = 0.0;  // percent
  double cos = 0.0;  // percent

  friend bool operator==(const MetricsSummary&, const MetricsSummary&) = default;
};

// OC/AUA/ASR from counts; COS is supplied separately.
inline MetricsSummary metrics_from_counts(std::size_t n_total, std::size_t n_originally_correct,
                                          std::size_t n_correct_under_attack) {
  if (n_total == 0) fail(ErrorCode::EmptyRun, "no samples");
  if (n_originally_correct > n_total || n_correct_under_attack > n_originally_correct) {
    fail(ErrorCode::InvalidArgument, "inconsistent counts");
  }
  MetricsSummary m;
  m.n_total = n_total;
  m.n_originally_correct = n_originally_correct;
  m.n_correct_under_attack = n_correct_under_attack;
  m.n_flipped = n_originally_correct - n_correct_under_attack;
  const double n = static_cast<double>(n_total);
  m.oc = 100.0 * static_cast<double>(n_originally_correct) / n;
  m.aua = 100.0 * static_cast<double>(n_correct_under_attack) / n;
  m.asr = n_originally_correct == 0
              ? 0.0
              : 100.0 * static_cast<double>(m.n_flipped) / static_cast<double>(n_originally_correct);
  return m;
}

// Already-bona-fide samples count towards n_total only. COS averages the
// semantic similarity of every attacked sample.
inline MetricsSummary compute_metrics(std::span<const AttackOutcome> outcomes) {
  if (outcomes.empty()) fail(ErrorCode::EmptyRun, "no outcomes");
  std::size_t correct = 0, still = 0;
  double cos_sum = 0.0;
  for (const auto& o : outcomes) {
    if (o.status == OutcomeStatus::AlreadyBonafide) continue;
    ++correct;
    if (!o.flipped) ++still;
    cos_sum += o.semantic_sim;
  }
  auto m = metrics_from_counts(outcomes.size(), correct, still);
  m.cos = correct == 0 ? 0.0 : 100.0 * cos_sum / static_cast<double>(correct);
  return m;
}

inline nlohmann::json metrics_to_json(const MetricsSummary& m) {
  return {{"n_total", m.n_total},
          {"n_originally_correct", m.n_originally_correct},
          {"n_correct_under_attack", m.n_correct_under_attack},
          {"n_flipped", m.n_flipped},
          {"oc", m.oc},
          {"aua", m.aua},
          {"asr", m.asr},
          {"cos", m.cos}};
}

inline MetricsSummary metrics_from_json(const nlohmann::json& j) {
  MetricsSummary m;
  try {
    m.n_total = j.at("n_total").get<std::size_t>();
    m.n_originally_correct = j.at("n_originally_correct").get<std::size_t>();
    m.n_correct_under_attack = j.at("n_correct_under_attack").get<std::size_t>();
    m.n_flipped = j.at("n_flipped").get<std::size_t>();
    m.oc = j.at("oc").get<double>();
    m.aua = j.at("aua").get<double>();
    m.asr = j.at("asr").get<double>();
    m.cos = j.at("cos").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("metrics: ") + e.what());
  }
  return m;
}

// One line of a results table: a (detector, voice, strategy) run.
struct ResultRow {
  std::string detector;
  std::string voice;
  std::string strategy;
  MetricsSummary metrics;
};

enum class ReportFormat { Markdown, Csv, Jsonl };

inline ReportFormat report_format_from_string(std::string_view s) {
  if (s == "md" || s == "markdown") return ReportFormat::Markdown;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "jsonl") return ReportFormat::Jsonl;
  fail(ErrorCode::InvalidArgument, "unknown report format '" + std::string(s) + "'");
}

inline std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << v;
  return os.str();
}

// Rows keep their input order; the max-ASR row of each detector is bolded
// (first one on ties).
inline void emit_report(std::span<const ResultRow> rows, ReportFormat format, std::ostream& os) {
  if (rows.empty()) fail(ErrorCode::EmptyRun, "nothing to report");
  switch (format) {
    case ReportFormat::Markdown: {
      std::map<std::string, std::size_t> best;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        auto [it, inserted] = best.emplace(rows[i].detector, i);
        if (!inserted && rows[i].metrics.asr > rows[it->second].metrics.asr) it->second = i;
      }
      os << "| Detector | Voice | Strategy | OC | AUA | ASR | COS |\n";
      os << "|---|---|---|---:|---:|---:|---:|\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const bool bold = best.at(r.detector) == i;
        auto cell = [&](const std::string& s) { return bold ? "**" + s + "**" : s; };
        os << "| " << r.detector << " | " << cell(r.voice) << " | " << r.strategy << " | "
           << cell(pct(r.metrics.oc)) << " | " << cell(pct(r.metrics.aua)) << " | "
           << cell(pct(r.metrics.asr)) << " | " << cell(pct(r.metrics.cos)) << " |\n";
      }
      break;
    }
    case ReportFormat::Csv: {
      os << "detector,voice,strategy,n_total,n_originally_correct,n_correct_under_attack,n_flipped,"
            "oc,aua,asr,cos\n";
      for (const auto& r : rows) {
        const auto& m = r.metrics;
        os << csv_cell(r.detector) << ',' << csv_cell(r.voice) << ',' << csv_cell(r.strategy) << ','
           << m.n_total << ',' << m.n_originally_correct << ',' << m.n_correct_under_attack << ','
           << m.n_flipped << ',' << pct(m.oc) << ',' << pct(m.aua) << ',' << pct(m.asr) << ','
           << pct(m.cos) << '\n';
      }
      break;
    }
    case ReportFormat::Jsonl: {
      for (const auto& r : rows) {
        auto j = metrics_to_json(r.metrics);
        j["detector"] = r.detector;
        j["voice"] = r.voice;
        j["strategy"] = r.strategy;
        os << j.dump() << '\n';
      }
      break;
    }
  }
}

}  // namespace lingua_spoof

#include "lercause/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <stdexcept>

#include "lercause/textprep.hpp"

namespace lercause::metrics {

using corpus::Label;
using nlohmann::json;

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

ClassMetrics class_metrics(std::size_t hit, std::size_t false_pos, std::size_t false_neg) {
  ClassMetrics m;
  m.precision = ratio(hit, hit + false_pos);
  m.recall = ratio(hit, hit + false_neg);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.support = hit + false_neg;
  return m;
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

EvalReport report_from_confusion(const Confusion& c) {
  EvalReport report;
  report.confusion = c;
  report.per_class["causal"] = class_metrics(c.tp, c.fp, c.fn);
  report.per_class["non_causal"] = class_metrics(c.tn, c.fn, c.fp);
  report.accuracy = ratio(c.tp + c.tn, c.total());
  return report;
}

EvalReport evaluate(std::span<const Label> predicted, std::span<const Label> gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("predicted and gold label lists differ in length");
  }
  if (gold.empty()) throw std::invalid_argument("cannot evaluate an empty label list");
  Confusion c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool p = predicted[i] == Label::causal;
    const bool g = gold[i] == Label::causal;
    if (p && g) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (g) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return report_from_confusion(c);
}

std::string normalize_pair_text(std::string_view text) {
  std::string out = textprep::clean_text(text).str();
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return out;
}

ExtractionScore score_extraction(const std::vector<patterns::CauseEffectPair>& predicted,
                                 const std::vector<patterns::CauseEffectPair>& gold) {
  if (gold.empty()) throw std::invalid_argument("extraction score is undefined without gold pairs");
  std::vector<std::pair<std::string, std::string>> candidates;
  candidates.reserve(predicted.size());
  for (const auto& p : predicted) candidates.emplace_back(normalize_pair_text(p.cause), normalize_pair_text(p.effect));
  std::vector<bool> used(candidates.size(), false);

  ExtractionScore score;
  score.total_gold = gold.size();
  for (const auto& g : gold) {
    const auto key = std::make_pair(normalize_pair_text(g.cause), normalize_pair_text(g.effect));
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (!used[i] && candidates[i] == key) {
        used[i] = true;
        ++score.correct;
        break;
      }
    }
  }
  score.fraction = ratio(score.correct, score.total_gold);
  return score;
}

json to_json(const EvalReport& report) {
  json per_class = json::object();
  for (const auto& [label, m] : report.per_class) {
    per_class[label] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
  }
  const auto& c = report.confusion;
  return json{{"per_class", per_class},
              {"accuracy", report.accuracy},
              {"confusion", {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}}}};
}

json to_json(const ExtractionScore& score) {
  return json{{"correct", score.correct}, {"total_gold", score.total_gold}, {"fraction", score.fraction}};
}

std::string render(const EvalReport& report) {
  std::string out = "class       precision  recall  f1     support\n";
  for (const auto* label : {"non_causal", "causal"}) {
    const auto& m = report.per_class.at(label);
    char line[128];
    std::snprintf(line, sizeof line, "%-11s %-10s %-7s %-6s %zu\n", label, fixed3(m.precision).c_str(),
                  fixed3(m.recall).c_str(), fixed3(m.f1).c_str(), m.support);
    out += line;
  }
  out += "accuracy    " + fixed3(report.accuracy) + "\n";
  const auto& c = report.confusion;
  out += "confusion   tp=" + std::to_string(c.tp) + " fp=" + std::to_string(c.fp) + " fn=" + std::to_string(c.fn) +
         " tn=" + std::to_string(c.tn) + "\n";
  return out;
}

std::string render(const ExtractionScore& score) {
  return "correct " + std::to_string(score.correct) + " / " + std::to_string(score.total_gold) + " = " +
         fixed3(score.fraction) + "\n";
}

}  // namespace lercause::metrics

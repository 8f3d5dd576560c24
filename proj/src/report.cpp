#include "mvk/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace mvk {

namespace {

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string cell(const MetricReport& r, const std::string& key) {
  const auto it = r.values.find(key);
  return it == r.values.end() ? "-" : fmt2(it->second);
}

struct FamilyTable {
  std::string family;
  std::string title;
  std::vector<std::string> columns;  // header labels
  std::vector<std::string> keys;     // value keys, aligned with columns
};

const std::vector<FamilyTable>& family_tables() {
  static const std::vector<FamilyTable> tables = {
      {"vqa", "Medical VQA", {"open", "close", "total"},
       {"accuracy_open", "accuracy_close", "accuracy"}},
      {"classification", "Classification", {"Accuracy"}, {"accuracy"}},
      {"report_gen", "Report Generation", {"ROUGE-L", "METEOR", "CIDEr"},
       {"rouge_l", "meteor", "cider_d"}},
      {"detect_2d", "Disease Detection (2D)", {"IoU"}, {"mean_iou"}},
      {"detect_3d", "Disease Detection (3D)", {"IoU"}, {"mean_iou"}},
      {"landmark", "Landmark Detection",
       {"MRE", "SDR@2mm", "SDR@2.5mm", "SDR@3mm", "SDR@4mm"},
       {"mre", "sdr@2mm", "sdr@2.5mm", "sdr@3mm", "sdr@4mm"}},
  };
  return tables;
}

std::map<std::string, std::vector<const MetricReport*>> group_by_family(
    const std::vector<MetricReport>& reports) {
  std::map<std::string, std::vector<const MetricReport*>> groups;
  for (const auto& r : reports) groups[r.task].push_back(&r);
  for (auto& [_, rows] : groups) {
    std::sort(rows.begin(), rows.end(), [](const MetricReport* a, const MetricReport* b) {
      return a->dataset_id < b->dataset_id;
    });
  }
  return groups;
}

}  // namespace

std::string render_markdown(const std::vector<MetricReport>& reports) {
  std::string out = "# Results\n";
  if (reports.empty()) {
    out += "\nNo results.\n";
    return out;
  }
  const auto groups = group_by_family(reports);
  for (const auto& table : family_tables()) {
    const auto it = groups.find(table.family);
    if (it == groups.end()) continue;
    out += "\n## " + table.title + "\n\n";
    out += "| Dataset |";
    for (const auto& col : table.columns) out += " " + col + " |";
    out += "\n|---|";
    for (size_t i = 0; i < table.columns.size(); ++i) out += "---|";
    out += "\n";
    for (const MetricReport* r : it->second) {
      out += "| " + r->dataset_id + " |";
      for (const auto& key : table.keys) out += " " + cell(*r, key) + " |";
      out += "\n";
    }
  }
  return out;
}

std::string render_csv(const std::vector<MetricReport>& reports) {
  if (reports.empty()) return "task,dataset\n";
  const auto groups = group_by_family(reports);
  std::string out;
  bool first_block = true;
  for (const auto& table : family_tables()) {
    const auto it = groups.find(table.family);
    if (it == groups.end()) continue;
    if (!first_block) out += "\n";
    first_block = false;
    out += "task,dataset";
    for (const auto& key : table.keys) out += "," + key;
    out += "\n";
    for (const MetricReport* r : it->second) {
      out += table.family + "," + r->dataset_id;
      for (const auto& key : table.keys) out += "," + cell(*r, key);
      out += "\n";
    }
  }
  return out;
}

}  // namespace mvk

#pragma once

#include <string>
#include <vector>

#include "mvk/metrics.hpp"

namespace mvk {

// Markdown and CSV grids mirroring the column structures of the result
// tables: open/close/total for VQA, ROUGE-L/METEOR/CIDEr for report
// generation, MRE plus SDR thresholds for landmarks, a single IoU column per
// detection dimensionality. Values print with two decimals; missing metrics
// render as "-". Pure functions of the metric reports.
std::string render_markdown(const std::vector<MetricReport>& reports);
std::string render_csv(const std::vector<MetricReport>& reports);

}  // namespace mvk

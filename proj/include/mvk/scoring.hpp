#pragma once

#include <string>
#include <vector>

#include "mvk/core.hpp"
#include "mvk/metrics.hpp"
#include "mvk/parse.hpp"

namespace mvk {

struct ScoreOptions {
  // ISBI 2015 cephalometric convention; per-point spacing from the manifest
  // wins when present.
  double default_spacing_mm_per_px = 0.1;
  TokenConfig tokens;
};

// Scores one (dataset, task-family) group. Samples and predictions must
// cover the same ids; predictions lacking a parsed form are parsed here
// under the task's expected format.
MetricReport score_dataset(const std::vector<Sample>& samples,
                           const std::vector<Prediction>& predictions,
                           const ScoreOptions& options = {});

// Groups a corpus by (dataset_id, task family), checks id alignment for the
// whole prediction file (missing and extra ids are listed), and scores each
// group.
std::vector<MetricReport> score_all(const std::vector<Sample>& samples,
                                    const std::vector<Prediction>& predictions,
                                    const ScoreOptions& options = {});

}  // namespace mvk

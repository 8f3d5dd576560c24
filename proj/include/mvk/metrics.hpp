#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvk/core.hpp"

namespace mvk {

// Per-dataset, per-task metric values with sample counts; serializable to
// the table layouts the report command emits.
struct MetricReport {
  std::string dataset_id;
  std::string task;  // task family tag
  size_t n_samples = 0;
  size_t n_parse_failed = 0;
  std::map<std::string, double> values;
  std::map<std::string, std::map<std::string, double>> breakdown;
  std::map<std::string, std::string> notes;

  bool operator==(const MetricReport&) const = default;
};

json encode_metric_report(const MetricReport& r);
MetricReport decode_metric_report(const json& j);

// ---------------------------------------------------------------------------
// Accuracy
// ---------------------------------------------------------------------------

// Exact match after answer normalization, in percent.
double accuracy_exact(const std::vector<std::string>& pred_texts,
                      const std::vector<std::string>& gt_texts);

// Choice-index comparison; a missing prediction (parse failure) is wrong.
double accuracy_choice(const std::vector<std::optional<int>>& pred_choices,
                       const std::vector<int>& gt_choices);

// Fraction of unique normalized ground-truth tokens present in the
// prediction. Throws DegenerateReference when gt normalizes to empty.
double token_recall(const std::string& pred, const std::string& gt);

// ---------------------------------------------------------------------------
// N-gram text metrics. All operate on pre-tokenized text (metric_tokens).
// ---------------------------------------------------------------------------

using TokenSeq = std::vector<std::string>;

// Corpus BLEU, orders 1..max_n, clipped precision with add-one smoothing on
// zero-match orders only, brevity penalty exp(1 - r/c) for c <= r. x100.
double bleu_corpus(const std::vector<TokenSeq>& preds, const std::vector<TokenSeq>& refs,
                   int max_n = 4);

// Per-pair LCS F1 (beta = 1); corpus value is the mean, x100.
double rouge_l_pair(const TokenSeq& pred, const TokenSeq& ref);
double rouge_l_corpus(const std::vector<TokenSeq>& preds, const std::vector<TokenSeq>& refs);

// Exact-match METEOR: m = multiset unigram intersection, F_mean = 10PR/(R+9P),
// fragmentation penalty 0.5*(chunks/m)^3; corpus mean, x100.
double meteor_pair(const TokenSeq& pred, const TokenSeq& ref);
double meteor_corpus(const std::vector<TokenSeq>& preds, const std::vector<TokenSeq>& refs);

// CIDEr-D with sigma = 6, n <= 4, IDF over the reference corpus, x10.
// Requires at least 2 pairs.
double cider_d_corpus(const std::vector<TokenSeq>& preds, const std::vector<TokenSeq>& refs);

// ---------------------------------------------------------------------------
// Overlap metrics (half-open integer grids: width = x2 - x1)
// ---------------------------------------------------------------------------

double iou2d(const Box2D& a, const Box2D& b);
double iou3d(const Box3D& a, const Box3D& b);

// Mean IoU with parse failures contributing 0. The 2D value is reported as
// a fraction, the 3D value x100 (the tables' conventions differ).
double mean_iou2d(const std::vector<std::optional<Box2D>>& preds, const std::vector<Box2D>& gts);
double mean_iou3d(const std::vector<std::optional<Box3D>>& preds, const std::vector<Box3D>& gts);

// ---------------------------------------------------------------------------
// Landmark error statistics
// ---------------------------------------------------------------------------

// Radial error in millimeters per landmark; a missing prediction becomes an
// infinite sentinel (fails every SDR threshold, excluded from MRE).
std::vector<double> landmark_errors(const std::vector<std::optional<Point2D>>& preds,
                                    const std::vector<Point2D>& gts,
                                    double default_spacing_mm_per_px);

struct MreResult {
  std::optional<double> mre_mm;  // absent when every error is infinite
  size_t excluded = 0;           // infinite sentinels left out of the mean
};

MreResult mre(const std::vector<double>& errors_mm);

inline const std::vector<double> kSdrThresholdsMm = {2.0, 2.5, 3.0, 4.0};

// Success detection rate per threshold, in percent; infinite sentinels stay
// in the denominator.
std::vector<double> sdr(const std::vector<double>& errors_mm,
                        const std::vector<double>& thresholds_mm = kSdrThresholdsMm);

}  // namespace mvk

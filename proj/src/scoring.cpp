#include "mvk/scoring.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include "mvk/templates.hpp"

namespace mvk {

namespace {

ParsedOutput ensure_parsed(const Sample& s, const Prediction& p, const TokenConfig& tokens) {
  if (p.parsed) return *p.parsed;
  return parse_prediction(p.raw_text, expected_format_for(s.task),
                          s.options ? &*s.options : nullptr, tokens);
}

std::string forced_key(const std::string& dataset_id, const std::string& family) {
  return dataset_id + "\x1f" + family;
}

void score_vqa(const std::vector<Sample>& samples, const std::vector<ParsedOutput>& parsed,
               const std::vector<const Prediction*>& preds, MetricReport& report) {
  size_t open_n = 0, open_correct = 0, close_n = 0, close_correct = 0;
  double recall_total = 0.0;
  size_t recall_n = 0, recall_skipped = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].task == TaskKind::VqaOpen) {
      ++open_n;
      const std::string& gt = std::get<TextAnswer>(samples[i].ground_truth).text;
      if (normalize_answer(preds[i]->raw_text) == normalize_answer(gt)) ++open_correct;
      try {
        recall_total += token_recall(preds[i]->raw_text, gt);
        ++recall_n;
      } catch (const DegenerateReference&) {
        ++recall_skipped;
      }
    } else {
      ++close_n;
      const int gt = std::get<ChoiceAnswer>(samples[i].ground_truth).index;
      if (const auto* c = std::get_if<ChoiceAnswer>(&parsed[i])) {
        if (c->index == gt) ++close_correct;
      }
    }
  }
  const double total_acc =
      100.0 * static_cast<double>(open_correct + close_correct) /
      static_cast<double>(samples.size());
  report.values["accuracy"] = total_acc;
  if (open_n > 0) {
    report.values["accuracy_open"] =
        100.0 * static_cast<double>(open_correct) / static_cast<double>(open_n);
    if (recall_n > 0)
      report.values["token_recall"] = recall_total / static_cast<double>(recall_n);
    report.breakdown["open"]["n_samples"] = static_cast<double>(open_n);
    report.breakdown["open"]["accuracy"] = report.values["accuracy_open"];
    if (recall_n > 0) report.breakdown["open"]["token_recall"] = report.values["token_recall"];
  }
  if (close_n > 0) {
    report.values["accuracy_close"] =
        100.0 * static_cast<double>(close_correct) / static_cast<double>(close_n);
    report.breakdown["close"]["n_samples"] = static_cast<double>(close_n);
    report.breakdown["close"]["accuracy"] = report.values["accuracy_close"];
  }
  report.notes["total_rule"] = "sample_weighted";
  if (recall_skipped > 0)
    report.notes["token_recall_skipped"] = std::to_string(recall_skipped);
}

void score_classification(const std::vector<Sample>& samples,
                          const std::vector<ParsedOutput>& parsed, MetricReport& report) {
  std::vector<std::optional<int>> pred_idx;
  std::vector<int> gt_idx;
  pred_idx.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    if (const auto* c = std::get_if<ChoiceAnswer>(&parsed[i]))
      pred_idx.push_back(c->index);
    else
      pred_idx.push_back(std::nullopt);
    gt_idx.push_back(std::get<ChoiceAnswer>(samples[i].ground_truth).index);
  }
  report.values["accuracy"] = accuracy_choice(pred_idx, gt_idx);
}

void score_report_gen(const std::vector<Sample>& samples,
                      const std::vector<const Prediction*>& preds, MetricReport& report) {
  std::vector<TokenSeq> pred_toks, ref_toks;
  pred_toks.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    pred_toks.push_back(metric_tokens(preds[i]->raw_text));
    ref_toks.push_back(metric_tokens(std::get<TextAnswer>(samples[i].ground_truth).text));
  }
  report.values["bleu"] = bleu_corpus(pred_toks, ref_toks);
  report.values["rouge_l"] = rouge_l_corpus(pred_toks, ref_toks);
  report.values["meteor"] = meteor_corpus(pred_toks, ref_toks);
  try {
    report.values["cider_d"] = cider_d_corpus(pred_toks, ref_toks);
  } catch (const CorpusTooSmall&) {
    report.notes["cider_d"] = "omitted: corpus smaller than 2 pairs";
  }
}

void score_detect2d(const std::vector<Sample>& samples, const std::vector<ParsedOutput>& parsed,
                    MetricReport& report) {
  std::vector<std::optional<Box2D>> preds;
  std::vector<Box2D> gts;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (const auto* b = std::get_if<Box2D>(&parsed[i]))
      preds.emplace_back(*b);
    else
      preds.emplace_back(std::nullopt);
    gts.push_back(std::get<Box2D>(samples[i].ground_truth));
  }
  report.values["mean_iou"] = mean_iou2d(preds, gts);
  report.notes["metric_rule"] = "mean_iou_fraction";
}

void score_detect3d(const std::vector<Sample>& samples, const std::vector<ParsedOutput>& parsed,
                    MetricReport& report) {
  std::vector<std::optional<Box3D>> preds;
  std::vector<Box3D> gts;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (const auto* b = std::get_if<Box3D>(&parsed[i]))
      preds.emplace_back(*b);
    else
      preds.emplace_back(std::nullopt);
    gts.push_back(std::get<Box3D>(samples[i].ground_truth));
  }
  report.values["mean_iou"] = mean_iou3d(preds, gts);
  // 3D overlap is conventionally reported on a x100 scale; flag the rule so
  // tables stay interpretable.
  report.notes["metric_rule"] = "mean_iou_x100";
}

void score_landmark(const std::vector<Sample>& samples, const std::vector<ParsedOutput>& parsed,
                    const ScoreOptions& options, MetricReport& report) {
  std::vector<std::optional<Point2D>> preds;
  std::vector<Point2D> gts;
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& lp = std::get<LandmarkPoints>(samples[i].ground_truth);
    if (lp.points.size() != 1)
      throw DegenerateInput("landmark scoring expects one landmark per sample: " + samples[i].id);
    gts.push_back(lp.points.front().point);
    if (const auto* pt = std::get_if<Point2D>(&parsed[i])) {
      preds.emplace_back(*pt);
    } else if (const auto* lpp = std::get_if<LandmarkPoints>(&parsed[i]);
               lpp && !lpp->points.empty()) {
      preds.emplace_back(lpp->points.front().point);
    } else {
      preds.emplace_back(std::nullopt);
    }
  }
  const auto errors = landmark_errors(preds, gts, options.default_spacing_mm_per_px);
  const MreResult m = mre(errors);
  if (m.mre_mm) report.values["mre"] = *m.mre_mm;
  report.values["mre_excluded"] = static_cast<double>(m.excluded);
  const auto rates = sdr(errors);
  for (size_t t = 0; t < kSdrThresholdsMm.size(); ++t) {
    report.values["sdr@" + format_number(kSdrThresholdsMm[t]) + "mm"] = rates[t];
  }
  if (!m.mre_mm) report.notes["mre"] = "undefined: every prediction failed to parse";
}

}  // namespace

MetricReport score_dataset(const std::vector<Sample>& samples,
                           const std::vector<Prediction>& predictions,
                           const ScoreOptions& options) {
  if (samples.empty()) throw AlignmentError("score_dataset: no samples");
  std::unordered_map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) by_id[p.sample_id] = &p;

  std::vector<std::string> missing;
  std::vector<const Prediction*> preds;
  preds.reserve(samples.size());
  for (const auto& s : samples) {
    const auto it = by_id.find(s.id);
    if (it == by_id.end())
      missing.push_back(s.id);
    else
      preds.push_back(it->second);
  }
  if (!missing.empty()) {
    std::string msg = "missing predictions for " + std::to_string(missing.size()) + " sample(s):";
    for (size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    throw AlignmentError(msg);
  }

  MetricReport report;
  report.dataset_id = samples.front().dataset_id;
  report.task = task_family(samples.front().task);
  report.n_samples = samples.size();

  std::vector<ParsedOutput> parsed;
  parsed.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    parsed.push_back(ensure_parsed(samples[i], *preds[i], options.tokens));
    if (parse_failed(parsed.back())) ++report.n_parse_failed;
  }

  const std::string& family = report.task;
  if (family == "vqa") {
    score_vqa(samples, parsed, preds, report);
  } else if (family == "classification") {
    score_classification(samples, parsed, report);
  } else if (family == "report_gen") {
    score_report_gen(samples, preds, report);
  } else if (family == "detect_2d") {
    score_detect2d(samples, parsed, report);
  } else if (family == "detect_3d") {
    score_detect3d(samples, parsed, report);
  } else if (family == "landmark") {
    score_landmark(samples, parsed, options, report);
  } else {
    throw Error("unscorable task family: " + family);
  }
  return report;
}

std::vector<MetricReport> score_all(const std::vector<Sample>& samples,
                                    const std::vector<Prediction>& predictions,
                                    const ScoreOptions& options) {
  std::unordered_map<std::string, size_t> sample_ids;
  for (const auto& s : samples) ++sample_ids[s.id];

  std::vector<std::string> extra;
  for (const auto& p : predictions) {
    if (!sample_ids.count(p.sample_id)) extra.push_back(p.sample_id);
  }
  if (!extra.empty()) {
    std::string msg =
        "predictions for " + std::to_string(extra.size()) + " unknown sample id(s):";
    for (size_t i = 0; i < extra.size() && i < 20; ++i) msg += " " + extra[i];
    throw AlignmentError(msg);
  }

  std::map<std::string, std::vector<Sample>> groups;
  for (const auto& s : samples) {
    groups[forced_key(s.dataset_id, task_family(s.task))].push_back(s);
  }
  std::vector<MetricReport> out;
  out.reserve(groups.size());
  for (const auto& [_, group] : groups) {
    out.push_back(score_dataset(group, predictions, options));
  }
  return out;
}

}  // namespace mvk

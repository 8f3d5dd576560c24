#include "mvk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "mvk/parse.hpp"

namespace mvk {

json encode_metric_report(const MetricReport& r) {
  json j;
  j["dataset_id"] = r.dataset_id;
  j["task"] = r.task;
  j["n_samples"] = r.n_samples;
  j["n_parse_failed"] = r.n_parse_failed;
  j["values"] = r.values;
  if (!r.breakdown.empty()) j["breakdown"] = r.breakdown;
  if (!r.notes.empty()) j["notes"] = r.notes;
  return j;
}

MetricReport decode_metric_report(const json& j) {
  MetricReport r;
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.task = j.at("task").get<std::string>();
  r.n_samples = j.at("n_samples").get<size_t>();
  r.n_parse_failed = j.at("n_parse_failed").get<size_t>();
  r.values = j.at("values").get<std::map<std::string, double>>();
  if (j.contains("breakdown"))
    r.breakdown = j["breakdown"].get<std::map<std::string, std::map<std::string, double>>>();
  if (j.contains("notes")) r.notes = j["notes"].get<std::map<std::string, std::string>>();
  return r;
}

// ---------------------------------------------------------------------------
// Accuracy
// ---------------------------------------------------------------------------

double accuracy_exact(const std::vector<std::string>& pred_texts,
                      const std::vector<std::string>& gt_texts) {
  if (pred_texts.size() != gt_texts.size())
    throw AlignmentError("accuracy: prediction/ground-truth length mismatch");
  if (pred_texts.empty()) throw AlignmentError("accuracy: empty input");
  size_t correct = 0;
  for (size_t i = 0; i < pred_texts.size(); ++i) {
    if (normalize_answer(pred_texts[i]) == normalize_answer(gt_texts[i])) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pred_texts.size());
}

double accuracy_choice(const std::vector<std::optional<int>>& pred_choices,
                       const std::vector<int>& gt_choices) {
  if (pred_choices.size() != gt_choices.size())
    throw AlignmentError("accuracy: prediction/ground-truth length mismatch");
  if (pred_choices.empty()) throw AlignmentError("accuracy: empty input");
  size_t correct = 0;
  for (size_t i = 0; i < pred_choices.size(); ++i) {
    if (pred_choices[i] && *pred_choices[i] == gt_choices[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pred_choices.size());
}

double token_recall(const std::string& pred, const std::string& gt) {
  const auto gt_toks = answer_tokens(gt);
  if (gt_toks.empty()) throw DegenerateReference("token_recall: ground truth normalizes to empty");
  const auto pred_toks = answer_tokens(pred);
  const std::set<std::string> pred_set(pred_toks.begin(), pred_toks.end());
  const std::set<std::string> gt_set(gt_toks.begin(), gt_toks.end());
  size_t hit = 0;
  for (const auto& t : gt_set) hit += pred_set.count(t);
  return static_cast<double>(hit) / static_cast<double>(gt_set.size());
}

// ---------------------------------------------------------------------------
// N-gram machinery
// ---------------------------------------------------------------------------

namespace {

// N-grams are keyed by joining tokens with a separator byte that the
// tokenizer can never emit (it folds all control bytes to spaces).
std::unordered_map<std::string, int> ngram_counts(const TokenSeq& toks, int n) {
  std::unordered_map<std::string, int> out;
  if (static_cast<int>(toks.size()) < n) return out;
  for (size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      if (k) key.push_back('\x1f');
      key += toks[i + k];
    }
    ++out[key];
  }
  return out;
}

void check_aligned(const std::vector<TokenSeq>& preds, const std::vector<TokenSeq>& refs) {
  if (preds.size() != refs.size())
    throw AlignmentError("corpus metric: prediction/reference length mismatch");
  if (preds.empty()) throw AlignmentError("corpus metric: empty corpus");
}

}  // namespace

double bleu_corpus(const std::vector<TokenSeq>& preds, const std::vector<TokenSeq>& refs,
                   int max_n) {
  check_aligned(preds, refs);
  std::vector<long long> matches(max_n + 1, 0), totals(max_n + 1, 0);
  long long c_len = 0, r_len = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    c_len += static_cast<long long>(preds[i].size());
    r_len += static_cast<long long>(refs[i].size());
    for (int n = 1; n <= max_n; ++n) {
      const auto pc = ngram_counts(preds[i], n);
      const auto rc = ngram_counts(refs[i], n);
      totals[n] += std::max<long long>(0, static_cast<long long>(preds[i].size()) - n + 1);
      for (const auto& [g, cnt] : pc) {
        const auto it = rc.find(g);
        if (it != rc.end()) matches[n] += std::min(cnt, it->second);
      }
    }
  }
  if (r_len == 0) throw DegenerateReference("bleu: every reference is empty");
  if (c_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    double p;
    if (matches[n] > 0) {
      p = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
    } else {
      p = (static_cast<double>(matches[n]) + 1.0) / (static_cast<double>(totals[n]) + 1.0);
    }
    log_sum += std::log(p) / max_n;
  }
  const double bp =
      c_len > r_len ? 1.0 : std::exp(1.0 - static_cast<double>(r_len) / static_cast<double>(c_len));
  return 100.0 * bp * std::exp(log_sum);
}

namespace {

size_t lcs_len(const TokenSeq& a, const TokenSeq& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
    std::fill(cur.begin(), cur.end(), 0);
  }
  return prev[b.size()];
}

}  // namespace

double rouge_l_pair(const TokenSeq& pred, const TokenSeq& ref) {
  if (ref.empty()) throw DegenerateReference("rouge_l: empty reference");
  const size_t lcs = lcs_len(pred, ref);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(pred.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

double rouge_l_corpus(const std::vector<TokenSeq>& preds, const std::vector<TokenSeq>& refs) {
  check_aligned(preds, refs);
  double total = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) total += rouge_l_pair(preds[i], refs[i]);
  return 100.0 * total / static_cast<double>(preds.size());
}

double meteor_pair(const TokenSeq& pred, const TokenSeq& ref) {
  if (ref.empty()) throw DegenerateReference("meteor: empty reference");
  std::unordered_map<std::string, int> ref_counts;
  for (const auto& t : ref) ++ref_counts[t];
  std::unordered_map<std::string, int> pred_counts;
  for (const auto& t : pred) ++pred_counts[t];

  std::unordered_map<std::string, int> quota;
  long m = 0;
  for (const auto& [t, c] : pred_counts) {
    const auto it = ref_counts.find(t);
    if (it != ref_counts.end()) {
      quota[t] = std::min(c, it->second);
      m += quota[t];
    }
  }
  if (m == 0) return 0.0;

  // Positions of each type in the reference, consumed smallest-first unless
  // the adjacent position extends the current chunk.
  std::unordered_map<std::string, std::vector<size_t>> positions;
  for (size_t j = 0; j < ref.size(); ++j) positions[ref[j]].push_back(j);
  std::vector<char> used(ref.size(), 0);
  std::unordered_map<std::string, int> taken;

  long chunks = 0;
  bool have_prev = false;
  size_t prev_i = 0, prev_j = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const auto& t = pred[i];
    const auto qit = quota.find(t);
    if (qit == quota.end() || taken[t] >= qit->second) continue;
    ++taken[t];
    size_t j = ref.size();
    if (have_prev && i == prev_i + 1 && prev_j + 1 < ref.size() && !used[prev_j + 1] &&
        ref[prev_j + 1] == t) {
      j = prev_j + 1;
    } else {
      for (size_t p : positions[t]) {
        if (!used[p]) {
          j = p;
          break;
        }
      }
    }
    if (!have_prev || i != prev_i + 1 || j != prev_j + 1) ++chunks;
    used[j] = 1;
    prev_i = i;
    prev_j = j;
    have_prev = true;
  }

  const double md = static_cast<double>(m);
  const double p = md / static_cast<double>(pred.size());
  const double r = md / static_cast<double>(ref.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(chunks) / md;
  const double penalty = 0.5 * frag * frag * frag;
  return f_mean * (1.0 - penalty);
}

double meteor_corpus(const std::vector<TokenSeq>& preds, const std::vector<TokenSeq>& refs) {
  check_aligned(preds, refs);
  double total = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) total += meteor_pair(preds[i], refs[i]);
  return 100.0 * total / static_cast<double>(preds.size());
}

double cider_d_corpus(const std::vector<TokenSeq>& preds, const std::vector<TokenSeq>& refs) {
  check_aligned(preds, refs);
  constexpr int kMaxN = 4;
  constexpr double kSigma = 6.0;
  if (preds.size() < 2) throw CorpusTooSmall("cider_d needs a corpus of at least 2 pairs");

  std::unordered_map<std::string, int> df;
  for (const auto& ref : refs) {
    std::set<std::string> seen;
    for (int n = 1; n <= kMaxN; ++n) {
      for (const auto& [g, _] : ngram_counts(ref, n)) seen.insert(g);
    }
    for (const auto& g : seen) ++df[g];
  }
  const double log_n = std::log(static_cast<double>(refs.size()));

  struct Vec {
    std::array<std::unordered_map<std::string, double>, kMaxN> w;
    std::array<double, kMaxN> norm{};
  };
  auto vectorize = [&](const TokenSeq& toks) {
    Vec v;
    for (int n = 1; n <= kMaxN; ++n) {
      double sq = 0.0;
      for (const auto& [g, tf] : ngram_counts(toks, n)) {
        const auto it = df.find(g);
        const double d = it == df.end() ? 1.0 : std::max(1.0, static_cast<double>(it->second));
        const double weight = tf * (log_n - std::log(d));
        v.w[n - 1][g] = weight;
        sq += weight * weight;
      }
      v.norm[n - 1] = std::sqrt(sq);
    }
    return v;
  };

  double total = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const Vec vh = vectorize(preds[i]);
    const Vec vr = vectorize(refs[i]);
    const double delta =
        static_cast<double>(preds[i].size()) - static_cast<double>(refs[i].size());
    const double penalty = std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
    double score = 0.0;
    for (int n = 0; n < kMaxN; ++n) {
      if (vh.norm[n] <= 0.0 || vr.norm[n] <= 0.0) continue;
      double num = 0.0;
      for (const auto& [g, w] : vh.w[n]) {
        const auto it = vr.w[n].find(g);
        if (it != vr.w[n].end()) num += std::min(w, it->second) * it->second;
      }
      score += num / (vh.norm[n] * vr.norm[n]) * penalty;
    }
    total += 10.0 * score / kMaxN;
  }
  return total / static_cast<double>(preds.size());
}

// ---------------------------------------------------------------------------
// Overlap metrics
// ---------------------------------------------------------------------------

double iou2d(const Box2D& a, const Box2D& b) {
  const double area_a = static_cast<double>(a.x2 - a.x1) * (a.y2 - a.y1);
  const double area_b = static_cast<double>(b.x2 - b.x1) * (b.y2 - b.y1);
  const double iw = std::max(0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double iou3d(const Box3D& a, const Box3D& b) {
  const double vol_a = static_cast<double>(a.x2 - a.x1) * (a.y2 - a.y1) * (a.z2 - a.z1);
  const double vol_b = static_cast<double>(b.x2 - b.x1) * (b.y2 - b.y1) * (b.z2 - b.z1);
  const double iw = std::max(0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double id = std::max(0, std::min(a.z2, b.z2) - std::max(a.z1, b.z1));
  const double inter = iw * ih * id;
  const double uni = vol_a + vol_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double mean_iou2d(const std::vector<std::optional<Box2D>>& preds, const std::vector<Box2D>& gts) {
  if (preds.size() != gts.size()) throw AlignmentError("mean_iou: length mismatch");
  if (preds.empty()) throw AlignmentError("mean_iou: empty input");
  double total = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i]) total += iou2d(*preds[i], gts[i]);
  }
  return total / static_cast<double>(preds.size());
}

double mean_iou3d(const std::vector<std::optional<Box3D>>& preds, const std::vector<Box3D>& gts) {
  if (preds.size() != gts.size()) throw AlignmentError("mean_iou: length mismatch");
  if (preds.empty()) throw AlignmentError("mean_iou: empty input");
  double total = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i]) total += iou3d(*preds[i], gts[i]);
  }
  return 100.0 * total / static_cast<double>(preds.size());
}

// ---------------------------------------------------------------------------
// Landmark errors
// ---------------------------------------------------------------------------

std::vector<double> landmark_errors(const std::vector<std::optional<Point2D>>& preds,
                                    const std::vector<Point2D>& gts,
                                    double default_spacing_mm_per_px) {
  if (preds.size() != gts.size()) throw AlignmentError("landmark_errors: length mismatch");
  if (default_spacing_mm_per_px <= 0.0)
    throw DegenerateInput("landmark_errors: spacing must be positive");
  std::vector<double> out;
  out.reserve(preds.size());
  for (size_t i = 0; i < preds.size(); ++i) {
    if (!preds[i]) {
      out.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    const double spacing = gts[i].spacing_mm_per_px.value_or(default_spacing_mm_per_px);
    const double dx = preds[i]->x - gts[i].x;
    const double dy = preds[i]->y - gts[i].y;
    out.push_back(std::sqrt(dx * dx + dy * dy) * spacing);
  }
  return out;
}

MreResult mre(const std::vector<double>& errors_mm) {
  if (errors_mm.empty()) throw DegenerateInput("mre: empty error list");
  MreResult res;
  double total = 0.0;
  size_t finite = 0;
  for (double e : errors_mm) {
    if (std::isinf(e)) {
      ++res.excluded;
    } else {
      total += e;
      ++finite;
    }
  }
  if (finite > 0) res.mre_mm = total / static_cast<double>(finite);
  return res;
}

std::vector<double> sdr(const std::vector<double>& errors_mm,
                        const std::vector<double>& thresholds_mm) {
  if (errors_mm.empty()) throw DegenerateInput("sdr: empty error list");
  std::vector<double> out;
  out.reserve(thresholds_mm.size());
  for (double t : thresholds_mm) {
    size_t hits = 0;
    for (double e : errors_mm) {
      if (e <= t) ++hits;
    }
    out.push_back(100.0 * static_cast<double>(hits) / static_cast<double>(errors_mm.size()));
  }
  return out;
}

}  // namespace mvk

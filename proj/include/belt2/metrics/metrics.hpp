#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace belt2 {

/// Case-sensitive whitespace tokenization; punctuation stays attached.
std::vector<std::string> tokenize_ws(const std::string& s);

/// Corpus BLEU-N in percent: geometric mean of clipped n-gram precisions
/// 1..N times the brevity penalty. Any zero precision gives 0 unless
/// `smooth` is set (add-one on orders > 1). Throws LengthMismatch.
double bleu_n(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references, int N,
              bool smooth = false);

struct Rouge1 {
  double precision = 0, recall = 0, f1 = 0;
};

/// Per-sample clipped unigram overlap, averaged over samples, in percent.
Rouge1 rouge1(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references);

struct ClsMetrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

/// Accuracy and macro precision/recall/F1 in percent; a class with no
/// predictions (or no labels) contributes 0 to the corresponding average.
ClsMetrics cls_metrics(const std::vector<int>& predictions, const std::vector<int>& labels, int n_classes);

struct EvalReport {
  std::map<int, double> bleu;  // N -> percent
  Rouge1 rouge;
  std::optional<ClsMetrics> cls;
  std::int64_t n_samples = 0;

  std::string to_json() const;
};

EvalReport text_report(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references);

}  // namespace belt2

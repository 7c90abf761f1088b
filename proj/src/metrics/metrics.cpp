#include "belt2/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "belt2/error.hpp"

namespace belt2 {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b)
    throw LengthMismatch("got " + std::to_string(a) + " hypotheses for " + std::to_string(b) + " references");
}

std::unordered_map<std::string, std::int64_t> ngram_counts(const std::vector<std::string>& toks, int n) {
  std::unordered_map<std::string, std::int64_t> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      key += toks[i + j];
      key += '\x1f';
    }
    ++out[key];
  }
  return out;
}

std::int64_t clipped_overlap(const std::unordered_map<std::string, std::int64_t>& hyp,
                             const std::unordered_map<std::string, std::int64_t>& ref) {
  std::int64_t m = 0;
  for (const auto& [g, c] : hyp) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

}  // namespace

std::vector<std::string> tokenize_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

double bleu_n(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references, int N,
              bool smooth) {
  check_lengths(hypotheses.size(), references.size());
  if (N < 1) throw ConfigError("BLEU order must be >= 1");
  std::vector<std::int64_t> match(N, 0), total(N, 0);
  std::int64_t hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto h = tokenize_ws(hypotheses[i]);
    const auto r = tokenize_ws(references[i]);
    hyp_len += static_cast<std::int64_t>(h.size());
    ref_len += static_cast<std::int64_t>(r.size());
    for (int n = 1; n <= N; ++n) {
      match[n - 1] += clipped_overlap(ngram_counts(h, n), ngram_counts(r, n));
      total[n - 1] += std::max<std::int64_t>(0, static_cast<std::int64_t>(h.size()) - n + 1);
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_p = 0.0;
  for (int n = 0; n < N; ++n) {
    double m = static_cast<double>(match[n]), t = static_cast<double>(total[n]);
    if (smooth && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_p += std::log(m / t);
  }
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
  return 100.0 * bp * std::exp(log_p / N);
}

Rouge1 rouge1(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  check_lengths(hypotheses.size(), references.size());
  Rouge1 out;
  if (hypotheses.empty()) return out;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto h = tokenize_ws(hypotheses[i]);
    const auto r = tokenize_ws(references[i]);
    const auto m = static_cast<double>(clipped_overlap(ngram_counts(h, 1), ngram_counts(r, 1)));
    const double p = h.empty() ? 0.0 : m / static_cast<double>(h.size());
    const double rc = r.empty() ? 0.0 : m / static_cast<double>(r.size());
    out.precision += p;
    out.recall += rc;
    out.f1 += p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
  }
  const double k = 100.0 / static_cast<double>(hypotheses.size());
  out.precision *= k;
  out.recall *= k;
  out.f1 *= k;
  return out;
}

ClsMetrics cls_metrics(const std::vector<int>& predictions, const std::vector<int>& labels, int n_classes) {
  check_lengths(predictions.size(), labels.size());
  ClsMetrics out;
  if (labels.empty() || n_classes < 1) return out;
  std::vector<double> tp(n_classes, 0), pred_n(n_classes, 0), label_n(n_classes, 0);
  double correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i], l = labels[i];
    if (l < 0 || l >= n_classes) throw ConfigError("label " + std::to_string(l) + " outside class range");
    if (p >= 0 && p < n_classes) ++pred_n[p];
    ++label_n[l];
    if (p == l) {
      ++tp[l];
      ++correct;
    }
  }
  for (int c = 0; c < n_classes; ++c) {
    const double p = pred_n[c] > 0 ? tp[c] / pred_n[c] : 0.0;
    const double r = label_n[c] > 0 ? tp[c] / label_n[c] : 0.0;
    out.precision += p;
    out.recall += r;
    out.f1 += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  out.accuracy = 100.0 * correct / static_cast<double>(labels.size());
  out.precision *= 100.0 / n_classes;
  out.recall *= 100.0 / n_classes;
  out.f1 *= 100.0 / n_classes;
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["n_samples"] = n_samples;
  nlohmann::ordered_json b;
  for (const auto& [n, v] : bleu) b[std::to_string(n)] = v;
  j["bleu"] = b;
  j["rouge1"] = {{"precision", rouge.precision}, {"recall", rouge.recall}, {"f1", rouge.f1}};
  if (cls) {
    j["cls"] = {{"accuracy", cls->accuracy}, {"precision", cls->precision}, {"recall", cls->recall}, {"f1", cls->f1}};
  }
  return j.dump(2);
}

EvalReport text_report(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  EvalReport r;
  for (int n = 1; n <= 4; ++n) r.bleu[n] = bleu_n(hypotheses, references, n);
  r.rouge = rouge1(hypotheses, references);
  r.n_samples = static_cast<std::int64_t>(hypotheses.size());
  return r;
}

}  // namespace belt2

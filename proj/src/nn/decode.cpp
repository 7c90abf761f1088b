#include "belt2/nn/decode.hpp"

#include <algorithm>
#include <cmath>

#include "belt2/bpe/bpe.hpp"
#include "belt2/error.hpp"

namespace belt2 {

namespace {

std::vector<double> next_log_probs(const TextDecoder& dec, const std::vector<std::int64_t>& ids, const Tensor& memory) {
  const Tensor h = dec.hidden(ids, memory, ForwardCtx{});
  const Tensor last = dec.project(slice_rows(h, h.rows() - 1, 1));
  return log_softmax_rows(last).to_vector();
}

struct Hyp {
  std::vector<std::int64_t> ids;  // starts with BOS
  double logp = 0.0;
  bool done = false;
};

}  // namespace

DecodeMode DecodeMode::parse(const std::string& s) {
  if (s == "greedy") return greedy();
  if (s.rfind("beam:", 0) == 0) {
    try {
      const int w = std::stoi(s.substr(5));
      if (w >= 1) return beam_search(w);
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("decode mode must be 'greedy' or 'beam:<width>', got '" + s + "'");
}

std::string DecodeMode::str() const { return beam == 0 ? "greedy" : "beam:" + std::to_string(beam); }

std::vector<std::int64_t> decode_tokens(const TextDecoder& dec, const Tensor& memory, const DecodeMode& mode,
                                        std::int64_t max_len) {
  NoGradScope no_grad;
  max_len = std::min(max_len, dec.cfg.max_len);
  if (max_len <= 0) return {};

  if (mode.beam == 0) {
    std::vector<std::int64_t> ids{kBosId};
    for (std::int64_t t = 0; t < max_len; ++t) {
      const auto lp = next_log_probs(dec, ids, memory);
      const auto best = static_cast<std::int64_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
      if (best == kEosId) break;
      ids.push_back(best);
    }
    return {ids.begin() + 1, ids.end()};
  }

  const auto width = static_cast<std::size_t>(mode.beam);
  std::vector<Hyp> beams{Hyp{{kBosId}, 0.0, false}};
  for (std::int64_t t = 0; t < max_len; ++t) {
    if (std::all_of(beams.begin(), beams.end(), [](const Hyp& h) { return h.done; })) break;
    struct Cand {
      double logp;
      std::size_t beam;
      std::int64_t token;  // -1 keeps a finished beam as is
    };
    std::vector<Cand> cands;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      if (beams[b].done) {
        cands.push_back({beams[b].logp, b, -1});
        continue;
      }
      const auto lp = next_log_probs(dec, beams[b].ids, memory);
      for (std::size_t v = 0; v < lp.size(); ++v) cands.push_back({beams[b].logp + lp[v], b, static_cast<std::int64_t>(v)});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.logp > b.logp; });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < cands.size() && next.size() < width; ++i) {
      Hyp h = beams[cands[i].beam];
      h.logp = cands[i].logp;
      if (cands[i].token == kEosId) {
        h.done = true;
        h.ids.push_back(kEosId);
      } else if (cands[i].token >= 0) {
        h.ids.push_back(cands[i].token);
      }
      next.push_back(std::move(h));
    }
    beams = std::move(next);
  }
  auto per_token = [](const Hyp& h) { return h.logp / static_cast<double>(std::max<std::size_t>(1, h.ids.size() - 1)); };
  std::size_t best = 0;
  for (std::size_t i = 1; i < beams.size(); ++i)
    if (per_token(beams[i]) > per_token(beams[best])) best = i;
  auto ids = beams[best].ids;
  if (!ids.empty() && ids.back() == kEosId) ids.pop_back();
  return {ids.begin() + 1, ids.end()};
}

}  // namespace belt2

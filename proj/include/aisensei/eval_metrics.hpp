#pragma once

// Text-similarity and rating statistics used to evaluate generated feedback:
// ROUGE-N / ROUGE-L, pairwise similarity tables, Cohen's and Fleiss' kappa,
// and descriptive statistics for 1-5 expert ratings.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "aisensei/error.hpp"
#include "aisensei/kgraph.hpp"
#include "aisensei/student_model.hpp"

namespace aisensei {

// ---------------------------------------------------------------------------
// Tokenization

class TokenSequence {
 public:
  TokenSequence() = default;
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }

 private:
  friend TokenSequence tokenize(std::string_view text);
  std::vector<std::string> tokens_;
};

// Lowercase, split on runs of non-alphanumeric ASCII. Bytes >= 0x80 count as
// word characters so UTF-8 words stay whole.
inline TokenSequence tokenize(std::string_view text) {
  TokenSequence seq;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 0x80 || std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      seq.tokens_.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) seq.tokens_.push_back(std::move(cur));
  return seq;
}

// ---------------------------------------------------------------------------
// ROUGE

struct RougeScore {
  double recall = 0.0;
  double precision = 0.0;
  double f_score = 0.0;
};

inline RougeScore make_rouge_score(std::size_t overlap, std::size_t reference_count,
                                   std::size_t candidate_count) {
  RougeScore s;
  if (reference_count) s.recall = static_cast<double>(overlap) / static_cast<double>(reference_count);
  if (candidate_count) s.precision = static_cast<double>(overlap) / static_cast<double>(candidate_count);
  if (s.recall + s.precision > 0.0) s.f_score = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

namespace detail {

inline std::unordered_map<std::string, std::size_t> ngram_counts(const std::vector<std::string>& toks,
                                                                 std::size_t n) {
  std::unordered_map<std::string, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (std::size_t k = 1; k < n; ++k) {
      key += '\x1f';
      key += toks[i + k];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace detail

// Clipped n-gram overlap against a single reference.
inline RougeScore rouge_n(const TokenSequence& reference, const TokenSequence& candidate, std::size_t n) {
  if (n == 0) throw RangeError("rouge_n requires n >= 1");
  const auto ref = detail::ngram_counts(reference.tokens(), n);
  const auto cand = detail::ngram_counts(candidate.tokens(), n);
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  const std::size_t ref_total = reference.size() >= n ? reference.size() - n + 1 : 0;
  const std::size_t cand_total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  return make_rouge_score(overlap, ref_total, cand_total);
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Summary-level LCS over the full token sequences.
inline RougeScore rouge_l(const TokenSequence& reference, const TokenSequence& candidate) {
  return make_rouge_score(lcs_length(reference.tokens(), candidate.tokens()), reference.size(),
                          candidate.size());
}

struct RougeMetric {
  enum class Kind { N, L } kind = Kind::N;
  std::size_t n = 1;

  static RougeMetric ngram(std::size_t n) { return {Kind::N, n}; }
  static RougeMetric lcs() { return {Kind::L, 0}; }

  std::string name() const { return kind == Kind::L ? "rouge-l" : "rouge-" + std::to_string(n); }

  RougeScore score(const TokenSequence& ref, const TokenSequence& cand) const {
    return kind == Kind::L ? rouge_l(ref, cand) : rouge_n(ref, cand, n);
  }
};

inline std::vector<RougeMetric> default_rouge_metrics() {
  return {RougeMetric::ngram(1), RougeMetric::ngram(2), RougeMetric::lcs()};
}

struct LabeledText {
  std::string label;
  std::string text;
};

struct PairScore {
  std::string reference_label;
  std::string candidate_label;
  std::string metric;
  RougeScore score;

  std::string pair_label() const { return reference_label + " vs " + candidate_label; }
};

struct PairwiseOptions {
  std::vector<RougeMetric> metrics = default_rouge_metrics();
  // Only compare the first label (after ordering) against each of the others,
  // e.g. the standard solution S against every profile's feedback.
  bool first_vs_rest = false;
};

namespace detail {

inline int label_rank(const std::string& label) {
  static const std::vector<std::string> kOrder{"S", "S1", "S2", "S3"};
  auto it = std::find(kOrder.begin(), kOrder.end(), label);
  return it == kOrder.end() ? static_cast<int>(kOrder.size()) : static_cast<int>(it - kOrder.begin());
}

}  // namespace detail

// One row per unordered pair and metric. Labels are ordered S, S1, S2, S3
// (others keep their input order after those); the earlier label is the
// reference.
inline std::vector<PairScore> pairwise_matrix(std::vector<LabeledText> texts,
                                              const PairwiseOptions& opts = {}) {
  std::set<std::string> seen;
  for (const auto& t : texts) {
    if (!seen.insert(t.label).second) throw DuplicateLabelError("duplicate label '" + t.label + "'");
  }
  if (texts.size() < 2) throw RangeError("pairwise comparison needs at least two texts");
  std::stable_sort(texts.begin(), texts.end(), [](const LabeledText& a, const LabeledText& b) {
    return detail::label_rank(a.label) < detail::label_rank(b.label);
  });
  std::vector<TokenSequence> toks;
  for (const auto& t : texts) toks.push_back(tokenize(t.text));

  std::vector<PairScore> rows;
  const std::size_t last_ref = opts.first_vs_rest ? 1 : texts.size();
  for (std::size_t i = 0; i < last_ref; ++i) {
    for (std::size_t j = i + 1; j < texts.size(); ++j) {
      for (const auto& m : opts.metrics) {
        rows.push_back({texts[i].label, texts[j].label, m.name(), m.score(toks[i], toks[j])});
      }
    }
  }
  return rows;
}

inline std::string format_fixed(double v, int decimals = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

// Aligned text rows: "S vs S1  rouge-1  0.81  0.38  0.51".
inline std::string render_score_table(const std::vector<PairScore>& rows) {
  std::size_t label_w = 0, metric_w = 0;
  for (const auto& r : rows) {
    label_w = std::max(label_w, r.pair_label().size());
    metric_w = std::max(metric_w, r.metric.size());
  }
  std::string out;
  for (const auto& r : rows) {
    std::string label = r.pair_label();
    label.resize(label_w, ' ');
    std::string metric = r.metric;
    metric.resize(metric_w, ' ');
    out += label + "  " + metric + "  " + format_fixed(r.score.recall) + "  " +
           format_fixed(r.score.precision) + "  " + format_fixed(r.score.f_score) + "\n";
  }
  return out;
}

inline std::string render_score_csv(const std::vector<PairScore>& rows, bool header = true) {
  std::string out = header ? "pair,metric,recall,precision,f_score\n" : "";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n", r.score.recall, r.score.precision,
                  r.score.f_score);
    out += r.pair_label() + "," + r.metric + buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inter-rater agreement

// Unweighted kappa over nominal categories. When chance agreement is total
// (both raters used one identical category) the result is 1 if observed
// agreement is also total and 0 otherwise.
template <class T>
double cohens_kappa(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size() || a.empty()) {
    throw LengthMismatchError("cohen's kappa needs two equal-length, non-empty rating vectors (got " +
                              std::to_string(a.size()) + " and " + std::to_string(b.size()) + ")");
  }
  std::map<T, double> ma, mb;
  double agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma[a[i]] += 1;
    mb[b[i]] += 1;
    if (a[i] == b[i]) agree += 1;
  }
  const double n = static_cast<double>(a.size());
  const double po = agree / n;
  double pe = 0;
  for (const auto& [cat, ca] : ma) {
    auto it = mb.find(cat);
    if (it != mb.end()) pe += (ca / n) * (it->second / n);
  }
  if (std::abs(1.0 - pe) < 1e-12) {
    std::clog << "cohens_kappa: chance agreement is 1, using degenerate convention\n";
    return po >= 1.0 - 1e-12 ? 1.0 : 0.0;
  }
  return (po - pe) / (1.0 - pe);
}

template <class T>
double cohens_kappa(const std::vector<T>& a, const std::vector<T>& b) {
  return cohens_kappa(std::span<const T>(a), std::span<const T>(b));
}

// Fleiss' kappa: every rater rates every item.
template <class T>
double fleiss_kappa(const std::vector<std::vector<T>>& raters) {
  if (raters.size() < 2) throw RangeError("fleiss kappa needs at least two raters");
  const std::size_t items = raters.front().size();
  for (const auto& r : raters) {
    if (r.size() != items || items == 0) throw LengthMismatchError("rater vectors differ in length");
  }
  const double n = static_cast<double>(raters.size());
  std::map<T, double> category_totals;
  double p_bar = 0;
  for (std::size_t i = 0; i < items; ++i) {
    std::map<T, double> counts;
    for (const auto& r : raters) counts[r[i]] += 1;
    double sum_sq = 0;
    for (const auto& [cat, c] : counts) {
      sum_sq += c * c;
      category_totals[cat] += c;
    }
    p_bar += (sum_sq - n) / (n * (n - 1));
  }
  p_bar /= static_cast<double>(items);
  double pe = 0;
  for (const auto& [cat, c] : category_totals) {
    const double p = c / (static_cast<double>(items) * n);
    pe += p * p;
  }
  if (std::abs(1.0 - pe) < 1e-12) return p_bar >= 1.0 - 1e-12 ? 1.0 : 0.0;
  return (p_bar - pe) / (1.0 - pe);
}

enum class MultiRaterMethod { PairwiseMeanCohen, Fleiss };

inline MultiRaterMethod parse_multi_rater_method(std::string_view s) {
  if (s == "pairwise") return MultiRaterMethod::PairwiseMeanCohen;
  if (s == "fleiss") return MultiRaterMethod::Fleiss;
  throw ConfigError("unknown kappa method '" + std::string(s) + "' (expected pairwise|fleiss)");
}

template <class T>
double multi_rater_kappa(const std::vector<std::vector<T>>& raters,
                         MultiRaterMethod method = MultiRaterMethod::PairwiseMeanCohen) {
  if (raters.size() < 2) throw RangeError("multi-rater kappa needs at least two raters");
  for (const auto& r : raters) {
    if (r.size() != raters.front().size()) throw LengthMismatchError("rater vectors differ in length");
  }
  if (method == MultiRaterMethod::Fleiss) return fleiss_kappa(raters);
  double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < raters.size(); ++i) {
    for (std::size_t j = i + 1; j < raters.size(); ++j) {
      sum += cohens_kappa(raters[i], raters[j]);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Expert ratings

enum class RatingMetric { Correctness, Precision, Hallucination, Variability };

inline constexpr RatingMetric kAllRatingMetrics[] = {RatingMetric::Correctness, RatingMetric::Precision,
                                                     RatingMetric::Hallucination,
                                                     RatingMetric::Variability};

inline std::string_view to_string(RatingMetric m) {
  switch (m) {
    case RatingMetric::Correctness: return "Correctness";
    case RatingMetric::Precision: return "Precision";
    case RatingMetric::Hallucination: return "Hallucination";
    case RatingMetric::Variability: return "Variability";
  }
  return "?";
}

inline RatingMetric parse_rating_metric(std::string_view s) {
  for (auto m : kAllRatingMetrics) {
    if (to_string(m) == s) return m;
  }
  throw ParseError("unknown rating metric '" + std::string(s) + "'");
}

struct RatingRecord {
  std::string rater_id;
  DifficultyBand band = DifficultyBand::A;
  StudentProfile profile = StudentProfile::S1;
  RatingMetric metric = RatingMetric::Correctness;
  int value = 3;  // 1..5
};

struct RatingStat {
  DifficultyBand band;
  StudentProfile profile;
  RatingMetric metric;
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample SD, 0 when count == 1
};

struct SummaryStat {
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;
};

inline SummaryStat summarize(std::span<const double> values) {
  SummaryStat s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

// Grouped by (band, profile, metric), in that key order.
inline std::vector<RatingStat> rating_stats(const std::vector<RatingRecord>& records) {
  std::map<std::tuple<DifficultyBand, StudentProfile, RatingMetric>, std::vector<double>> groups;
  for (const auto& r : records) {
    if (r.value < 1 || r.value > 5) throw RangeError("rating value outside 1..5");
    groups[{r.band, r.profile, r.metric}].push_back(r.value);
  }
  std::vector<RatingStat> out;
  for (const auto& [key, values] : groups) {
    auto s = summarize(values);
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), s.count, s.mean, s.sd});
  }
  return out;
}

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                            : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

// CSV with header rater_id,band,profile,metric,value.
inline std::vector<RatingRecord> parse_ratings_csv(std::istream& in) {
  std::vector<RatingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cols = detail::split_csv_line(line);
    if (!header_seen) {
      header_seen = true;
      const std::vector<std::string> expected{"rater_id", "band", "profile", "metric", "value"};
      if (cols != expected) throw ParseError("ratings CSV header must be rater_id,band,profile,metric,value");
      continue;
    }
    if (cols.size() != 5) throw ParseError("ratings CSV line " + std::to_string(line_no) + ": expected 5 columns");
    RatingRecord r;
    r.rater_id = cols[0];
    r.band = parse_band(cols[1]);
    r.profile = parse_profile(cols[2]);
    r.metric = parse_rating_metric(cols[3]);
    try {
      std::size_t used = 0;
      r.value = std::stoi(cols[4], &used);
      if (used != cols[4].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ParseError("ratings CSV line " + std::to_string(line_no) + ": value is not an integer");
    }
    if (r.value < 1 || r.value > 5) {
      throw RangeError("ratings CSV line " + std::to_string(line_no) + ": value outside 1..5");
    }
    out.push_back(std::move(r));
  }
  if (!header_seen) throw ParseError("ratings CSV is empty");
  return out;
}

// One rating vector per rater for a band, items ordered by (profile, metric).
// Raters must cover the same items.
inline std::vector<std::vector<int>> rater_vectors(const std::vector<RatingRecord>& records,
                                                   DifficultyBand band) {
  std::map<std::string, std::map<std::pair<StudentProfile, RatingMetric>, int>> by_rater;
  for (const auto& r : records) {
    if (r.band != band) continue;
    if (!by_rater[r.rater_id].emplace(std::make_pair(r.profile, r.metric), r.value).second) {
      throw ParseError("rater '" + r.rater_id + "' rated band " + std::string(to_string(band)) + " " +
                       std::string(to_string(r.profile)) + " " + std::string(to_string(r.metric)) +
                       " twice");
    }
  }
  std::vector<std::vector<int>> out;
  const std::map<std::pair<StudentProfile, RatingMetric>, int>* first = nullptr;
  for (const auto& [rater, items] : by_rater) {
    if (first) {
      bool same_items = items.size() == first->size() &&
                        std::equal(items.begin(), items.end(), first->begin(),
                                   [](const auto& x, const auto& y) { return x.first == y.first; });
      if (!same_items) {
        throw LengthMismatchError("rater '" + rater + "' did not rate the same items in band " +
                                  std::string(to_string(band)));
      }
    } else {
      first = &items;
    }
    std::vector<int> v;
    for (const auto& [_, value] : items) v.push_back(value);
    out.push_back(std::move(v));
  }
  return out;
}

// Mean / SD grid: one Mean and one SD row per band, columns metric x profile.
inline std::string render_rating_table(const std::vector<RatingStat>& stats) {
  std::map<std::tuple<DifficultyBand, StudentProfile, RatingMetric>, const RatingStat*> index;
  std::set<DifficultyBand> bands;
  for (const auto& s : stats) {
    index[{s.band, s.profile, s.metric}] = &s;
    bands.insert(s.band);
  }
  std::ostringstream out;
  out << "band  measure";
  for (auto m : kAllRatingMetrics) {
    for (auto p : kAllProfiles) out << "  " << std::string(to_string(m)).substr(0, 4) << "-" << to_string(p);
  }
  out << "\n";
  for (auto b : bands) {
    for (int row = 0; row < 2; ++row) {
      out << to_string(b) << "     " << (row == 0 ? "Mean   " : "SD     ");
      for (auto m : kAllRatingMetrics) {
        for (auto p : kAllProfiles) {
          auto it = index.find({b, p, m});
          std::string cell = it == index.end() ? "-" : format_fixed(row == 0 ? it->second->mean : it->second->sd);
          if (cell.size() < 9) cell.insert(0, 9 - cell.size(), ' ');
          out << cell;
        }
      }
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace aisensei

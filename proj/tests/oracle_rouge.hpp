// SPDX-License-Identifier: Apache-2.0
#pragma once

// Independent reference implementations used to cross-check the metrics
// module.  Deliberately written with naive data structures (maps of n-gram
// vectors, full LCS tables) rather than the optimised counterparts in core.

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace testoracle {

inline std::vector<std::string> words_lower(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) {
    for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(w);
  }
  return out;
}

inline std::map<std::vector<std::string>, int> ngram_counts(
    const std::vector<std::string>& toks, int n) {
  std::map<std::vector<std::string>, int> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    counts[std::vector<std::string>(toks.begin() + static_cast<long>(i),
                                    toks.begin() + static_cast<long>(i) + n)]++;
  }
  return counts;
}

// F1 over clipped n-gram overlap, 0 when either side has no n-grams.
inline double rouge_n(const std::string& cand, const std::string& ref, int n) {
  const auto ct = words_lower(cand);
  const auto rt = words_lower(ref);
  if (static_cast<int>(ct.size()) < n || static_cast<int>(rt.size()) < n) return 0.0;
  const auto cc = ngram_counts(ct, n);
  const auto rc = ngram_counts(rt, n);
  long overlap = 0;
  for (const auto& [gram, count] : cc) {
    auto it = rc.find(gram);
    if (it != rc.end()) overlap += std::min(count, it->second);
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(ct.size() - n + 1);
  const double r = static_cast<double>(overlap) / static_cast<double>(rt.size() - n + 1);
  return 2.0 * p * r / (p + r);
}

// LCS length via a full (m+1) x (n+1) table.
inline int lcs_len(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t m = a.size(), n = b.size();
  std::vector<std::vector<int>> t(m + 1, std::vector<int>(n + 1, 0));
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      t[i][j] = (a[i - 1] == b[j - 1]) ? t[i - 1][j - 1] + 1
                                       : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  return t[m][n];
}

inline double rouge_l(const std::string& cand, const std::string& ref) {
  const auto ct = words_lower(cand);
  const auto rt = words_lower(ref);
  if (ct.empty() || rt.empty()) return 0.0;
  const int l = lcs_len(ct, rt);
  if (l == 0) return 0.0;
  const double p = static_cast<double>(l) / static_cast<double>(ct.size());
  const double r = static_cast<double>(l) / static_cast<double>(rt.size());
  return 2.0 * p * r / (p + r);
}

}  // namespace testoracle

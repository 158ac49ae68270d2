#pragma once

#include <array>
#include <string>
#include <vector>

#include "tam/labels.hpp"

namespace tam {

// Evaluation-side statistics. All run in double precision on plain vectors;
// the differentiable loss-side counterparts live in losses.hpp.

// F1 = 2TP / (2TP + FP + FN); defined as 0 when the denominator is 0.
double binary_f1(const std::vector<int>& pred, const std::vector<int>& truth);

// Mean over classes 0..k-1 of one-vs-rest F1; absent classes contribute 0.
double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int k);

// Concordance correlation: 2 cov / (var_x + var_y + (mean_x - mean_y)^2 + eps),
// population (1/N) moments.
double ccc_value(const std::vector<double>& x, const std::vector<double>& y, double eps = 1e-8);

double composite_score(double ccc_v, double ccc_a, double f1_expr, double f1_au,
                       const std::string& formula);

struct MetricReport {
  double ccc_v = 0, ccc_a = 0;
  double f1_expr_macro = 0;
  double f1_au_mean = 0;
  std::array<double, kNumAUs> per_au_f1{};
  double composite = 0;
};

// Per-frame predictions already decided (AUs thresholded, EXPR argmaxed).
struct FramePrediction {
  double valence = 0, arousal = 0;
  int expr = 0;
  std::array<int, kNumAUs> aus{};
};

MetricReport compute_report(const std::vector<FramePrediction>& preds,
                            const std::vector<FrameLabels>& labels, const std::string& formula);

// Flat key=value block (with the scoring-formula caveat note) and a
// machine-readable CSV row.
std::string report_to_kv(const MetricReport& r, const std::string& formula);
std::string report_csv_header();
std::string report_to_csv_row(const MetricReport& r);

}  // namespace tam

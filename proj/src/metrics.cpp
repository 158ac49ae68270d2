#include "tam/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace tam {

double binary_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("binary_f1: length mismatch " + std::to_string(pred.size()) +
                                " vs " + std::to_string(truth.size()));
  }
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && truth[i] == 1) ++tp;
    else if (pred[i] == 1 && truth[i] == 0) ++fp;
    else if (pred[i] == 0 && truth[i] == 1) ++fn;
  }
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int k) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("macro_f1: length mismatch " + std::to_string(pred.size()) +
                                " vs " + std::to_string(truth.size()));
  }
  if (k < 1) throw std::invalid_argument("macro_f1: k must be >= 1");
  double total = 0;
  std::vector<int> p(pred.size()), t(truth.size());
  for (int c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      p[i] = pred[i] == c ? 1 : 0;
      t[i] = truth[i] == c ? 1 : 0;
    }
    total += binary_f1(p, t);
  }
  return total / k;
}

double ccc_value(const std::vector<double>& x, const std::vector<double>& y, double eps) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("ccc: need equal lengths >= 2, got " + std::to_string(x.size()) +
                                " and " + std::to_string(y.size()));
  }
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, cov = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    vx += dx * dx;
    vy += dy * dy;
    cov += dx * dy;
  }
  vx /= n;
  vy /= n;
  cov /= n;
  const double dm = mx - my;
  return 2.0 * cov / (vx + vy + dm * dm + eps);
}

double composite_score(double ccc_v, double ccc_a, double f1_expr, double f1_au,
                       const std::string& formula) {
  const double s = 0.5 * (ccc_v + ccc_a) + f1_expr + f1_au;
  if (formula == "sum") return s;
  if (formula == "mean") return s / 3.0;
  throw std::invalid_argument("composite_score: unknown formula '" + formula + "'");
}

MetricReport compute_report(const std::vector<FramePrediction>& preds,
                            const std::vector<FrameLabels>& labels, const std::string& formula) {
  if (preds.size() != labels.size() || preds.empty()) {
    throw std::invalid_argument("compute_report: need equal nonzero prediction/label counts");
  }
  const std::size_t n = preds.size();
  std::vector<double> pv(n), pa(n), lv(n), la(n);
  std::vector<int> pe(n), le(n);
  for (std::size_t i = 0; i < n; ++i) {
    pv[i] = preds[i].valence;
    pa[i] = preds[i].arousal;
    lv[i] = static_cast<double>(labels[i].valence);
    la[i] = static_cast<double>(labels[i].arousal);
    pe[i] = preds[i].expr;
    le[i] = labels[i].expr;
  }
  MetricReport r;
  r.ccc_v = ccc_value(pv, lv);
  r.ccc_a = ccc_value(pa, la);
  r.f1_expr_macro = macro_f1(pe, le, kNumExprClasses);
  double au_total = 0;
  std::vector<int> pau(n), lau(n);
  for (int a = 0; a < kNumAUs; ++a) {
    for (std::size_t i = 0; i < n; ++i) {
      pau[i] = preds[i].aus[static_cast<std::size_t>(a)];
      lau[i] = labels[i].aus[static_cast<std::size_t>(a)];
    }
    r.per_au_f1[static_cast<std::size_t>(a)] = binary_f1(pau, lau);
    au_total += r.per_au_f1[static_cast<std::size_t>(a)];
  }
  r.f1_au_mean = au_total / kNumAUs;
  r.composite = composite_score(r.ccc_v, r.ccc_a, r.f1_expr_macro, r.f1_au_mean, formula);
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::string report_to_kv(const MetricReport& r, const std::string& formula) {
  std::ostringstream os;
  os << "ccc_v=" << fmt(r.ccc_v) << "\n";
  os << "ccc_a=" << fmt(r.ccc_a) << "\n";
  os << "f1_expr_macro=" << fmt(r.f1_expr_macro) << "\n";
  os << "f1_au_mean=" << fmt(r.f1_au_mean) << "\n";
  for (int a = 0; a < kNumAUs; ++a)
    os << "f1_au" << (a + 1) << "=" << fmt(r.per_au_f1[static_cast<std::size_t>(a)]) << "\n";
  os << "composite_formula=" << formula << "\n";
  os << "composite=" << fmt(r.composite) << "\n";
  os << "# note: the published ABAW4 MTL validation composite of 0.85 cannot be reconciled\n"
     << "# with the default formula 0.5*(ccc_v+ccc_a) + f1_expr_macro + f1_au_mean, which\n"
     << "# yields 1.107 on the published per-task scores (0.41, 0.62, 0.207, 0.385); the\n"
     << "# discrepancy is documented, not resolved. composite_formula selects sum | mean.\n";
  return os.str();
}

std::string report_csv_header() {
  std::string h = "ccc_v,ccc_a,f1_expr_macro,f1_au_mean";
  for (int a = 0; a < kNumAUs; ++a) h += ",f1_au" + std::to_string(a + 1);
  h += ",composite";
  return h;
}

std::string report_to_csv_row(const MetricReport& r) {
  std::string row = fmt(r.ccc_v) + "," + fmt(r.ccc_a) + "," + fmt(r.f1_expr_macro) + "," +
                    fmt(r.f1_au_mean);
  for (int a = 0; a < kNumAUs; ++a) row += "," + fmt(r.per_au_f1[static_cast<std::size_t>(a)]);
  row += "," + fmt(r.composite);
  return row;
}

}  // namespace tam

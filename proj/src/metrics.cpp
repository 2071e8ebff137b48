// SPDX-License-Identifier: Apache-2.0
#include "rahf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace rahf::metrics {
namespace {

void require_same_dims(const Heatmap& a, const Heatmap& b, const char* what) {
  if (!a.same_dims(b)) throw std::invalid_argument(std::string(what) + ": heatmap dimension mismatch");
}

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

std::vector<double> unit_mass(std::span<const float> v, bool uniform_if_zero) {
  double total = 0.0;
  for (float x : v) total += x;
  std::vector<double> out(v.size());
  if (total <= 0.0) {
    if (!uniform_if_zero) throw UndefinedMetric("heatmap has zero mass");
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(v.size()));
    return out;
  }
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / total;
  return out;
}

void require_nonempty_gt(const Heatmap& gt) {
  if (gt.all_zero()) throw UndefinedMetric("ground-truth heatmap is empty");
}

}  // namespace

double plcc(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("plcc: length mismatch");
  if (xs.size() < 2) throw UndefinedMetric("plcc: need at least two values");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedMetric("correlation undefined for a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double srcc(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("srcc: length mismatch");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return plcc(rx, ry);
}

double heatmap_mse(const Heatmap& pred, const Heatmap& gt) {
  require_same_dims(pred, gt, "heatmap_mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.values()[i]) - gt.values()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

double cc(const Heatmap& pred, const Heatmap& gt) {
  require_same_dims(pred, gt, "cc");
  require_nonempty_gt(gt);
  const auto p = to_double(pred.values());
  const auto g = to_double(gt.values());
  return plcc(p, g);
}

double kld(const Heatmap& gt, const Heatmap& pred) {
  require_same_dims(pred, gt, "kld");
  require_nonempty_gt(gt);
  const auto g = unit_mass(gt.values(), false);
  const auto p = unit_mass(pred.values(), true);
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] == 0.0) continue;
    acc += g[i] * std::log(g[i] / (p[i] + kKldEpsilon) + kKldEpsilon);
  }
  return acc;
}

double sim(const Heatmap& pred, const Heatmap& gt) {
  require_same_dims(pred, gt, "sim");
  require_nonempty_gt(gt);
  const auto g = unit_mass(gt.values(), false);
  const auto p = unit_mass(pred.values(), true);
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) acc += std::min(g[i], p[i]);
  return std::clamp(acc, 0.0, 1.0);
}

std::vector<Pixel> fixation_pixels(std::span<const Point> points, int width, int height) {
  std::vector<Pixel> out;
  out.reserve(points.size());
  for (const Point& p : points) {
    if (!(p.x >= 0.0f && p.x < static_cast<float>(width) && p.y >= 0.0f && p.y < static_cast<float>(height))) {
      throw UndefinedMetric("fixation outside the heatmap");
    }
    const int x = std::min(width - 1, static_cast<int>(std::lround(p.x)));
    const int y = std::min(height - 1, static_cast<int>(std::lround(p.y)));
    out.push_back({x, y});
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double nss(const Heatmap& pred, std::span<const Point> fixations) {
  const auto fix = fixation_pixels(fixations, pred.width(), pred.height());
  if (fix.empty()) throw UndefinedMetric("nss: no fixations");
  const auto v = pred.values();
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (float x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (float x : v) var += (x - mean) * (x - mean);
  var /= n;
  if (var == 0.0) throw UndefinedMetric("nss: constant prediction");
  const double sd = std::sqrt(var);
  double acc = 0.0;
  for (const Pixel& p : fix) acc += (pred.at(p.x, p.y) - mean) / sd;
  return acc / static_cast<double>(fix.size());
}

double auc_judd(const Heatmap& pred, std::span<const Point> fixations) {
  const auto fix = fixation_pixels(fixations, pred.width(), pred.height());
  if (fix.empty()) throw UndefinedMetric("auc_judd: no fixations");
  if (fix.size() == pred.size()) throw UndefinedMetric("auc_judd: every pixel is a fixation");
  std::vector<std::uint8_t> is_fix(pred.size(), 0);
  std::vector<double> fix_values;
  for (const Pixel& p : fix) {
    is_fix[static_cast<std::size_t>(p.y) * pred.width() + p.x] = 1;
    fix_values.push_back(pred.at(p.x, p.y));
  }
  std::vector<double> neg_values;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!is_fix[i]) neg_values.push_back(pred.values()[i]);
  }
  std::sort(fix_values.begin(), fix_values.end(), std::greater<>());
  std::sort(neg_values.begin(), neg_values.end(), std::greater<>());
  std::vector<double> thresholds(fix_values);
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double np = static_cast<double>(fix_values.size());
  const double nn = static_cast<double>(neg_values.size());
  // Curve starts at (0,0) for the +inf threshold and closes at (1,1).
  double area = 0.0, prev_fpr = 0.0, prev_tpr = 0.0;
  std::size_t ip = 0, in = 0;
  for (double t : thresholds) {
    while (ip < fix_values.size() && fix_values[ip] >= t) ++ip;
    while (in < neg_values.size() && neg_values[in] >= t) ++in;
    const double tpr = ip / np, fpr = in / nn;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  area += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
  return area;
}

TokenEvalReport token_prf(std::span<const LabelPair> samples) {
  TokenEvalReport r;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& [pred, gt] = samples[s];
    if (pred.size() != gt.size()) {
      throw std::invalid_argument("token_prf: label length mismatch in sample " + std::to_string(s));
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] && gt[i]) ++r.tp;
      else if (pred[i]) ++r.fp;
      else if (gt[i]) ++r.fn;
    }
  }
  r.precision = (r.tp + r.fp) > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = (r.tp + r.fn) > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = (r.precision + r.recall) > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

namespace {

struct Mean {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  std::optional<double> value() const { return n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt; }
};

std::vector<Point> max_gt_fixations(const Heatmap& gt) {
  const float mx = *std::max_element(gt.values().begin(), gt.values().end());
  std::vector<Point> pts;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x)
      if (gt.at(x, y) == mx) pts.push_back({static_cast<float>(x), static_cast<float>(y)});
  return pts;
}

}  // namespace

HeatmapEvalReport evaluate_heatmaps(std::span<const HeatmapEvalInput> pairs) {
  HeatmapEvalReport r;
  Mean mse_all, mse_empty, m_cc, m_kld, m_sim, m_nss, m_auc;
  for (const auto& p : pairs) {
    const double mse = heatmap_mse(p.pred, p.gt);
    mse_all.add(mse);
    ++r.count_all;
    if (p.gt.all_zero()) {
      mse_empty.add(mse);
      ++r.count_empty_gt;
      continue;
    }
    ++r.count_nonempty_gt;
    const std::vector<Point> fix = p.fixations.empty() ? max_gt_fixations(p.gt) : p.fixations;
    auto guarded = [&](Mean& m, auto&& fn) {
      try {
        m.add(fn());
      } catch (const UndefinedMetric&) {
        ++r.undefined_count;
      }
    };
    guarded(m_cc, [&] { return cc(p.pred, p.gt); });
    guarded(m_kld, [&] { return kld(p.gt, p.pred); });
    guarded(m_sim, [&] { return sim(p.pred, p.gt); });
    guarded(m_nss, [&] { return nss(p.pred, fix); });
    guarded(m_auc, [&] { return auc_judd(p.pred, fix); });
  }
  r.mse_all = mse_all.value();
  r.mse_empty_gt = mse_empty.value();
  r.cc = m_cc.value();
  r.kld = m_kld.value();
  r.sim = m_sim.value();
  r.nss = m_nss.value();
  r.auc_judd = m_auc.value();
  return r;
}

ScoreEvalReport evaluate_scores(std::span<const std::array<float, 4>> pred, std::span<const std::array<float, 4>> gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("evaluate_scores: length mismatch");
  ScoreEvalReport r;
  r.count = pred.size();
  for (int t = 0; t < 4; ++t) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      xs.push_back(pred[i][t]);
      ys.push_back(gt[i][t]);
    }
    try {
      r.per_type[t].plcc = plcc(xs, ys);
      r.per_type[t].srcc = srcc(xs, ys);
    } catch (const UndefinedMetric&) {
    }
  }
  return r;
}

namespace {

void put(std::ostringstream& os, const std::string& key, const std::optional<double>& v) {
  os << key << '=';
  if (v) os << std::setprecision(9) << *v;
  else os << "na";
  os << '\n';
}

void put_heatmap(std::ostringstream& os, const std::string& prefix, const HeatmapEvalReport& h) {
  os << prefix << ".count_all=" << h.count_all << '\n';
  os << prefix << ".count_empty_gt=" << h.count_empty_gt << '\n';
  os << prefix << ".count_nonempty_gt=" << h.count_nonempty_gt << '\n';
  put(os, prefix + ".mse_all", h.mse_all);
  put(os, prefix + ".mse_empty_gt", h.mse_empty_gt);
  put(os, prefix + ".cc", h.cc);
  put(os, prefix + ".kld", h.kld);
  put(os, prefix + ".sim", h.sim);
  put(os, prefix + ".nss", h.nss);
  put(os, prefix + ".auc_judd", h.auc_judd);
  os << prefix << ".undefined=" << h.undefined_count << '\n';
}

}  // namespace

std::string to_text(const EvalReport& report) {
  std::ostringstream os;
  os << "samples=" << report.matched_samples << '\n';
  for (ScoreType t : kScoreTypes) {
    const auto& c = report.scores.per_type[static_cast<int>(t)];
    put(os, "score." + std::string(score_name(t)) + ".plcc", c.plcc);
    put(os, "score." + std::string(score_name(t)) + ".srcc", c.srcc);
  }
  put_heatmap(os, "heatmap.artifact", report.artifact);
  put_heatmap(os, "heatmap.misalignment", report.misalignment);
  put(os, "keywords.precision", report.keywords.precision);
  put(os, "keywords.recall", report.keywords.recall);
  put(os, "keywords.f1", report.keywords.f1);
  os << "keywords.tp=" << report.keywords.tp << '\n';
  os << "keywords.fp=" << report.keywords.fp << '\n';
  os << "keywords.fn=" << report.keywords.fn << '\n';
  return os.str();
}

}  // namespace rahf::metrics

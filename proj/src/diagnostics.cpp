#include "scd/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace scd {

CorrelationReport full_correlation_report(SiameseModel& model,
                                          const TensorPtr& eval_batch,
                                          const std::vector<int>& layers,
                                          double epsilon, double delta) {
  const int conv_count = model.config().conv_count();
  for (int l : layers) {
    if (l < 1 || l > conv_count) {
      throw std::invalid_argument("correlation report: conv ordinal " +
                                  std::to_string(l) + " out of range");
    }
  }
  Graph g;
  std::set<int> taps(layers.begin(), layers.end());
  auto embedded = model.embed(g, eval_batch, false, taps);

  CorrelationReport report;
  report.epsilon = epsilon;
  for (int l : layers) {
    const TensorPtr& feat = embedded.taps.at(l);
    const Shape& fs = feat->shape();
    LayerCorrelation lc;
    lc.layer = l;
    lc.channels = fs.c;
    lc.matrix.assign(std::size_t(fs.c) * fs.c, 0.0);

    const std::int64_t plane = std::int64_t(fs.h) * fs.w;
    const double* data = feat->data().data();
    // per-sample NCC, averaged over the batch
    std::vector<double> norms(std::size_t(fs.c), 0.0);
    for (int b = 0; b < fs.n; ++b) {
      for (int c = 0; c < fs.c; ++c) {
        const double* src = data + (std::int64_t(b) * fs.c + c) * plane;
        double acc = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) acc += src[i] * src[i];
        norms[c] = acc;
      }
      for (int m = 0; m < fs.c; ++m) {
        const double* pm = data + (std::int64_t(b) * fs.c + m) * plane;
        for (int n = m; n < fs.c; ++n) {
          const double* pn = data + (std::int64_t(b) * fs.c + n) * plane;
          double dot = 0.0;
          for (std::int64_t i = 0; i < plane; ++i) dot += pm[i] * pn[i];
          const double p = dot / (std::sqrt(norms[m] * norms[n]) + delta);
          lc.matrix[std::size_t(m) * fs.c + n] += p / double(fs.n);
          if (n != m) lc.matrix[std::size_t(n) * fs.c + m] += p / double(fs.n);
        }
      }
    }

    const std::int64_t n_pairs = std::int64_t(fs.c) * (fs.c - 1) / 2;
    double sum_abs = 0.0, max_abs = 0.0, sum_excess = 0.0;
    std::int64_t over = 0;
    for (int m = 0; m < fs.c; ++m) {
      for (int n = m + 1; n < fs.c; ++n) {
        const double a = std::fabs(lc.at(m, n));
        sum_abs += a;
        if (a > max_abs) max_abs = a;
        if (a > epsilon) ++over;
        sum_excess += std::max(0.0, a - epsilon);
      }
    }
    lc.mean_abs_offdiag = n_pairs > 0 ? sum_abs / double(n_pairs) : 0.0;
    lc.max_abs_offdiag = max_abs;
    lc.frac_over = n_pairs > 0 ? double(over) / double(n_pairs) : 0.0;
    lc.mean_excess = n_pairs > 0 ? sum_excess / double(n_pairs) : 0.0;
    report.layers.push_back(std::move(lc));
  }
  return report;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string correlation_report_to_json(const CorrelationReport& report) {
  std::ostringstream os;
  os << "{\n  \"epoch\": " << report.epoch
     << ",\n  \"epsilon\": " << format_double(report.epsilon)
     << ",\n  \"layers\": [";
  for (std::size_t li = 0; li < report.layers.size(); ++li) {
    const auto& lc = report.layers[li];
    os << (li ? ",\n    {" : "\n    {");
    os << "\"layer\": " << lc.layer << ", \"channels\": " << lc.channels
       << ", \"meanAbsP\": " << format_double(lc.mean_abs_offdiag)
       << ", \"maxAbsP\": " << format_double(lc.max_abs_offdiag)
       << ", \"fracOver\": " << format_double(lc.frac_over)
       << ", \"meanExcess\": " << format_double(lc.mean_excess)
       << ", \"matrix\": [";
    for (int m = 0; m < lc.channels; ++m) {
      os << (m ? ", [" : "[");
      for (int n = 0; n < lc.channels; ++n) {
        os << (n ? ", " : "") << format_double(lc.at(m, n));
      }
      os << "]";
    }
    os << "]}";
  }
  os << "\n  ]\n}\n";
  return os.str();
}

}  // namespace scd

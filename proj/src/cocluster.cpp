#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "revgraph/raum.hpp"

namespace revgraph {

std::vector<std::size_t> kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed,
                                std::size_t restarts, std::size_t max_iter) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  if (k == 0) throw std::invalid_argument("kmeans: k must be positive");
  if (n == 0) return {};
  k = std::min(k, n);

  auto dist2 = [&](std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return s;
  };

  Rng rng(seed);
  std::vector<std::size_t> best_labels(n, 0);
  double best_inertia = std::numeric_limits<double>::infinity();
  for (std::size_t run = 0; run < std::max<std::size_t>(restarts, 1); ++run) {
    // k-means++ seeding.
    DenseMatrix centers(k, dim);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::size_t first = pick(rng);
    std::copy(points.row(first).begin(), points.row(first).end(), centers.row(0).begin());
    std::vector<double> d2(n);
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < c; ++q) best = std::min(best, dist2(points.row(p), centers.row(q)));
        d2[p] = best;
        total += best;
      }
      std::size_t chosen = pick(rng);
      if (total > 0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng);
        for (std::size_t p = 0; p < n; ++p) {
          target -= d2[p];
          if (target <= 0) {
            chosen = p;
            break;
          }
        }
      }
      std::copy(points.row(chosen).begin(), points.row(chosen).end(), centers.row(c).begin());
    }

    std::vector<std::size_t> labels(n, 0);
    double inertia = 0.0;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
      bool changed = iter == 0;
      inertia = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        std::size_t arg = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
          const double d = dist2(points.row(p), centers.row(c));
          if (d < best) {
            best = d;
            arg = c;
          }
        }
        if (labels[p] != arg) changed = true;
        labels[p] = arg;
        inertia += best;
      }
      if (!changed) break;
      DenseMatrix sums(k, dim);
      std::vector<std::size_t> counts(k, 0);
      for (std::size_t p = 0; p < n; ++p) {
        auto dst = sums.row(labels[p]);
        auto src = points.row(p);
        for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
        ++counts[labels[p]];
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;  // empty cluster keeps its old center
        auto dst = centers.row(c);
        auto src = sums.row(c);
        for (std::size_t j = 0; j < dim; ++j) dst[j] = src[j] / static_cast<double>(counts[c]);
      }
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_labels = labels;
    }
  }

  // Relabel by first appearance so the output does not depend on seeding order.
  std::vector<std::size_t> remap(k, k);
  std::size_t next = 0;
  for (std::size_t& l : best_labels) {
    if (remap[l] == k) remap[l] = next++;
    l = remap[l];
  }
  return best_labels;
}

CoclusterResult spectral_cocluster(const DenseMatrix& m, std::size_t k, std::uint64_t seed) {
  const std::size_t r = m.rows(), c = m.cols();
  CoclusterResult out;
  out.row_labels.assign(r, 0);
  out.col_labels.assign(c, 0);
  if (k == 0) throw std::invalid_argument("spectral_cocluster: k must be positive");

  Eigen::MatrixXd a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::abs(m(i, j));
      total += std::abs(m(i, j));
    }
  }
  if (k == 1 || r == 0 || c == 0 || !(total > 0.0)) {
    out.degenerate = k > 1;
    return out;
  }

  Eigen::VectorXd row_scale = a.rowwise().sum();
  Eigen::VectorXd col_scale = a.colwise().sum().transpose();
  for (auto* v : {&row_scale, &col_scale}) {
    for (Eigen::Index i = 0; i < v->size(); ++i) {
      (*v)(i) = (*v)(i) > 0 ? 1.0 / std::sqrt((*v)(i)) : 0.0;
    }
  }
  const Eigen::MatrixXd an = row_scale.asDiagonal() * a * col_scale.asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(an, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > 1e-10 * sv(0)) ++rank;
  }
  // The top min(k, rank) singular vectors; with k tied blocks any subset of
  // fewer vectors can collapse two blocks onto one point.
  const auto q = static_cast<Eigen::Index>(std::min<std::size_t>(k, static_cast<std::size_t>(rank)));
  DenseMatrix z(r + c, static_cast<std::size_t>(q));
  for (std::size_t i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) {
      z(i, static_cast<std::size_t>(j)) = row_scale(static_cast<Eigen::Index>(i)) *
                                          svd.matrixU()(static_cast<Eigen::Index>(i), j);
    }
  }
  for (std::size_t i = 0; i < c; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) {
      z(r + i, static_cast<std::size_t>(j)) = col_scale(static_cast<Eigen::Index>(i)) *
                                              svd.matrixV()(static_cast<Eigen::Index>(i), j);
    }
  }
  const std::vector<std::size_t> labels = kmeans(z, k, seed);
  std::copy(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(r), out.row_labels.begin());
  std::copy(labels.begin() + static_cast<std::ptrdiff_t>(r), labels.end(), out.col_labels.begin());
  out.clusters = 1 + *std::max_element(labels.begin(), labels.end());
  return out;
}

CoclusterResult export_cross_relation(const CrossRelationMatrix& d,
                                      const std::filesystem::path& path, std::size_t k,
                                      std::uint64_t seed, const std::string& fingerprint) {
  if (!d.matrix.all_finite()) throw std::domain_error("export_cross_relation: non-finite D");
  CoclusterResult cc = spectral_cocluster(d.matrix, k, seed);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    if (!fingerprint.empty()) out << "# fingerprint=" << fingerprint << '\n';
    out << std::setprecision(10);
    for (std::size_t i = 0; i < d.matrix.rows(); ++i) {
      for (std::size_t j = 0; j < d.matrix.cols(); ++j) {
        if (j) out << '\t';
        out << d.matrix(i, j);
      }
      out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
  }
  std::filesystem::path cpath = path;
  cpath += ".clusters.tsv";
  std::ofstream out(cpath, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + cpath.string());
  if (!fingerprint.empty()) out << "# fingerprint=" << fingerprint << '\n';
  out << "axis\tindex\tcluster\n";
  for (std::size_t i = 0; i < cc.row_labels.size(); ++i) out << "row\t" << i << '\t' << cc.row_labels[i] << '\n';
  for (std::size_t j = 0; j < cc.col_labels.size(); ++j) out << "col\t" << j << '\t' << cc.col_labels[j] << '\n';
  return cc;
}

}  // namespace revgraph

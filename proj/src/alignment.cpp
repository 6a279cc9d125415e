#include "revgraph/alignment.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace revgraph {

void ItcHead::validate() const {
  if (w_img.rows() != w_txt.rows() || w_img.rows() == 0) {
    throw ShapeError("ItcHead: projections must share a non-zero output dim");
  }
  if (!std::isfinite(log_temperature)) throw std::domain_error("ItcHead: non-finite temperature");
}

ItcHead make_itc_head(std::size_t image_dim, std::size_t text_dim, std::size_t proj_dim,
                      std::uint64_t seed, double init_temperature) {
  if (init_temperature <= 0) throw std::invalid_argument("temperature must be positive");
  Rng rng(seed);
  ItcHead h;
  h.w_img = fan_in_uniform(proj_dim, image_dim, image_dim, rng);
  h.w_txt = fan_in_uniform(proj_dim, text_dim, text_dim, rng);
  h.log_temperature = std::log(init_temperature);
  return h;
}

DenseMatrix project_images(const ItcHead& head, const DenseMatrix& img) {
  return matmul_nt(img, head.w_img);
}

DenseMatrix project_texts(const ItcHead& head, const DenseMatrix& txt) {
  return matmul_nt(txt, head.w_txt);
}

DenseMatrix similarity(const ItcHead& head, const DenseMatrix& img, const DenseMatrix& txt) {
  head.validate();
  if (img.rows() != txt.rows()) throw ShapeError("similarity: batch sizes differ");
  return matmul_nt(project_images(head, img), project_texts(head, txt));
}

double itc_loss(const ItcHead& head, const DenseMatrix& img, const DenseMatrix& txt,
                ItcGradients* grads) {
  head.validate();
  if (img.rows() != txt.rows()) throw ShapeError("itc_loss: batch sizes differ");
  const std::size_t batch = img.rows();
  if (batch == 0) throw std::invalid_argument("itc_loss: empty batch");

  const DenseMatrix zi = project_images(head, img);
  const DenseMatrix zt = project_texts(head, txt);
  const DenseMatrix s = matmul_nt(zi, zt);
  if (!s.all_finite()) throw std::domain_error("itc_loss: non-finite similarity");

  const double temp = head.temperature();
  DenseMatrix logits = s;
  for (double& v : logits.values()) v /= temp;

  // image -> text: softmax over each row; text -> image: softmax over each column.
  const DenseMatrix p_rows = softmax_rows(logits);
  const DenseMatrix p_cols = softmax_rows(logits.transposed()).transposed();
  double i2t = 0.0, t2i = 0.0;
  for (std::size_t a = 0; a < batch; ++a) {
    i2t -= std::log(std::max(p_rows(a, a), 1e-300));
    t2i -= std::log(std::max(p_cols(a, a), 1e-300));
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  const double loss = 0.5 * i2t * inv_b + 0.5 * t2i * inv_b;

  if (grads != nullptr) {
    DenseMatrix g_logits(batch, batch);
    for (std::size_t a = 0; a < batch; ++a) {
      for (std::size_t b = 0; b < batch; ++b) {
        const double target = a == b ? 1.0 : 0.0;
        g_logits(a, b) = 0.5 * inv_b * ((p_rows(a, b) - target) + (p_cols(a, b) - target));
      }
    }
    double g_log_temp = 0.0;
    DenseMatrix g_s(batch, batch);
    for (std::size_t k = 0; k < g_s.size(); ++k) {
      g_s.data()[k] = g_logits.data()[k] / temp;
      g_log_temp -= g_logits.data()[k] * logits.data()[k];
    }
    const DenseMatrix g_zi = matmul(g_s, zt);
    const DenseMatrix g_zt = matmul_tn(g_s, zi);
    grads->w_img = matmul_tn(g_zi, img);
    grads->w_txt = matmul_tn(g_zt, txt);
    grads->log_temperature = g_log_temp;
  }
  return loss;
}

DenseMatrix gather_rows(const DenseMatrix& m, const std::vector<std::size_t>& rows) {
  DenseMatrix out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = m.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

double batched_itc_loss(const ItcHead& head, const DenseMatrix& img, const DenseMatrix& txt,
                        const std::vector<std::size_t>& rows, std::size_t batch_size) {
  if (rows.empty()) throw std::invalid_argument("batched_itc_loss: no rows");
  batch_size = std::max<std::size_t>(1, batch_size);
  if (rows.size() <= batch_size) {
    return itc_loss(head, gather_rows(img, rows), gather_rows(txt, rows));
  }
  // Full batches only, so every term has the same number of in-batch negatives.
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start + batch_size <= rows.size(); start += batch_size) {
    std::vector<std::size_t> chunk(rows.begin() + start, rows.begin() + start + batch_size);
    total += itc_loss(head, gather_rows(img, chunk), gather_rows(txt, chunk));
    ++count;
  }
  return total / static_cast<double>(count);
}

double retrieval_top1(const ItcHead& head, const DenseMatrix& img, const DenseMatrix& txt,
                      const std::vector<std::size_t>& rows) {
  if (rows.empty()) return 0.0;
  const DenseMatrix s = similarity(head, gather_rows(img, rows), gather_rows(txt, rows));
  std::size_t hits = 0;
  for (std::size_t a = 0; a < s.rows(); ++a) {
    auto row = s.row(a);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == a) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

ItcTrainResult train_itc(ItcHead& head, const DenseMatrix& img, const DenseMatrix& txt,
                         const ItcTrainConfig& config) {
  head.validate();
  if (img.rows() != txt.rows()) throw ShapeError("train_itc: tables are not row-aligned");
  if (img.rows() < 2) throw std::invalid_argument("train_itc: need at least two pairs");
  Rng rng(config.seed);
  std::vector<std::size_t> perm(img.rows());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto n_hold = static_cast<std::size_t>(static_cast<double>(perm.size()) * config.holdout_fraction);
  n_hold = std::min(n_hold, perm.size() - 1);

  ItcTrainResult result;
  result.heldout_rows.assign(perm.end() - static_cast<std::ptrdiff_t>(n_hold), perm.end());
  std::vector<std::size_t> train_rows(perm.begin(), perm.end() - static_cast<std::ptrdiff_t>(n_hold));
  const std::size_t batch_size = std::max<std::size_t>(1, config.batch_size);
  if (!result.heldout_rows.empty()) {
    result.heldout_loss_initial = batched_itc_loss(head, img, txt, result.heldout_rows, batch_size);
  }

  std::vector<double> log_temp(1, head.log_temperature);
  AdamWState opt(config.adamw, {head.w_img.size(), head.w_txt.size(), 1});
  opt.decay[2] = false;  // temperature
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(train_rows.begin(), train_rows.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train_rows.size(); start += batch_size) {
      const std::size_t n = std::min(batch_size, train_rows.size() - start);
      if (n < 2 && batches > 0) break;  // a lone pair carries no contrastive signal
      std::vector<std::size_t> chunk(train_rows.begin() + start, train_rows.begin() + start + n);
      ItcGradients g;
      const double loss = itc_loss(head, gather_rows(img, chunk), gather_rows(txt, chunk), &g);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_itc: non-finite loss at epoch " + std::to_string(epoch));
      }
      log_temp[0] = head.log_temperature;
      const double g_temp[1] = {g.log_temperature};
      std::vector<std::span<double>> params = {head.w_img.values(), head.w_txt.values(), log_temp};
      std::vector<std::span<const double>> grads = {g.w_img.values(), g.w_txt.values(),
                                                    std::span<const double>(g_temp, 1)};
      adamw_step(opt, params, grads);
      head.log_temperature = log_temp[0];
      total += loss;
      ++batches;
    }
    result.trace.push_back(total / static_cast<double>(std::max<std::size_t>(batches, 1)));
  }
  if (!result.heldout_rows.empty()) {
    result.heldout_loss_final = batched_itc_loss(head, img, txt, result.heldout_rows, batch_size);
  }
  return result;
}

}  // namespace revgraph

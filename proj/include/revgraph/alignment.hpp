#pragma once

// Image-text contrastive head: linear projections of precomputed image and
// text [CLS] vectors, a learned temperature, and the symmetric in-batch
// cross-entropy where row a of the image batch pairs with row a of the text
// batch.

#include <cmath>
#include <vector>

#include "revgraph/dataset.hpp"
#include "revgraph/numerics.hpp"

namespace revgraph {

struct ItcHead {
  DenseMatrix w_img;  // proj_dim x image_dim
  DenseMatrix w_txt;  // proj_dim x text_dim
  double log_temperature = std::log(0.07);

  double temperature() const { return std::exp(log_temperature); }
  std::size_t proj_dim() const { return w_img.rows(); }
  void validate() const;
};

ItcHead make_itc_head(std::size_t image_dim, std::size_t text_dim, std::size_t proj_dim,
                      std::uint64_t seed, double init_temperature = 0.07);

// s[a][b] = <W_img img_a, W_txt txt_b>
DenseMatrix similarity(const ItcHead& head, const DenseMatrix& img, const DenseMatrix& txt);

struct ItcGradients {
  DenseMatrix w_img;
  DenseMatrix w_txt;
  double log_temperature = 0.0;
};

// 0.5 * mean_a CE(softmax_b(s[a][.] / t), a) + 0.5 * mean_b CE(softmax_a(s[.][b] / t), b)
double itc_loss(const ItcHead& head, const DenseMatrix& img, const DenseMatrix& txt,
                ItcGradients* grads = nullptr);

struct ItcTrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double holdout_fraction = 0.1;
  AdamWConfig adamw{};
  std::uint64_t seed = 0;
};

struct ItcTrainResult {
  std::vector<double> trace;          // mean training batch loss per epoch
  double heldout_loss_initial = 0.0;  // mean over held-out batches
  double heldout_loss_final = 0.0;
  std::vector<std::size_t> heldout_rows;
};

// Rows of the two tables are paired by index. The trailing holdout_fraction
// of a seeded permutation is held out.
ItcTrainResult train_itc(ItcHead& head, const DenseMatrix& img, const DenseMatrix& txt,
                         const ItcTrainConfig& config);

// Mean loss over consecutive batches of the given rows.
double batched_itc_loss(const ItcHead& head, const DenseMatrix& img, const DenseMatrix& txt,
                        const std::vector<std::size_t>& rows, std::size_t batch_size);

// Fraction of rows whose image retrieves its own text as top-1 among the
// given rows.
double retrieval_top1(const ItcHead& head, const DenseMatrix& img, const DenseMatrix& txt,
                      const std::vector<std::size_t>& rows);

DenseMatrix project_images(const ItcHead& head, const DenseMatrix& img);
DenseMatrix project_texts(const ItcHead& head, const DenseMatrix& txt);

DenseMatrix gather_rows(const DenseMatrix& m, const std::vector<std::size_t>& rows);

}  // namespace revgraph

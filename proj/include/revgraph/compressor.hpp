#pragma once

// Auto-encoders that reduce raw image, text and review embeddings to a small
// code dimension, plus the item-side concatenation of image and text codes.

#include <functional>
#include <vector>

#include "revgraph/dataset.hpp"
#include "revgraph/numerics.hpp"

namespace revgraph {

inline constexpr std::size_t kDefaultCodeDim = 64;

struct AutoEncoder {
  MlpParams encoder;  // input_dim -> hidden -> code_dim
  MlpParams decoder;  // code_dim -> hidden -> input_dim
  std::size_t input_dim = 0;
  std::size_t code_dim = 0;
  double l2_coeff = 1e-4;

  void validate() const;
  double l2_term() const { return l2_coeff * (encoder.squared_norm() + decoder.squared_norm()); }
};

// round(sqrt(in * out)), at least 1.
std::size_t geometric_hidden_width(std::size_t in, std::size_t out);

AutoEncoder make_autoencoder(std::size_t input_dim, std::size_t code_dim, double l2_coeff,
                             std::uint64_t seed);

// Encoder applied row-wise. Missing rows pass through as zero input and stay
// flagged in the output.
EmbeddingTable compress(const AutoEncoder& ae, const EmbeddingTable& table);
EmbeddingTable compress(const AutoEncoder& ae, const EmbeddingTable& table, EmbeddingKind out_kind);

struct AeGradients {
  MlpGrads encoder;
  MlpGrads decoder;
};

// mean over batch rows and input columns of (x - x_hat)^2 + lambda * ||theta||^2
double ae_objective(const AutoEncoder& ae, const DenseMatrix& batch, AeGradients* grads = nullptr);

struct AeTrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  AdamWConfig adamw{};
  std::uint64_t seed = 0;
};

// Per-epoch mean of the batch objectives. Rows flagged missing are skipped.
// Throws std::runtime_error on a non-finite objective.
std::vector<double> train_ae(AutoEncoder& ae, const EmbeddingTable& table,
                             const AeTrainConfig& config);

// Row-wise concat(image_code, text_code).
DenseMatrix build_item_init(const DenseMatrix& image_codes, const DenseMatrix& text_codes);

void normalize_rows(DenseMatrix& m);
// Subtracts the column means.
void center_columns(DenseMatrix& m);
// Copy of codes, optionally column-centred and then row-normalized.
DenseMatrix prepare_codes(const DenseMatrix& codes, bool center, bool normalize);

// Parameter blocks in a fixed order, for the optimizer.
std::vector<std::span<double>> parameter_blocks(AutoEncoder& ae);
void save_autoencoder(const std::filesystem::path& path, const AutoEncoder& ae);
AutoEncoder load_autoencoder(const std::filesystem::path& path);

}  // namespace revgraph

#include "revgraph/compressor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace revgraph {

void AutoEncoder::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.input_dim() != input_dim || encoder.output_dim() != code_dim ||
      decoder.input_dim() != code_dim || decoder.output_dim() != input_dim) {
    throw ShapeError("AutoEncoder: encoder/decoder shapes do not chain input->code->input");
  }
}

std::size_t geometric_hidden_width(std::size_t in, std::size_t out) {
  const double g = std::sqrt(static_cast<double>(in) * static_cast<double>(out));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(g)));
}

AutoEncoder make_autoencoder(std::size_t input_dim, std::size_t code_dim, double l2_coeff,
                             std::uint64_t seed) {
  if (input_dim == 0 || code_dim == 0) throw ShapeError("make_autoencoder: zero dimension");
  Rng rng(seed);
  AutoEncoder ae;
  ae.input_dim = input_dim;
  ae.code_dim = code_dim;
  ae.l2_coeff = l2_coeff;
  const std::size_t hidden = geometric_hidden_width(input_dim, code_dim);
  ae.encoder = make_mlp(input_dim, hidden, code_dim, rng);
  ae.decoder = make_mlp(code_dim, hidden, input_dim, rng);
  return ae;
}

EmbeddingTable compress(const AutoEncoder& ae, const EmbeddingTable& table,
                        EmbeddingKind out_kind) {
  ae.validate();
  if (table.dim() != ae.input_dim) {
    throw ShapeError("compress: table dim " + std::to_string(table.dim()) +
                     " != auto-encoder input dim " + std::to_string(ae.input_dim));
  }
  EmbeddingTable out;
  out.kind = out_kind;
  out.missing = table.missing;
  // Chunked so the hidden activations of large tables stay bounded.
  constexpr std::size_t kChunk = 4096;
  out.matrix = DenseMatrix(table.rows(), ae.code_dim);
  for (std::size_t start = 0; start < table.rows(); start += kChunk) {
    const std::size_t n = std::min(kChunk, table.rows() - start);
    DenseMatrix chunk(n, table.dim(),
                      std::vector<double>(table.matrix.row(start).begin(),
                                          table.matrix.row(start).begin() + n * table.dim()));
    DenseMatrix codes = mlp_forward(ae.encoder, chunk);
    std::copy(codes.values().begin(), codes.values().end(), out.matrix.row(start).begin());
  }
  return out;
}

EmbeddingTable compress(const AutoEncoder& ae, const EmbeddingTable& table) {
  return compress(ae, table, compressed_kind_for(table.kind));
}

namespace {

void add_l2_grad(DenseMatrix& g, const DenseMatrix& p, double lambda) {
  for (std::size_t k = 0; k < g.size(); ++k) g.data()[k] += 2.0 * lambda * p.data()[k];
}

void add_l2_grad(MlpGrads& g, const MlpParams& p, double lambda) {
  add_l2_grad(g.w1, p.w1, lambda);
  add_l2_grad(g.b1, p.b1, lambda);
  add_l2_grad(g.w2, p.w2, lambda);
  add_l2_grad(g.b2, p.b2, lambda);
}

}  // namespace

double ae_objective(const AutoEncoder& ae, const DenseMatrix& batch, AeGradients* grads) {
  if (batch.rows() == 0) throw std::invalid_argument("ae_objective: empty batch");
  MlpCache enc_cache, dec_cache;
  DenseMatrix codes = mlp_forward(ae.encoder, batch, &enc_cache);
  DenseMatrix recon = mlp_forward(ae.decoder, codes, &dec_cache);
  const double denom = static_cast<double>(batch.rows() * batch.cols());
  double mse = 0.0;
  DenseMatrix grad_recon(recon.rows(), recon.cols());
  for (std::size_t k = 0; k < recon.size(); ++k) {
    const double diff = recon.data()[k] - batch.data()[k];
    mse += diff * diff;
    grad_recon.data()[k] = 2.0 * diff / denom;
  }
  mse /= denom;
  const double objective = mse + ae.l2_term();
  if (grads != nullptr) {
    DenseMatrix grad_codes;
    grads->decoder = mlp_backward(ae.decoder, dec_cache, grad_recon, &grad_codes);
    grads->encoder = mlp_backward(ae.encoder, enc_cache, grad_codes);
    add_l2_grad(grads->decoder, ae.decoder, ae.l2_coeff);
    add_l2_grad(grads->encoder, ae.encoder, ae.l2_coeff);
  }
  return objective;
}

std::vector<std::span<double>> parameter_blocks(AutoEncoder& ae) {
  return {ae.encoder.w1.values(), ae.encoder.b1.values(), ae.encoder.w2.values(),
          ae.encoder.b2.values(), ae.decoder.w1.values(), ae.decoder.b1.values(),
          ae.decoder.w2.values(), ae.decoder.b2.values()};
}

std::vector<double> train_ae(AutoEncoder& ae, const EmbeddingTable& table,
                             const AeTrainConfig& config) {
  ae.validate();
  if (table.dim() != ae.input_dim) throw ShapeError("train_ae: table dim mismatch");
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    if (!table.missing[r]) rows.push_back(r);
  }
  if (rows.empty()) throw std::invalid_argument("train_ae: no non-missing rows to train on");
  const std::size_t batch_size = std::max<std::size_t>(1, config.batch_size);

  std::vector<std::size_t> sizes;
  for (auto block : parameter_blocks(ae)) sizes.push_back(block.size());
  AdamWState opt(config.adamw, sizes);
  Rng rng(config.seed);

  std::vector<double> trace;
  trace.reserve(config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(rows.begin(), rows.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < rows.size(); start += batch_size) {
      const std::size_t n = std::min(batch_size, rows.size() - start);
      DenseMatrix batch(n, table.dim());
      for (std::size_t b = 0; b < n; ++b) {
        auto src = table.matrix.row(rows[start + b]);
        std::copy(src.begin(), src.end(), batch.row(b).begin());
      }
      AeGradients g;
      const double loss = ae_objective(ae, batch, &g);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "train_ae: non-finite objective at epoch " << epoch << ", batch " << batches
           << " (l2=" << ae.l2_coeff << ", lr=" << config.adamw.lr << ")";
        throw std::runtime_error(os.str());
      }
      std::vector<std::span<const double>> grads = {
          g.encoder.w1.values(), g.encoder.b1.values(), g.encoder.w2.values(),
          g.encoder.b2.values(), g.decoder.w1.values(), g.decoder.b1.values(),
          g.decoder.w2.values(), g.decoder.b2.values()};
      auto params = parameter_blocks(ae);
      adamw_step(opt, params, grads);
      total += loss;
      ++batches;
    }
    trace.push_back(total / static_cast<double>(batches));
  }
  return trace;
}

DenseMatrix build_item_init(const DenseMatrix& image_codes, const DenseMatrix& text_codes) {
  if (image_codes.rows() != text_codes.rows()) {
    throw ShapeError("build_item_init: image has " + std::to_string(image_codes.rows()) +
                     " rows, text has " + std::to_string(text_codes.rows()));
  }
  const std::size_t di = image_codes.cols();
  const std::size_t dt = text_codes.cols();
  DenseMatrix out(image_codes.rows(), di + dt);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(image_codes.row(r).begin(), image_codes.row(r).end(), dst.begin());
    std::copy(text_codes.row(r).begin(), text_codes.row(r).end(), dst.begin() + di);
  }
  return out;
}

void center_columns(DenseMatrix& m) {
  if (m.rows() == 0) return;
  std::vector<double> mean(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) mean[c] += row[c];
  }
  for (double& v : mean) v /= static_cast<double>(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] -= mean[c];
  }
}

DenseMatrix prepare_codes(const DenseMatrix& codes, bool center, bool normalize) {
  DenseMatrix c = codes;
  if (center) center_columns(c);
  if (normalize) normalize_rows(c);
  return c;
}

void normalize_rows(DenseMatrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double n = std::sqrt(squared_norm(row));
    if (n > 0) {
      for (double& v : row) v /= n;
    }
  }
}

namespace {

void write_matrix(std::ostream& out, const DenseMatrix& m) {
  const std::uint64_t dims[2] = {m.rows(), m.cols()};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

DenseMatrix read_matrix(std::istream& in) {
  std::uint64_t dims[2] = {0, 0};
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] * dims[1] > (1ull << 32)) throw std::runtime_error("corrupt matrix block");
  std::vector<double> data(dims[0] * dims[1]);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated matrix block");
  return DenseMatrix(dims[0], dims[1], std::move(data));
}

}  // namespace

void save_autoencoder(const std::filesystem::path& path, const AutoEncoder& ae) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "revgraph-ae v1 input=" << ae.input_dim << " code=" << ae.code_dim
      << " l2=" << ae.l2_coeff << '\n';
  for (const MlpParams* p : {&ae.encoder, &ae.decoder}) {
    write_matrix(out, p->w1);
    write_matrix(out, p->b1);
    write_matrix(out, p->w2);
    write_matrix(out, p->b2);
  }
}

AutoEncoder load_autoencoder(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  AutoEncoder ae;
  if (std::sscanf(header.c_str(), "revgraph-ae v1 input=%zu code=%zu l2=%lf", &ae.input_dim,
                  &ae.code_dim, &ae.l2_coeff) != 3) {
    throw std::runtime_error(path.string() + ": bad auto-encoder header");
  }
  for (MlpParams* p : {&ae.encoder, &ae.decoder}) {
    p->w1 = read_matrix(in);
    p->b1 = read_matrix(in);
    p->w2 = read_matrix(in);
    p->b2 = read_matrix(in);
  }
  ae.validate();
  return ae;
}

}  // namespace revgraph

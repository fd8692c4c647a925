#pragma once

// Stacked vanilla RNN with a softmax readout, trained by full backpropagation
// through time over each window. Windows are independent: the hidden state
// starts at zero for every sequence.
//
// Parameter layout "rnn-flat-v1" (all matrices row-major):
//   for each layer j = 0 .. layers-1:
//     W_in[j]  hidden x in_j    (in_0 = input_dim, in_j = hidden for j > 0)
//     W_hh[j]  hidden x hidden
//     b[j]     hidden
//   W_out      output_dim x hidden
//   b_out      output_dim
//
// Recurrence: h_t[j] = act(W_in[j] x_t[j] + W_hh[j] h_{t-1}[j] + b[j]) with
// x_t[0] the input symbol (one-hot) or pixel value and x_t[j] = h_t[j-1].

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "adaqn/data/sequences.hpp"
#include "adaqn/objective.hpp"

namespace adaqn::problems {

enum class Activation { Tanh, Relu };

inline constexpr const char* kRnnLayoutVersion = "rnn-flat-v1";

struct RnnArchitecture {
  std::size_t input_dim = 1;
  bool one_hot_input = false;
  std::size_t hidden = 8;
  std::size_t layers = 1;
  std::size_t output_dim = 2;
  Activation activation = Activation::Tanh;
};

class RnnLayout {
 public:
  struct Layer {
    std::size_t in_dim, w_in, w_hh, bias;
  };

  explicit RnnLayout(const RnnArchitecture& a) {
    if (a.hidden == 0 || a.layers == 0 || a.input_dim == 0 || a.output_dim == 0)
      throw ConfigError("rnn: all sizes must be positive");
    std::size_t off = 0;
    for (std::size_t j = 0; j < a.layers; ++j) {
      Layer l{};
      l.in_dim = j == 0 ? a.input_dim : a.hidden;
      l.w_in = off;
      off += a.hidden * l.in_dim;
      l.w_hh = off;
      off += a.hidden * a.hidden;
      l.bias = off;
      off += a.hidden;
      layers.push_back(l);
    }
    w_out = off;
    off += a.output_dim * a.hidden;
    b_out = off;
    off += a.output_dim;
    total = off;
  }

  std::vector<Layer> layers;
  std::size_t w_out = 0;
  std::size_t b_out = 0;
  std::size_t total = 0;
};

/// Weights ~ N(0, stddev²), biases zero.
inline ParamVector rnn_initial_weights(const RnnArchitecture& arch, std::uint64_t seed, double stddev = 0.01) {
  const RnnLayout layout(arch);
  ParamVector w(layout.total, 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  auto fill = [&](std::size_t off, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) w[off + i] = normal(rng);
  };
  for (const auto& l : layout.layers) {
    fill(l.w_in, arch.hidden * l.in_dim);
    fill(l.w_hh, arch.hidden * arch.hidden);
  }
  fill(layout.w_out, arch.output_dim * arch.hidden);
  return w;
}

/// One mini-batch laid out by time step. Exactly one of `tokens` / `dense` is
/// used, matching RnnArchitecture::one_hot_input.
struct RnnBatch {
  std::size_t steps = 0;
  std::size_t width = 0;
  std::vector<std::vector<std::uint32_t>> tokens;      // [t][b]
  std::vector<Eigen::MatrixXd> dense;                  // [t] input_dim x width
  std::vector<std::vector<std::uint32_t>> step_targets;  // [t][b], readout at every step
  std::vector<std::uint32_t> final_targets;              // [b], readout at the last step only
};

class RnnNetwork {
 public:
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMat = Eigen::Map<const RowMat>;
  using Mat = Eigen::Map<RowMat>;
  using ConstVec = Eigen::Map<const Eigen::VectorXd>;
  using Vec = Eigen::Map<Eigen::VectorXd>;

  explicit RnnNetwork(RnnArchitecture arch) : arch_(arch), layout_(arch) {}

  const RnnArchitecture& architecture() const { return arch_; }
  const RnnLayout& layout() const { return layout_; }
  std::size_t num_params() const { return layout_.total; }

  struct Cache {
    std::vector<std::vector<Eigen::MatrixXd>> hidden;  // [layer][t], hidden x width
    std::vector<Eigen::MatrixXd> probs;                // per readout step, output x width
    std::size_t readouts = 0;
  };

  /// Mean cross-entropy (nats) over all readouts in the batch.
  double forward(std::span<const double> w, const RnnBatch& batch, Cache* cache = nullptr,
                 std::size_t* correct = nullptr) const {
    require_same_size(w.size(), layout_.total, "rnn forward");
    const auto H = static_cast<Eigen::Index>(arch_.hidden);
    const auto B = static_cast<Eigen::Index>(batch.width);
    const std::size_t T = batch.steps;
    const bool every_step = !batch.step_targets.empty();
    if (T == 0 || B == 0) throw ConfigError("rnn: empty batch");

    std::vector<std::vector<Eigen::MatrixXd>> hid(arch_.layers, std::vector<Eigen::MatrixXd>(T));
    std::vector<Eigen::MatrixXd> probs;
    double loss = 0.0;
    std::size_t hits = 0;
    std::size_t readouts = 0;
    const ConstMat Wout(w.data() + layout_.w_out, static_cast<Eigen::Index>(arch_.output_dim), H);
    const ConstVec bout(w.data() + layout_.b_out, static_cast<Eigen::Index>(arch_.output_dim));

    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < arch_.layers; ++j) {
        const auto& L = layout_.layers[j];
        const ConstMat Win(w.data() + L.w_in, H, static_cast<Eigen::Index>(L.in_dim));
        const ConstMat Whh(w.data() + L.w_hh, H, H);
        const ConstVec b(w.data() + L.bias, H);
        Eigen::MatrixXd Z = b.replicate(1, B);
        if (j == 0) {
          if (arch_.one_hot_input) {
            for (Eigen::Index c = 0; c < B; ++c) {
              const std::uint32_t tok = batch.tokens[t][static_cast<std::size_t>(c)];
              if (tok >= arch_.input_dim) throw ConfigError("rnn: input symbol out of range");
              Z.col(c) += Win.col(tok);
            }
          } else {
            Z.noalias() += Win * batch.dense[t];
          }
        } else {
          Z.noalias() += Win * hid[j - 1][t];
        }
        if (t > 0) Z.noalias() += Whh * hid[j][t - 1];
        hid[j][t] = activate(Z);
      }

      const bool readout = every_step || t + 1 == T;
      if (!readout) continue;
      Eigen::MatrixXd logits = Wout * hid[arch_.layers - 1][t];
      logits.colwise() += bout;
      for (Eigen::Index c = 0; c < B; ++c) {
        const std::uint32_t target =
            every_step ? batch.step_targets[t][static_cast<std::size_t>(c)] : batch.final_targets[static_cast<std::size_t>(c)];
        if (target >= arch_.output_dim) throw ConfigError("rnn: target out of range");
        Eigen::Index arg = 0;
        const double mx = logits.col(c).maxCoeff(&arg);
        const double shifted_target = logits(target, c) - mx;
        logits.col(c).array() = (logits.col(c).array() - mx).exp();
        const double z = logits.col(c).sum();
        loss += std::log(z) - shifted_target;
        logits.col(c) /= z;
        hits += static_cast<std::uint32_t>(arg) == target ? 1 : 0;
      }
      ++readouts;
      if (cache) probs.push_back(std::move(logits));
    }
    const double mean = loss / static_cast<double>(readouts * batch.width);
    if (!std::isfinite(mean)) throw NumericalError("rnn: non-finite loss");
    if (cache) {
      cache->hidden = std::move(hid);
      cache->probs = std::move(probs);
      cache->readouts = readouts;
    }
    if (correct) *correct = hits;
    return mean;
  }

  /// Exact gradient of the mean loss from a matching forward cache.
  void backward(std::span<const double> w, const RnnBatch& batch, const Cache& cache, std::span<double> grad) const {
    require_same_size(grad.size(), layout_.total, "rnn backward");
    std::fill(grad.begin(), grad.end(), 0.0);
    const auto H = static_cast<Eigen::Index>(arch_.hidden);
    const auto B = static_cast<Eigen::Index>(batch.width);
    const auto O = static_cast<Eigen::Index>(arch_.output_dim);
    const std::size_t T = batch.steps;
    const bool every_step = !batch.step_targets.empty();
    const double inv = 1.0 / static_cast<double>(cache.readouts * batch.width);
    const std::size_t top = arch_.layers - 1;

    const ConstMat Wout(w.data() + layout_.w_out, O, H);
    Mat dWout(grad.data() + layout_.w_out, O, H);
    Vec dbout(grad.data() + layout_.b_out, O);

    std::vector<Eigen::MatrixXd> carry(arch_.layers, Eigen::MatrixXd::Zero(H, B));
    std::vector<Eigen::MatrixXd> dH(arch_.layers);
    std::size_t readout_idx = cache.readouts;

    for (std::size_t t = T; t-- > 0;) {
      for (std::size_t j = 0; j < arch_.layers; ++j) dH[j] = carry[j];
      if (every_step || t + 1 == T) {
        Eigen::MatrixXd dlogits = cache.probs[--readout_idx];
        for (Eigen::Index c = 0; c < B; ++c) {
          const std::uint32_t target =
              every_step ? batch.step_targets[t][static_cast<std::size_t>(c)] : batch.final_targets[static_cast<std::size_t>(c)];
          dlogits(target, c) -= 1.0;
        }
        dlogits *= inv;
        dWout.noalias() += dlogits * cache.hidden[top][t].transpose();
        dbout += dlogits.rowwise().sum();
        dH[top].noalias() += Wout.transpose() * dlogits;
      }
      for (std::size_t j = arch_.layers; j-- > 0;) {
        const auto& L = layout_.layers[j];
        const ConstMat Win(w.data() + L.w_in, H, static_cast<Eigen::Index>(L.in_dim));
        const ConstMat Whh(w.data() + L.w_hh, H, H);
        Mat dWin(grad.data() + L.w_in, H, static_cast<Eigen::Index>(L.in_dim));
        Mat dWhh(grad.data() + L.w_hh, H, H);
        Vec db(grad.data() + L.bias, H);

        const Eigen::MatrixXd& h = cache.hidden[j][t];
        const Eigen::MatrixXd dZ = dH[j].cwiseProduct(derivative(h));
        db += dZ.rowwise().sum();
        if (j == 0) {
          if (arch_.one_hot_input) {
            for (Eigen::Index c = 0; c < B; ++c) dWin.col(batch.tokens[t][static_cast<std::size_t>(c)]) += dZ.col(c);
          } else {
            dWin.noalias() += dZ * batch.dense[t].transpose();
          }
        } else {
          dWin.noalias() += dZ * cache.hidden[j - 1][t].transpose();
          dH[j - 1].noalias() += Win.transpose() * dZ;
        }
        if (t > 0) {
          dWhh.noalias() += dZ * cache.hidden[j][t - 1].transpose();
          carry[j].noalias() = Whh.transpose() * dZ;
        }
      }
    }
  }

 private:
  Eigen::MatrixXd activate(const Eigen::MatrixXd& z) const {
    if (arch_.activation == Activation::Tanh) return z.array().tanh().matrix();
    return z.cwiseMax(0.0);
  }
  // Derivative expressed through the activation output h.
  Eigen::MatrixXd derivative(const Eigen::MatrixXd& h) const {
    if (arch_.activation == Activation::Tanh) return (1.0 - h.array().square()).matrix();
    return (h.array() > 0.0).cast<double>().matrix();
  }

  RnnArchitecture arch_;
  RnnLayout layout_;
};

/// Common plumbing for objectives backed by an RnnNetwork.
class RnnObjective : public StochasticObjective {
 public:
  explicit RnnObjective(RnnArchitecture arch) : net_(arch) {}

  std::size_t dimension() const override { return net_.num_params(); }

  double value(std::span<const double> w, Batch batch) const override {
    return net_.forward(w, make_batch(batch));
  }

  double value_and_gradient(std::span<const double> w, Batch batch, std::span<double> grad) const override {
    const RnnBatch rb = make_batch(batch);
    RnnNetwork::Cache cache;
    const double loss = net_.forward(w, rb, &cache);
    net_.backward(w, rb, cache, grad);
    return loss;
  }

  const RnnNetwork& network() const { return net_; }

 protected:
  virtual RnnBatch make_batch(Batch batch) const = 0;
  RnnNetwork net_;
};

/// Character (or word) language model: predicts every next symbol of each window.
class CharLmObjective final : public RnnObjective {
 public:
  CharLmObjective(std::size_t hidden, std::size_t layers, data::TokenSequences data,
                  Activation act = Activation::Tanh)
      : RnnObjective(RnnArchitecture{data.vocab_size, true, hidden, layers, data.vocab_size, act}),
        data_(std::move(data)) {
    if (data_.size() == 0) throw ConfigError("char LM: no sequences");
  }

  std::size_t num_examples() const override { return data_.size(); }
  const data::TokenSequences& dataset() const { return data_; }

 protected:
  RnnBatch make_batch(Batch batch) const override {
    if (batch.empty()) throw ConfigError("char LM: empty batch");
    RnnBatch rb;
    rb.steps = data_.seq_len;
    rb.width = batch.size();
    rb.tokens.assign(rb.steps, std::vector<std::uint32_t>(rb.width));
    rb.step_targets.assign(rb.steps, std::vector<std::uint32_t>(rb.width));
    for (std::size_t c = 0; c < batch.size(); ++c) {
      if (batch[c] >= data_.size()) throw ConfigError("char LM: example index out of range");
      const auto& in = data_.inputs[batch[c]];
      const auto& tg = data_.targets[batch[c]];
      for (std::size_t t = 0; t < rb.steps; ++t) {
        rb.tokens[t][c] = in[t];
        rb.step_targets[t][c] = tg[t];
      }
    }
    return rb;
  }

 private:
  data::TokenSequences data_;
};

/// Sequence classifier: pixels are fed one per step, the class is read from the final state.
class PixelSequenceObjective final : public RnnObjective {
 public:
  PixelSequenceObjective(std::size_t hidden, std::size_t layers, data::PixelSequences data,
                         Activation act = Activation::Tanh)
      : RnnObjective(RnnArchitecture{1, false, hidden, layers, data.num_classes, act}), data_(std::move(data)) {
    if (data_.size() == 0) throw ConfigError("pixel sequences: no examples");
  }

  std::size_t num_examples() const override { return data_.size(); }

  std::optional<double> accuracy(std::span<const double> w, Batch batch) const override {
    std::size_t hits = 0;
    net_.forward(w, make_batch(batch), nullptr, &hits);
    return static_cast<double>(hits) / static_cast<double>(batch.size());
  }

  const data::PixelSequences& dataset() const { return data_; }

 protected:
  RnnBatch make_batch(Batch batch) const override {
    if (batch.empty()) throw ConfigError("pixel sequences: empty batch");
    RnnBatch rb;
    rb.steps = data_.seq_len;
    rb.width = batch.size();
    rb.dense.assign(rb.steps, Eigen::MatrixXd(1, static_cast<Eigen::Index>(rb.width)));
    rb.final_targets.resize(rb.width);
    for (std::size_t c = 0; c < batch.size(); ++c) {
      if (batch[c] >= data_.size()) throw ConfigError("pixel sequences: example index out of range");
      const auto& px = data_.pixels[batch[c]];
      for (std::size_t t = 0; t < rb.steps; ++t) rb.dense[t](0, static_cast<Eigen::Index>(c)) = px[t];
      rb.final_targets[c] = data_.labels[batch[c]];
    }
    return rb;
  }

 private:
  data::PixelSequences data_;
};

}  // namespace adaqn::problems

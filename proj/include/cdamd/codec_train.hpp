#pragma once

#include <numeric>
#include <vector>

#include "cdamd/codec.hpp"

namespace cdamd {

struct TrainOptions {
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  // cosine decay to lr * min_lr_ratio across the run; L1 objectives need the
  // decay to settle
  double min_lr_ratio = 0.01;

  ad::LrSchedule schedule(int steps_per_epoch) const {
    return {lr, 0, epochs * steps_per_epoch, lr * min_lr_ratio};
  }
};

struct TrainLog {
  std::vector<double> epoch_loss;

  double first() const { return epoch_loss.empty() ? 0.0 : epoch_loss.front(); }
  double last() const { return epoch_loss.empty() ? 0.0 : epoch_loss.back(); }
};

namespace detail {

inline std::vector<int> iota_rows(int n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

template <class Scalar>
std::vector<MatF> snapshot(const ad::ParamStore<Scalar>& params) {
  std::vector<MatF> copy;
  for (std::size_t i = 0; i < params.size(); ++i)
    copy.push_back(params[i].value.template cast<float>());
  return copy;
}

template <class Scalar>
void restore(ad::ParamStore<Scalar>& params, const std::vector<MatF>& copy) {
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i].value = copy[i].template cast<Scalar>();
}

}  // namespace detail

// Reconstruction training for the deterministic AE: mean |x - dec(enc(x))|.
// On divergence the last finite-loss epoch's parameters are restored before
// the error is raised.
template <class Scalar>
TrainLog train_ae(AutoEncoder<Scalar>& model, const std::vector<Mat<Scalar>>& sequences,
                  const TrainOptions& opt) {
  if (sequences.empty()) throw TrainingError("train_ae: empty corpus");
  TrainLog log;
  if (opt.epochs <= 0) return log;
  const int steps_per_epoch = static_cast<int>(
      (sequences.size() + static_cast<std::size_t>(opt.batch_size) - 1) /
      static_cast<std::size_t>(opt.batch_size));
  ad::Adam<Scalar> adam(model.params(), opt.schedule(steps_per_epoch));
  Rng order_rng = Rng(opt.seed).stream("ae_train_order");
  auto last_good = detail::snapshot(model.params());
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    auto perm = order_rng.permutation(static_cast<int>(sequences.size()));
    double epoch_sum = 0.0;
    int batches = 0;
    for (std::size_t at = 0; at < perm.size(); at += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end = std::min(perm.size(), at + static_cast<std::size_t>(opt.batch_size));
      ad::Graph<Scalar> g;
      typename ad::Graph<Scalar>::Id loss = -1;
      for (std::size_t i = at; i < end; ++i) {
        const Mat<Scalar>& x = sequences[static_cast<std::size_t>(perm[i])];
        auto xin = g.constant(x);
        auto z = model.coder().build_encode(g, model.params(), xin);
        auto xhat = model.coder().build_decode(g, model.params(), z);
        auto cropped = g.rows(xhat, detail::iota_rows(static_cast<int>(x.rows())));
        auto li = g.mean_all(g.abs_op(g.sub(cropped, xin)));
        loss = (loss < 0) ? li : g.add(loss, li);
      }
      loss = g.scale(loss, Scalar(1) / static_cast<Scalar>(end - at));
      const double batch_loss = static_cast<double>(g.value(loss)(0, 0));
      if (!std::isfinite(batch_loss)) {
        detail::restore(model.params(), last_good);
        throw TrainingError("train_ae: loss diverged (NaN); last-good parameters restored");
      }
      model.params().zero_grads();
      g.backward(loss);
      adam.step();
      epoch_sum += batch_loss;
      ++batches;
    }
    log.epoch_loss.push_back(epoch_sum / std::max(batches, 1));
    last_good = detail::snapshot(model.params());
  }
  return log;
}

// RVQ-VAE coder with its residual codebook. Straight-through estimator in
// training: the quantized value is used forward, gradients pass to the
// encoder unchanged.
template <class Scalar>
class RvqVae {
 public:
  RvqVae(const AEConfig& cfg, int levels, int codebook_size, Scalar beta, std::uint64_t seed = 0)
      : coder_(cfg, params_, "rvq", Rng(seed).stream("rvq_init")),
        codebook_(Codebook<Scalar>::random_init(levels, codebook_size, cfg.latent_dim, beta, seed)) {}

  Mat<Scalar> encode(const Mat<Scalar>& x) {
    ad::Graph<Scalar> g;
    return g.value(coder_.build_encode(g, params_, g.constant(x)));
  }

  Mat<Scalar> decode(const Mat<Scalar>& z_quantized) {
    ad::Graph<Scalar> g;
    return g.value(coder_.build_decode(g, params_, g.constant(z_quantized)));
  }

  TokenSequence tokenize(const Mat<Scalar>& x) {
    return rvq_quantize(encode(x), codebook_).tokens;
  }

  const AEConfig& config() const { return coder_.config(); }
  ad::ParamStore<Scalar>& params() { return params_; }
  const ConvCoder<Scalar>& coder() const { return coder_; }
  Codebook<Scalar>& codebook() { return codebook_; }
  const Codebook<Scalar>& codebook() const { return codebook_; }

 private:
  ad::ParamStore<Scalar> params_;
  ConvCoder<Scalar> coder_;
  Codebook<Scalar> codebook_;
};

// Codebook learning: straight-through + commitment loss, EMA codeword
// updates (decay 0.99), dead codewords reassigned to a random encoder output
// after each epoch. Codeword 0 of every level stays pinned at zero.
template <class Scalar>
TrainLog train_rvq(RvqVae<Scalar>& model, const std::vector<Mat<Scalar>>& sequences,
                   const TrainOptions& opt, Scalar ema_decay = Scalar(0.99)) {
  if (sequences.empty()) throw TrainingError("train_rvq: empty corpus");
  TrainLog log;
  if (opt.epochs <= 0) return log;
  const int steps_per_epoch = static_cast<int>(
      (sequences.size() + static_cast<std::size_t>(opt.batch_size) - 1) /
      static_cast<std::size_t>(opt.batch_size));
  ad::Adam<Scalar> adam(model.params(), opt.schedule(steps_per_epoch));
  Rng order_rng = Rng(opt.seed).stream("rvq_train_order");
  Rng reinit_rng = Rng(opt.seed).stream("rvq_dead_reinit");
  auto& cb = model.codebook();
  const Scalar beta = cb.beta;

  std::vector<Vec<Scalar>> ema_count(static_cast<std::size_t>(cb.levels),
                                     Vec<Scalar>::Ones(cb.size));
  std::vector<Mat<Scalar>> ema_sum(static_cast<std::size_t>(cb.levels));
  for (int r = 0; r < cb.levels; ++r)
    ema_sum[static_cast<std::size_t>(r)] = cb.entries[static_cast<std::size_t>(r)];

  auto last_good = detail::snapshot(model.params());
  auto last_good_cb = cb.entries;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    auto perm = order_rng.permutation(static_cast<int>(sequences.size()));
    double epoch_sum = 0.0;
    int batches = 0;
    std::vector<std::vector<char>> used(static_cast<std::size_t>(cb.levels),
                                        std::vector<char>(static_cast<std::size_t>(cb.size), 0));
    Mat<Scalar> reservoir;  // recent encoder outputs for dead-code reinit
    for (std::size_t at = 0; at < perm.size(); at += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end = std::min(perm.size(), at + static_cast<std::size_t>(opt.batch_size));
      ad::Graph<Scalar> g;
      typename ad::Graph<Scalar>::Id loss = -1;
      std::vector<Vec<Scalar>> batch_count(static_cast<std::size_t>(cb.levels),
                                           Vec<Scalar>::Zero(cb.size));
      std::vector<Mat<Scalar>> batch_sum(static_cast<std::size_t>(cb.levels),
                                         Mat<Scalar>::Zero(cb.size, cb.dim));
      for (std::size_t i = at; i < end; ++i) {
        const Mat<Scalar>& x = sequences[static_cast<std::size_t>(perm[i])];
        auto xin = g.constant(x);
        auto z = model.coder().build_encode(g, model.params(), xin);
        // copy: later graph ops may reallocate node storage
        const Mat<Scalar> zv = g.value(z);
        auto q = rvq_quantize(zv, cb);
        // straight-through: forward uses the quantized value
        auto zq = g.add(z, g.constant(Mat<Scalar>(q.reconstruction - zv)));
        auto xhat = model.coder().build_decode(g, model.params(), zq);
        auto cropped = g.rows(xhat, detail::iota_rows(static_cast<int>(x.rows())));
        auto recon = g.mean_all(g.abs_op(g.sub(cropped, xin)));
        auto commit = g.scale(g.mean_all(g.square(g.sub(z, g.constant(q.reconstruction)))), beta);
        auto li = g.add(recon, commit);
        loss = (loss < 0) ? li : g.add(loss, li);
        // EMA statistics: level r clusters the residual entering it
        for (int r = 0; r < cb.levels; ++r) {
          for (int t = 0; t < q.tokens.length(); ++t) {
            const int k = q.tokens.indices(r, t);
            used[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] = 1;
            if (k == 0) continue;
            RowVec<Scalar> input_r =
                (r == 0) ? RowVec<Scalar>(zv.row(t))
                         : RowVec<Scalar>(q.residuals[static_cast<std::size_t>(r) - 1].row(t));
            batch_count[static_cast<std::size_t>(r)](k) += Scalar(1);
            batch_sum[static_cast<std::size_t>(r)].row(k) += input_r;
          }
        }
        reservoir = zv;
      }
      loss = g.scale(loss, Scalar(1) / static_cast<Scalar>(end - at));
      const double batch_loss = static_cast<double>(g.value(loss)(0, 0));
      if (!std::isfinite(batch_loss)) {
        detail::restore(model.params(), last_good);
        cb.entries = last_good_cb;
        throw TrainingError("train_rvq: loss diverged (NaN); last-good parameters restored");
      }
      model.params().zero_grads();
      g.backward(loss);
      adam.step();
      for (int r = 0; r < cb.levels; ++r) {
        auto& count = ema_count[static_cast<std::size_t>(r)];
        auto& sums = ema_sum[static_cast<std::size_t>(r)];
        count = ema_decay * count + (Scalar(1) - ema_decay) * batch_count[static_cast<std::size_t>(r)];
        sums = ema_decay * sums + (Scalar(1) - ema_decay) * batch_sum[static_cast<std::size_t>(r)];
        for (int k = 1; k < cb.size; ++k)
          cb.entries[static_cast<std::size_t>(r)].row(k) =
              sums.row(k) / (count(k) + Scalar(1e-5));
      }
      epoch_sum += batch_loss;
      ++batches;
    }
    // dead-code reinit from the reservoir of encoder outputs
    for (int r = 0; r < cb.levels; ++r) {
      for (int k = 1; k < cb.size; ++k) {
        if (used[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] || reservoir.rows() == 0)
          continue;
        const int row = reinit_rng.uniform_int(static_cast<int>(reservoir.rows()));
        cb.entries[static_cast<std::size_t>(r)].row(k) =
            reservoir.row(row) +
            reinit_rng.normal_matrix<Scalar>(1, cb.dim, Scalar(0.01)).row(0);
        ema_count[static_cast<std::size_t>(r)](k) = Scalar(1);
        ema_sum[static_cast<std::size_t>(r)].row(k) =
            cb.entries[static_cast<std::size_t>(r)].row(k);
      }
    }
    log.epoch_loss.push_back(epoch_sum / std::max(batches, 1));
    last_good = detail::snapshot(model.params());
    last_good_cb = cb.entries;
  }
  return log;
}

}  // namespace cdamd

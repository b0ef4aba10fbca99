#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cdamd/ad/graph.hpp"
#include "cdamd/errors.hpp"
#include "cdamd/rng.hpp"
#include "cdamd/types.hpp"

namespace cdamd {

enum class DiffusionMode { Noise, Velocity };

DiffusionMode diffusion_mode_from_string(const std::string& s);
std::string to_string(DiffusionMode m);

// Corruption schedule. Velocity mode lives on the continuous linear path
// x_t = (1-t) x0 + t eps; noise mode uses a discrete linear-beta chain with
// cumulative alpha-bar feeding the ancestral sampler.
struct DiffusionSchedule {
  DiffusionMode mode = DiffusionMode::Velocity;
  int steps = 50;
  VecD beta;       // noise mode, index s-1 holds beta_s
  VecD alpha;      // 1 - beta
  VecD alpha_bar;  // cumulative product

  static DiffusionSchedule velocity(int steps) {
    if (steps < 1) throw ConfigError("schedule: steps must be >= 1");
    DiffusionSchedule sch;
    sch.mode = DiffusionMode::Velocity;
    sch.steps = steps;
    return sch;
  }

  // Linear beta reference chain of 1000 steps, subsampled to `steps` by
  // striding the cumulative alpha-bar sequence. The subsampling keeps the
  // terminal corruption near-total at any step count, so the ancestral
  // sampler can start from a standard normal.
  static DiffusionSchedule noise(int steps, double beta_min = 1e-4, double beta_max = 0.02) {
    if (steps < 1) throw ConfigError("schedule: steps must be >= 1");
    DiffusionSchedule sch;
    sch.mode = DiffusionMode::Noise;
    sch.steps = steps;
    sch.beta.resize(steps);
    sch.alpha.resize(steps);
    sch.alpha_bar.resize(steps);
    const int ref_steps = std::max(steps, 1000);
    VecD ref_bar(ref_steps);
    double prod = 1.0;
    for (int s = 0; s < ref_steps; ++s) {
      const double b = ref_steps == 1
                           ? beta_max
                           : beta_min + (beta_max - beta_min) * s / (ref_steps - 1.0);
      prod *= 1.0 - b;
      ref_bar(s) = prod;
    }
    double prev_bar = 1.0;
    for (int s = 0; s < steps; ++s) {
      const int pick = static_cast<int>((static_cast<long long>(s) + 1) * ref_steps / steps) - 1;
      sch.alpha_bar(s) = ref_bar(pick);
      sch.alpha(s) = sch.alpha_bar(s) / prev_bar;
      sch.beta(s) = 1.0 - sch.alpha(s);
      prev_bar = sch.alpha_bar(s);
    }
    for (int s = 1; s < steps; ++s)
      if (sch.alpha_bar(s) >= sch.alpha_bar(s - 1))
        throw NumericError("schedule: alpha_bar must be strictly decreasing");
    return sch;
  }

  double dt() const { return 1.0 / steps; }
};

// x_t = (1-t) x0 + t eps on the continuous path.
template <class Scalar>
Mat<Scalar> forward_diffuse(const Mat<Scalar>& x0, const Mat<Scalar>& eps, Scalar t) {
  if (t < Scalar(0) || t > Scalar(1)) throw ValidationError("forward_diffuse: t outside [0,1]");
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols())
    throw DimensionError("forward_diffuse: shape mismatch");
  return (Scalar(1) - t) * x0 + t * eps;
}

// Discrete corruption x_s = sqrt(abar_s) x0 + sqrt(1 - abar_s) eps, s in [1, S].
template <class Scalar>
Mat<Scalar> forward_diffuse_discrete(const Mat<Scalar>& x0, const Mat<Scalar>& eps, int s,
                                     const DiffusionSchedule& sch) {
  if (sch.mode != DiffusionMode::Noise) throw ConfigError("discrete corruption needs noise mode");
  if (s < 1 || s > sch.steps) throw ValidationError("forward_diffuse_discrete: step out of range");
  const auto ab = static_cast<Scalar>(sch.alpha_bar(s - 1));
  return std::sqrt(ab) * x0 + std::sqrt(Scalar(1) - ab) * eps;
}

struct DiffMLPConfig {
  int blocks = 3;
  int width = 64;
  int latent_dim = 8;
  int cond_dim = 64;
  int time_features = 32;  // sinusoidal features, must be even

  void validate() const {
    if (blocks < 1) throw ConfigError("diffmlp: blocks must be >= 1");
    if (width < 1 || latent_dim < 1 || cond_dim < 1) throw ConfigError("diffmlp: bad sizes");
    if (time_features % 2 != 0) throw ConfigError("diffmlp: time_features must be even");
  }
};

// Sinusoidal features of a per-row timestep in [0,1]; rows x F constant.
template <class Scalar>
Mat<Scalar> timestep_features(const VecD& t, int features) {
  Mat<Scalar> out(t.size(), features);
  const int half = features / 2;
  for (Eigen::Index r = 0; r < t.size(); ++r) {
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(std::log(1000.0) * k / std::max(half - 1, 1));
      out(r, 2 * k) = static_cast<Scalar>(std::sin(t(r) * freq));
      out(r, 2 * k + 1) = static_cast<Scalar>(std::cos(t(r) * freq));
    }
  }
  return out;
}

// Residual MLP denoiser over single latent vectors, conditioned on a
// per-position vector via feature-wise scale and shift. One instance serves
// both parameterizations; the trained target decides the meaning of its
// output.
template <class Scalar>
class DiffMLP {
 public:
  using Graph = ad::Graph<Scalar>;
  using Id = typename Graph::Id;

  DiffMLP(const DiffMLPConfig& cfg, ad::ParamStore<Scalar>& params, const std::string& prefix,
          Rng init_rng)
      : cfg_(cfg), prefix_(prefix) {
    cfg.validate();
    const int w = cfg.width;
    make_linear(params, init_rng, prefix + ".in", cfg.latent_dim, w);
    make_linear(params, init_rng, prefix + ".time", cfg.time_features, w);
    make_linear(params, init_rng, prefix + ".cond", cfg.cond_dim, w);
    for (int b = 0; b < cfg.blocks; ++b) {
      const std::string base = prefix + ".block" + std::to_string(b);
      make_linear(params, init_rng, base + ".mod", w, 2 * w, Scalar(0.1));  // gentle modulation start
      make_linear(params, init_rng, base + ".fc1", w, w);
      make_linear(params, init_rng, base + ".fc2", w, w);
      params.create(base + ".ln.g", 1, w).value.setOnes();
      params.create(base + ".ln.b", 1, w);
    }
    params.create(prefix + ".out.ln.g", 1, w).value.setOnes();
    params.create(prefix + ".out.ln.b", 1, w);
    make_linear(params, init_rng, prefix + ".out", w, cfg.latent_dim);
  }

  // x_rows: B x d corrupted latents (constant), cond: B x cond_dim node,
  // t: per-row timestep in [0,1]. Returns B x d prediction.
  Id build_forward(Graph& g, ad::ParamStore<Scalar>& params, Id x_rows, Id cond,
                   const VecD& t) const {
    if (g.value(x_rows).cols() != cfg_.latent_dim) throw DimensionError("diffmlp: latent dim");
    if (g.value(cond).cols() != cfg_.cond_dim) throw DimensionError("diffmlp: cond dim");
    if (g.value(cond).rows() != g.value(x_rows).rows() || t.size() != g.value(x_rows).rows())
      throw DimensionError("diffmlp: row count mismatch");
    Id h = linear(g, params, prefix_ + ".in", x_rows);
    Id tf = g.constant(timestep_features<Scalar>(t, cfg_.time_features));
    Id c = g.add(linear(g, params, prefix_ + ".time", tf), linear(g, params, prefix_ + ".cond", cond));
    Id cact = g.silu(c);
    const int w = cfg_.width;
    for (int b = 0; b < cfg_.blocks; ++b) {
      const std::string base = prefix_ + ".block" + std::to_string(b);
      Id mod = linear(g, params, base + ".mod", cact);
      Id scale_m = g.cols(mod, 0, w);
      Id shift = g.cols(mod, w, w);
      Id u = g.layer_norm(h, g.param(params.at(base + ".ln.g")), g.param(params.at(base + ".ln.b")));
      u = g.add(g.hadamard(u, g.add_scalar(scale_m, Scalar(1))), shift);
      u = linear(g, params, base + ".fc2", g.silu(linear(g, params, base + ".fc1", u)));
      h = g.add(h, u);
    }
    Id out = g.layer_norm(h, g.param(params.at(prefix_ + ".out.ln.g")),
                          g.param(params.at(prefix_ + ".out.ln.b")));
    return linear(g, params, prefix_ + ".out", out);
  }

  Mat<Scalar> forward(ad::ParamStore<Scalar>& params, const Mat<Scalar>& x, const Mat<Scalar>& cond,
                      const VecD& t) const {
    Graph g;
    return g.value(build_forward(g, params, g.constant(x), g.constant(cond), t));
  }

  const DiffMLPConfig& config() const { return cfg_; }

 private:
  static void make_linear(ad::ParamStore<Scalar>& params, Rng& rng, const std::string& name,
                          int in, int out, Scalar gain = Scalar(1)) {
    auto& w = params.create(name + ".w", in, out);
    Rng r = rng.stream(name);
    r.fill_normal(w.value, gain / std::sqrt(static_cast<Scalar>(in)));
    params.create(name + ".b", 1, out);
  }

  Id linear(Graph& g, ad::ParamStore<Scalar>& params, const std::string& name, Id x) const {
    return g.add_rowvec(g.matmul(x, g.param(params.at(name + ".w"))),
                        g.param(params.at(name + ".b")));
  }

  DiffMLPConfig cfg_;
  std::string prefix_;
};

// Per-row draws for one loss evaluation; kept explicit so losses are
// deterministic functions of (inputs, draws).
struct DiffusionDraw {
  VecD t;                       // continuous time per row (velocity mode)
  std::vector<int> s;           // discrete step per row (noise mode)
  MatD eps;                     // B x d standard normal
};

inline DiffusionDraw draw_diffusion(int rows, int dim, const DiffusionSchedule& sch, Rng& rng) {
  DiffusionDraw d;
  d.eps.resize(rows, dim);
  d.t.resize(rows);
  d.s.resize(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    if (sch.mode == DiffusionMode::Noise) {
      d.s[static_cast<std::size_t>(r)] = 1 + rng.uniform_int(sch.steps);
      d.t(r) = static_cast<double>(d.s[static_cast<std::size_t>(r)]) / sch.steps;
    } else {
      d.t(r) = rng.uniform();
    }
    for (int c = 0; c < dim; ++c) d.eps(r, c) = rng.normal();
  }
  return d;
}

// |eps - eps_theta(x_s | s, cond)|^2 averaged over rows.
template <class Scalar>
typename ad::Graph<Scalar>::Id build_loss_noise(ad::Graph<Scalar>& g, const DiffMLP<Scalar>& model,
                                                ad::ParamStore<Scalar>& params,
                                                const Mat<Scalar>& x0,
                                                typename ad::Graph<Scalar>::Id cond,
                                                const DiffusionDraw& draw,
                                                const DiffusionSchedule& sch) {
  if (sch.mode != DiffusionMode::Noise) throw ConfigError("loss_noise: schedule not in noise mode");
  const Eigen::Index B = x0.rows();
  Mat<Scalar> xs(B, x0.cols());
  for (Eigen::Index r = 0; r < B; ++r) {
    const double ab = sch.alpha_bar(draw.s[static_cast<std::size_t>(r)] - 1);
    xs.row(r) = static_cast<Scalar>(std::sqrt(ab)) * x0.row(r) +
                static_cast<Scalar>(std::sqrt(1.0 - ab)) * draw.eps.row(r).template cast<Scalar>();
  }
  auto pred = model.build_forward(g, params, g.constant(xs), cond, draw.t);
  auto target = g.constant(draw.eps.template cast<Scalar>());
  return g.mean_row_sq_norm(g.sub(target, pred));
}

// |v_theta(x_t | t, cond) - (eps - x0)|^2 averaged over rows; the linear path
// gives d(alpha)/dt = -1 and d(sigma)/dt = 1.
template <class Scalar>
typename ad::Graph<Scalar>::Id build_loss_velocity(ad::Graph<Scalar>& g,
                                                   const DiffMLP<Scalar>& model,
                                                   ad::ParamStore<Scalar>& params,
                                                   const Mat<Scalar>& x0,
                                                   typename ad::Graph<Scalar>::Id cond,
                                                   const DiffusionDraw& draw,
                                                   const DiffusionSchedule& sch) {
  if (sch.mode != DiffusionMode::Velocity)
    throw ConfigError("loss_velocity: schedule not in velocity mode");
  const Eigen::Index B = x0.rows();
  Mat<Scalar> xt(B, x0.cols());
  Mat<Scalar> target(B, x0.cols());
  for (Eigen::Index r = 0; r < B; ++r) {
    const auto t = static_cast<Scalar>(draw.t(r));
    const Mat<Scalar> eps_row = draw.eps.row(r).template cast<Scalar>();
    xt.row(r) = (Scalar(1) - t) * x0.row(r) + t * eps_row;
    target.row(r) = eps_row - x0.row(r);
  }
  auto pred = model.build_forward(g, params, g.constant(xt), cond, draw.t);
  return g.mean_row_sq_norm(g.sub(pred, g.constant(target)));
}

// Ancestral sampler from a given x_S; prediction_fn(x, s, t) returns the
// noise estimate for one row. The s=1 step adds no noise.
template <class Scalar, class PredFn>
RowVec<Scalar> ddpm_sample_chain_from(PredFn&& prediction_fn, const DiffusionSchedule& sch,
                                      const RowVec<Scalar>& x_init, Rng& rng) {
  if (sch.mode != DiffusionMode::Noise) throw ConfigError("ddpm sampler needs noise mode");
  RowVec<Scalar> x = x_init;
  const int dim = static_cast<int>(x.cols());
  for (int s = sch.steps; s >= 1; --s) {
    const double a = sch.alpha(s - 1);
    const double ab = sch.alpha_bar(s - 1);
    const double t = static_cast<double>(s) / sch.steps;
    RowVec<Scalar> eps_hat = prediction_fn(x, s, t);
    x = ((x - static_cast<Scalar>((1.0 - a) / std::sqrt(1.0 - ab)) * eps_hat) /
         static_cast<Scalar>(std::sqrt(a)))
            .eval();
    if (s > 1) {
      const double ab_prev = sch.alpha_bar(s - 2);
      const double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * sch.beta(s - 1));
      for (int c = 0; c < dim; ++c)
        x(c) += static_cast<Scalar>(sigma * rng.normal());
    }
  }
  return x;
}

// Ancestral sampler starting from standard normal noise.
template <class Scalar, class PredFn>
RowVec<Scalar> ddpm_sample_chain(PredFn&& prediction_fn, const DiffusionSchedule& sch, int dim,
                                 Rng& rng) {
  RowVec<Scalar> x(dim);
  for (int c = 0; c < dim; ++c) x(c) = static_cast<Scalar>(rng.normal());
  return ddpm_sample_chain_from<Scalar>(std::forward<PredFn>(prediction_fn), sch, x, rng);
}

// Euler integration of dx/dt = v from t=1 down to t=0. The update is
// x <- x - dt * v(x, t); literal_sign flips it to the printed form for
// comparison runs.
template <class Scalar, class VelFn>
RowVec<Scalar> ode_sample_chain(VelFn&& velocity_fn, const DiffusionSchedule& sch,
                                const RowVec<Scalar>& x_init, bool literal_sign = false) {
  if (sch.mode != DiffusionMode::Velocity) throw ConfigError("ode sampler needs velocity mode");
  RowVec<Scalar> x = x_init;
  const auto dt = static_cast<Scalar>(sch.dt());
  for (int k = 0; k < sch.steps; ++k) {
    const double t = 1.0 - static_cast<double>(k) * sch.dt();
    RowVec<Scalar> v = velocity_fn(x, t);
    if (literal_sign)
      x += dt * v;
    else
      x -= dt * v;
  }
  return x;
}

}  // namespace cdamd

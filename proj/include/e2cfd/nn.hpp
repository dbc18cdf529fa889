#ifndef E2CFD_NN_HPP_
#define E2CFD_NN_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

// Minimal neural toolkit: tanh MLPs with analytic backpropagation, a
// diagonal-Gaussian policy head and Adam.
namespace e2cfd::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Fully connected network. Hidden layers use tanh, the output is linear.
// All parameters live in one flat vector (per layer: weights column-major
// n_out x n_in, then biases) so optimizers work on a single array.
class Mlp {
 public:
  Mlp() = default;
  // Zero-initialized network. Throws std::invalid_argument for fewer than two
  // layer sizes or a non-positive size.
  explicit Mlp(std::vector<int> layer_sizes);

  // Uniform Glorot initialization; the last layer is scaled by `output_gain`.
  void init(std::mt19937_64& rng, double output_gain = 1.0);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(params_.size());
  }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  Eigen::Map<Matrix> weight(std::size_t layer);
  Eigen::Map<const Matrix> weight(std::size_t layer) const;
  Eigen::Map<Vector> bias(std::size_t layer);
  Eigen::Map<const Vector> bias(std::size_t layer) const;

  // Activations of every layer for a batch (one column per sample);
  // activations[0] is the input.
  struct Cache {
    std::vector<Matrix> activations;
  };

  Vector forward(const Vector& input) const;
  Matrix forward(const Matrix& batch, Cache* cache = nullptr) const;

  // Gradient (flat, aligned with params()) of sum_j <output_grad_j, out_j>.
  Vector backward(const Vector& input, const Vector& output_grad) const;
  Vector backward(const Cache& cache, const Matrix& output_grad) const;

 private:
  std::size_t offset(std::size_t layer) const { return offsets_[layer]; }

  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  Vector params_;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// pi(a|s) = N(mean_net(s), diag(exp(log_std))^2).
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(Mlp mean_net, Vector log_std);

  static GaussianPolicy make(int obs_dim, int action_dim,
                             const std::vector<int>& hidden,
                             std::mt19937_64& rng, double initial_log_std = -0.5);

  Mlp& mean_net() { return mean_net_; }
  const Mlp& mean_net() const { return mean_net_; }
  Vector& log_std() { return log_std_; }
  const Vector& log_std() const { return log_std_; }
  void clamp_log_std();

  Vector mean(const Vector& obs) const { return mean_net_.forward(obs); }

  struct Sample {
    Vector action;  // unclamped
    double log_prob = 0.0;
  };
  Sample sample(const Vector& obs, std::mt19937_64& rng) const;

  double log_prob(const Vector& mean, const Vector& action) const;
  double entropy() const;

 private:
  Mlp mean_net_;
  Vector log_std_;
};

struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Vector m;
  Vector v;
  std::int64_t t = 0;

  explicit AdamState(std::size_t n = 0, double lr = 3e-4);
};

// In-place bias-corrected Adam descent step. Throws std::invalid_argument on
// shape mismatch.
void adam_step(AdamState& state, Vector& params, const Vector& grads);

// Little-endian checkpoint: "E2CFDPOL", u32 version, u32 layer count, u32
// sizes, u32 log_std length, then float64 parameters and log_std.
void save_policy(const GaussianPolicy& policy, const std::filesystem::path& path);
GaussianPolicy load_policy(const std::filesystem::path& path);

}  // namespace e2cfd::nn

#endif  // E2CFD_NN_HPP_

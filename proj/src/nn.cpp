#include "e2cfd/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

namespace e2cfd::nn {

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) {
    throw std::invalid_argument("Mlp needs at least input and output sizes");
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l < sizes_.size(); ++l) {
    if (sizes_[l] <= 0) throw std::invalid_argument("Mlp layer size must be > 0");
    if (l + 1 < sizes_.size()) {
      offsets_.push_back(total);
      total += static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1] +
               static_cast<std::size_t>(sizes_[l + 1]);
    }
  }
  params_ = Vector::Zero(static_cast<Eigen::Index>(total));
}

void Mlp::init(std::mt19937_64& rng, double output_gain) {
  params_.setZero();
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
    const double gain = l + 1 == num_layers() ? output_gain : 1.0;
    std::uniform_real_distribution<double> u(-limit, limit);
    auto w = weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = gain * u(rng);
    }
  }
}

Eigen::Map<Matrix> Mlp::weight(std::size_t l) {
  return {params_.data() + offset(l), sizes_[l + 1], sizes_[l]};
}
Eigen::Map<const Matrix> Mlp::weight(std::size_t l) const {
  return {params_.data() + offset(l), sizes_[l + 1], sizes_[l]};
}
Eigen::Map<Vector> Mlp::bias(std::size_t l) {
  return {params_.data() + offset(l) +
              static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1],
          sizes_[l + 1]};
}
Eigen::Map<const Vector> Mlp::bias(std::size_t l) const {
  return {params_.data() + offset(l) +
              static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1],
          sizes_[l + 1]};
}

Vector Mlp::forward(const Vector& input) const {
  if (input.size() != input_size()) {
    throw std::invalid_argument("Mlp::forward: expected input of size " +
                                std::to_string(input_size()) + ", got " +
                                std::to_string(input.size()));
  }
  Vector h = input;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Vector z = weight(l) * h + bias(l);
    h = l + 1 < num_layers() ? Vector(z.array().tanh()) : z;
  }
  return h;
}

Matrix Mlp::forward(const Matrix& batch, Cache* cache) const {
  if (batch.rows() != input_size()) {
    throw std::invalid_argument("Mlp::forward: batch rows must equal input size");
  }
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(batch);
  }
  Matrix h = batch;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Matrix z = weight(l) * h;
    z.colwise() += bias(l);
    if (l + 1 < num_layers()) z = z.array().tanh();
    h = std::move(z);
    if (cache) cache->activations.push_back(h);
  }
  return h;
}

Vector Mlp::backward(const Vector& input, const Vector& output_grad) const {
  if (output_grad.size() != output_size()) {
    throw std::invalid_argument("Mlp::backward: expected output_grad of size " +
                                std::to_string(output_size()));
  }
  Cache cache;
  forward(Matrix(input), &cache);
  return backward(cache, Matrix(output_grad));
}

Vector Mlp::backward(const Cache& cache, const Matrix& output_grad) const {
  if (cache.activations.size() != sizes_.size()) {
    throw std::invalid_argument("Mlp::backward: cache does not match network");
  }
  if (output_grad.rows() != output_size() ||
      output_grad.cols() != cache.activations.back().cols()) {
    throw std::invalid_argument("Mlp::backward: output_grad shape mismatch");
  }
  Vector grads = Vector::Zero(params_.size());
  Matrix delta = output_grad;  // dL/dz for the current layer
  for (std::size_t l = num_layers(); l-- > 0;) {
    const Matrix& in = cache.activations[l];
    Eigen::Map<Matrix> gw(grads.data() + offset(l), sizes_[l + 1], sizes_[l]);
    Eigen::Map<Vector> gb(grads.data() + offset(l) +
                              static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1],
                          sizes_[l + 1]);
    gw.noalias() = delta * in.transpose();
    gb = delta.rowwise().sum();
    if (l > 0) {
      Matrix upstream = weight(l).transpose() * delta;
      // tanh'(z) = 1 - tanh(z)^2, and activations[l] holds tanh(z).
      delta = upstream.array() * (1.0 - in.array().square());
    }
  }
  return grads;
}

GaussianPolicy::GaussianPolicy(Mlp mean_net, Vector log_std)
    : mean_net_(std::move(mean_net)), log_std_(std::move(log_std)) {
  if (log_std_.size() != mean_net_.output_size()) {
    throw std::invalid_argument("log_std length must equal the action dimension");
  }
  clamp_log_std();
}

GaussianPolicy GaussianPolicy::make(int obs_dim, int action_dim,
                                    const std::vector<int>& hidden,
                                    std::mt19937_64& rng,
                                    double initial_log_std) {
  std::vector<int> sizes{obs_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(action_dim);
  Mlp net(sizes);
  net.init(rng, 0.01);
  return GaussianPolicy(std::move(net), Vector::Constant(action_dim, initial_log_std));
}

void GaussianPolicy::clamp_log_std() {
  log_std_ = log_std_.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

GaussianPolicy::Sample GaussianPolicy::sample(const Vector& obs,
                                              std::mt19937_64& rng) const {
  const Vector mu = mean(obs);
  std::normal_distribution<double> normal(0.0, 1.0);
  Sample s;
  s.action.resize(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    s.action[i] = mu[i] + std::exp(log_std_[i]) * normal(rng);
  }
  s.log_prob = log_prob(mu, s.action);
  return s;
}

double GaussianPolicy::log_prob(const Vector& mean, const Vector& action) const {
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  double lp = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double z = (action[i] - mean[i]) / std::exp(log_std_[i]);
    lp += -0.5 * z * z - log_std_[i] - kHalfLog2Pi;
  }
  return lp;
}

double GaussianPolicy::entropy() const {
  const double per_dim = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  return log_std_.sum() + per_dim * static_cast<double>(log_std_.size());
}

AdamState::AdamState(std::size_t n, double learning_rate)
    : lr(learning_rate),
      m(Vector::Zero(static_cast<Eigen::Index>(n))),
      v(Vector::Zero(static_cast<Eigen::Index>(n))) {}

void adam_step(AdamState& s, Vector& params, const Vector& grads) {
  if (params.size() != grads.size() || s.m.size() != params.size() ||
      s.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  ++s.t;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  params.array() -=
      s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

namespace {

constexpr char kMagic[8] = {'E', '2', 'C', 'F', 'D', 'P', 'O', 'L'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, sizeof v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("checkpoint truncated");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw std::runtime_error("checkpoint truncated");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &v, sizeof d);
  return d;
}

}  // namespace

void save_policy(const GaussianPolicy& policy, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic);
  put_u32(os, kCheckpointVersion);
  const auto& sizes = policy.mean_net().layer_sizes();
  put_u32(os, static_cast<std::uint32_t>(sizes.size()));
  for (int s : sizes) put_u32(os, static_cast<std::uint32_t>(s));
  put_u32(os, static_cast<std::uint32_t>(policy.log_std().size()));
  const auto& p = policy.mean_net().params();
  for (Eigen::Index i = 0; i < p.size(); ++i) put_f64(os, p[i]);
  for (Eigen::Index i = 0; i < policy.log_std().size(); ++i) {
    put_f64(os, policy.log_std()[i]);
  }
}

GaussianPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a policy checkpoint: " + path.string());
  }
  if (get_u32(is) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  const std::uint32_t n = get_u32(is);
  if (n < 2 || n > 64) throw std::runtime_error("corrupt checkpoint header");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t s = get_u32(is);
    if (s == 0 || s > (1u << 16)) throw std::runtime_error("corrupt layer size");
    sizes.push_back(static_cast<int>(s));
  }
  Mlp net(sizes);
  const std::uint32_t log_std_len = get_u32(is);
  if (static_cast<int>(log_std_len) != sizes.back()) {
    throw std::runtime_error("checkpoint log_std length mismatch");
  }
  for (Eigen::Index i = 0; i < net.params().size(); ++i) {
    net.params()[i] = get_f64(is);
  }
  Vector log_std(log_std_len);
  for (Eigen::Index i = 0; i < log_std.size(); ++i) log_std[i] = get_f64(is);
  return GaussianPolicy(std::move(net), std::move(log_std));
}

}  // namespace e2cfd::nn

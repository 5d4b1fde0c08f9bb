#include "splatdrive/ntdnet.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace splatdrive {

Vec6 delta_pose(const Se3& novel, const Se3& original, double length) {
  if (!(length > 0.0)) throw InvalidInput("delta-pose length must be positive");
  Vec6 out;
  out.head<3>() = (novel.translation - original.translation) / length;
  const Eigen::AngleAxisd aa(original.rotation.transpose() * novel.rotation);
  out.tail<3>() = aa.axis() * aa.angle() / length;
  return out;
}

std::vector<double> positional_encode(std::span<const double> v, int bands) {
  if (bands < 0) throw InvalidInput("positional encoding bands must be >= 0");
  std::vector<double> out;
  out.reserve(v.size() * static_cast<std::size_t>(1 + 2 * bands));
  for (double x : v) {
    out.push_back(x);
    double freq = std::numbers::pi;
    for (int k = 0; k < bands; ++k, freq *= 2.0) {
      out.push_back(std::sin(freq * x));
      out.push_back(std::cos(freq * x));
    }
  }
  return out;
}

DeltaGaussian delta_from_column(const Matrix& deltas, Eigen::Index col) {
  DeltaGaussian d;
  d.d_position = deltas.block<3, 1>(0, col);
  d.d_rotation = deltas.block<4, 1>(3, col);
  d.d_log_scale = deltas.block<3, 1>(7, col);
  d.d_opacity_logit = deltas(10, col);
  return d;
}

// ── Parameters ──────────────────────────────────────────────────

NtdParams NtdParams::zeros_like() const {
  NtdParams z = *this;
  for (auto& [name, m] : z.tensors()) m->setZero();
  return z;
}

std::vector<std::pair<std::string, Matrix*>> NtdParams::tensors() {
  std::vector<std::pair<std::string, Matrix*>> list;
  auto add = [&](const std::string& prefix, std::vector<LinearLayer>& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      list.emplace_back(prefix + "." + std::to_string(i) + ".weight", &layers[i].weight);
      list.emplace_back(prefix + "." + std::to_string(i) + ".bias", &layers[i].bias);
    }
  };
  add("pose", pose);
  add("field", field);
  list.emplace_back("out.weight", &out.weight);
  list.emplace_back("out.bias", &out.bias);
  return list;
}

std::vector<std::pair<std::string, const Matrix*>> NtdParams::tensors() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, m] : const_cast<NtdParams*>(this)->tensors()) out.emplace_back(name, m);
  return out;
}

std::size_t NtdParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

// ── Network ─────────────────────────────────────────────────────

namespace {

std::vector<LinearLayer> make_mlp(int in, int hidden, int layers, std::mt19937_64& rng) {
  std::vector<LinearLayer> mlp;
  for (int l = 0; l < layers; ++l) {
    const int fan_in = l == 0 ? in : hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    LinearLayer layer;
    layer.weight.resize(hidden, fan_in);
    layer.bias.resize(hidden, 1);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias.data()[i] = u(rng);
    mlp.push_back(std::move(layer));
  }
  return mlp;
}

// Runs a ReLU MLP on the columns of `x`, keeping every activation.
void mlp_forward(const std::vector<LinearLayer>& mlp, const Matrix& x, std::vector<Matrix>& acts) {
  acts.resize(mlp.size());
  const Matrix* in = &x;
  for (std::size_t l = 0; l < mlp.size(); ++l) {
    acts[l].noalias() = mlp[l].weight * *in;
    acts[l].colwise() += mlp[l].bias.col(0);
    acts[l] = acts[l].cwiseMax(0.0);
    in = &acts[l];
  }
}

// Back-propagates `delta` (gradient w.r.t. the last activation) and returns
// the gradient w.r.t. the MLP input.
Matrix mlp_backward(const std::vector<LinearLayer>& mlp, const Matrix& x, const std::vector<Matrix>& acts,
                    Matrix delta, std::vector<LinearLayer>& grads, bool need_input_grad) {
  for (std::size_t l = mlp.size(); l-- > 0;) {
    delta = delta.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
    const Matrix& in = l == 0 ? x : acts[l - 1];
    grads[l].weight.noalias() += delta * in.transpose();
    grads[l].bias += delta.rowwise().sum();
    if (l > 0 || need_input_grad) delta = mlp[l].weight.transpose() * delta;
  }
  return delta;
}

}  // namespace

NtdNet::NtdNet(const NtdConfig& cfg, const Aabb& bounds, std::mt19937_64& rng) : cfg_(cfg), bounds_(bounds) {
  if (cfg.layers < 1 || cfg.hidden < 1 || cfg.pe_bands_x < 0 || cfg.pe_bands_t < 0) {
    throw ConfigError("NTDNet needs layers >= 1, hidden >= 1 and non-negative encoding bands");
  }
  params_.pose = make_mlp(6, cfg.hidden, cfg.layers, rng);
  params_.field = make_mlp(field_input_width(), cfg.hidden, cfg.layers, rng);
  params_.out.weight = Matrix::Zero(kDeltaWidth, cfg.hidden);
  params_.out.bias = Matrix::Zero(kDeltaWidth, 1);
  validate();
}

NtdNet::NtdNet(const NtdConfig& cfg, const Aabb& bounds, NtdParams params)
    : cfg_(cfg), bounds_(bounds), params_(std::move(params)) {
  validate();
}

void NtdNet::validate() const {
  if (!(cfg_.length > 0.0)) throw ConfigError("NTDNet length L must be positive");
  if (!((bounds_.hi.array() > bounds_.lo.array()).all())) {
    throw ConfigError("NTDNet position bounds must have positive extent");
  }
  auto check_chain = [&](const std::vector<LinearLayer>& mlp, int in, const char* name) {
    if (static_cast<int>(mlp.size()) != cfg_.layers) {
      throw ConfigError(std::string(name) + " MLP has " + std::to_string(mlp.size()) + " layers, expected " +
                        std::to_string(cfg_.layers));
    }
    for (std::size_t l = 0; l < mlp.size(); ++l) {
      const int want_in = l == 0 ? in : cfg_.hidden;
      if (mlp[l].weight.rows() != cfg_.hidden || mlp[l].weight.cols() != want_in ||
          mlp[l].bias.rows() != cfg_.hidden || mlp[l].bias.cols() != 1) {
        throw ConfigError(std::string(name) + " layer " + std::to_string(l) + " has inconsistent shape");
      }
    }
  };
  check_chain(params_.pose, 6, "pose");
  check_chain(params_.field, field_input_width(), "field");
  if (params_.out.weight.rows() != kDeltaWidth || params_.out.weight.cols() != cfg_.hidden ||
      params_.out.bias.rows() != kDeltaWidth || params_.out.bias.cols() != 1) {
    throw ConfigError("output layer has inconsistent shape");
  }
}

Matrix NtdNet::encode_field(std::span<const Vec3> positions, double t) const {
  const int wx = encoded_width(3, cfg_.pe_bands_x);
  const int wt = encoded_width(1, cfg_.pe_bands_t);
  Matrix x(wx + wt, static_cast<Eigen::Index>(positions.size()));
  const double tv[1] = {t};
  const auto enc_t = positional_encode(tv, cfg_.pe_bands_t);
  const Vec3 scale = 2.0 * (bounds_.hi - bounds_.lo).cwiseInverse();
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Vec3 v = (positions[i] - bounds_.lo).cwiseProduct(scale) - Vec3::Ones();
    const auto enc_x = positional_encode(std::span<const double>(v.data(), 3), cfg_.pe_bands_x);
    const auto col = static_cast<Eigen::Index>(i);
    for (int r = 0; r < wx; ++r) x(r, col) = enc_x[r];
    for (int r = 0; r < wt; ++r) x(wx + r, col) = enc_t[r];
  }
  return x;
}

Matrix NtdNet::forward(const Vec6& dp, std::span<const Vec3> positions, double t, Cache* cache) const {
  Cache local;
  Cache& c = cache != nullptr ? *cache : local;
  c.pose_input = dp;
  c.positions.assign(positions.begin(), positions.end());
  mlp_forward(params_.pose, Matrix(dp), c.pose_acts);
  c.field_input = encode_field(positions, t);
  mlp_forward(params_.field, c.field_input, c.field_acts);
  c.summed = c.field_acts.back();
  c.summed.colwise() += c.pose_acts.back().col(0);
  Matrix out = params_.out.weight * c.summed;
  out.colwise() += params_.out.bias.col(0);
  return out;
}

void NtdNet::backward(const Cache& c, const Matrix& grad_deltas, NtdParams& grads,
                      std::span<Vec3> grad_positions) const {
  if (grad_deltas.rows() != kDeltaWidth || grad_deltas.cols() != c.summed.cols()) {
    throw InvalidInput("delta gradient shape does not match the forward batch");
  }
  grads.out.weight.noalias() += grad_deltas * c.summed.transpose();
  grads.out.bias += grad_deltas.rowwise().sum();
  const Matrix g_sum = params_.out.weight.transpose() * grad_deltas;

  const bool want_pos = !grad_positions.empty();
  const Matrix g_in = mlp_backward(params_.field, c.field_input, c.field_acts, g_sum, grads.field, want_pos);
  const Matrix g_pose = g_sum.rowwise().sum();
  mlp_backward(params_.pose, Matrix(c.pose_input), c.pose_acts, g_pose, grads.pose, false);

  if (!want_pos) return;
  if (grad_positions.size() != c.positions.size()) {
    throw InvalidInput("position gradient span does not match the forward batch");
  }
  const int per = 1 + 2 * cfg_.pe_bands_x;
  const Vec3 scale = 2.0 * (bounds_.hi - bounds_.lo).cwiseInverse();
  for (std::size_t i = 0; i < c.positions.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    for (int d = 0; d < 3; ++d) {
      const int base = d * per;
      const double v = c.field_input(base, col);
      double g_v = g_in(base, col);
      double freq = std::numbers::pi;
      for (int k = 0; k < cfg_.pe_bands_x; ++k, freq *= 2.0) {
        g_v += g_in(base + 1 + 2 * k, col) * freq * std::cos(freq * v);
        g_v -= g_in(base + 2 + 2 * k, col) * freq * std::sin(freq * v);
      }
      grad_positions[i][d] += g_v * scale[d];
    }
  }
}

std::vector<NamedTensor> NtdNet::to_tensors() const {
  std::vector<NamedTensor> out;
  out.push_back({"config",
                 {5},
                 {double(cfg_.layers), double(cfg_.hidden), double(cfg_.pe_bands_x), double(cfg_.pe_bands_t),
                  cfg_.length}});
  out.push_back({"bounds", {6}, {bounds_.lo.x(), bounds_.lo.y(), bounds_.lo.z(), bounds_.hi.x(), bounds_.hi.y(),
                                 bounds_.hi.z()}});
  for (const auto& [name, m] : params_.tensors()) {
    NamedTensor t;
    t.name = name;
    t.shape = {static_cast<std::uint64_t>(m->rows()), static_cast<std::uint64_t>(m->cols())};
    t.data.assign(m->data(), m->data() + m->size());  // column-major
    out.push_back(std::move(t));
  }
  return out;
}

NtdNet NtdNet::from_tensors(const std::vector<NamedTensor>& tensors) {
  auto find = [&](const std::string& name) -> const NamedTensor& {
    for (const auto& t : tensors) {
      if (t.name == name) return t;
    }
    throw LoadError("NTDNet blob lacks tensor '" + name + "'");
  };
  const auto& c = find("config");
  const auto& b = find("bounds");
  if (c.data.size() != 5 || b.data.size() != 6) throw LoadError("NTDNet blob has malformed header tensors");
  NtdConfig cfg;
  cfg.layers = static_cast<int>(c.data[0]);
  cfg.hidden = static_cast<int>(c.data[1]);
  cfg.pe_bands_x = static_cast<int>(c.data[2]);
  cfg.pe_bands_t = static_cast<int>(c.data[3]);
  cfg.length = c.data[4];
  const Aabb bounds{Vec3(b.data[0], b.data[1], b.data[2]), Vec3(b.data[3], b.data[4], b.data[5])};

  NtdParams p;
  p.pose.resize(cfg.layers);
  p.field.resize(cfg.layers);
  for (auto& [name, m] : p.tensors()) {
    const auto& t = find(name);
    if (t.shape.size() != 2 || t.shape[0] * t.shape[1] != t.data.size()) {
      throw LoadError("NTDNet tensor '" + name + "' has a malformed shape");
    }
    *m = Eigen::Map<const Matrix>(t.data.data(), static_cast<Eigen::Index>(t.shape[0]),
                                  static_cast<Eigen::Index>(t.shape[1]));
  }
  try {
    return NtdNet(cfg, bounds, std::move(p));
  } catch (const ConfigError& e) {
    throw LoadError(std::string("NTDNet blob: ") + e.what());
  }
}

// ── Deformation ─────────────────────────────────────────────────

std::vector<Gaussian3D> apply_deformation(std::span<const Gaussian3D> gaussians, const Matrix& deltas) {
  if (deltas.rows() != kDeltaWidth || deltas.cols() != static_cast<Eigen::Index>(gaussians.size())) {
    throw InvalidInput("deformation count mismatch: " + std::to_string(gaussians.size()) + " Gaussians, " +
                       std::to_string(deltas.cols()) + " deltas");
  }
  std::vector<Gaussian3D> out(gaussians.begin(), gaussians.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    Gaussian3D& g = out[i];
    g.position += deltas.block<3, 1>(0, col);
    g.rotation = normalize_quat(g.rotation + deltas.block<4, 1>(3, col));
    g.log_scale += deltas.block<3, 1>(7, col);
    g.opacity_logit += deltas(10, col);
  }
  return out;
}

Matrix apply_deformation_backward(std::span<const Gaussian3D> gaussians, const Matrix& deltas,
                                  std::span<GaussianGrad> grads) {
  if (grads.size() != gaussians.size() ||
      deltas.cols() != static_cast<Eigen::Index>(gaussians.size()) || deltas.rows() != kDeltaWidth) {
    throw InvalidInput("deformation backward count mismatch");
  }
  Matrix g_delta(kDeltaWidth, deltas.cols());
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    GaussianGrad& g = grads[i];
    const Vec4 u = gaussians[i].rotation + deltas.block<4, 1>(3, col);
    const double norm = u.norm();
    const Vec4 qn = u / norm;
    g.rotation = (g.rotation - qn * qn.dot(g.rotation)) / norm;
    g_delta.block<3, 1>(0, col) = g.position;
    g_delta.block<4, 1>(3, col) = g.rotation;
    g_delta.block<3, 1>(7, col) = g.log_scale;
    g_delta(10, col) = g.opacity_logit;
  }
  return g_delta;
}

}  // namespace splatdrive

#include "gmop/neural/params.hpp"

#include "gmop/error.hpp"

#include <Eigen/QR>

#include <cmath>
#include <cstring>
#include <fstream>

namespace gmop::neural {

ParamId ParamStore::add(const std::string& name, Mat init, bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  Param p;
  p.name = name;
  p.grad = Mat::Zero(init.rows(), init.cols());
  p.adam_m = p.grad;
  p.adam_v = p.grad;
  p.value = std::move(init);
  p.trainable = trainable;
  params_.push_back(std::move(p));
  index_[name] = params_.size() - 1;
  return params_.size() - 1;
}

ParamId ParamStore::id(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it->second;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

void ParamStore::set_trainable(bool trainable) {
  for (auto& p : params_) p.trainable = trainable;
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (p.trainable) sq += p.grad.squaredNorm();
  }
  return std::sqrt(sq);
}

void ParamStore::assign_from(const ParamStore& other) {
  for (auto& p : params_) {
    const auto& src = other[other.id(p.name)];
    if (src.value.rows() != p.value.rows() || src.value.cols() != p.value.cols()) {
      throw ShapeError("parameter '" + p.name + "' shape differs");
    }
    p.value = src.value;
  }
  step = other.step;
}

Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  }
  return m;
}

Mat orthogonal_blocks(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  if (cols <= 0 || rows % cols != 0) throw ShapeError("orthogonal_blocks: rows must be a multiple of cols");
  std::normal_distribution<double> n(0.0, 1.0);
  Mat out(rows, cols);
  for (Eigen::Index b = 0; b < rows / cols; ++b) {
    Mat g(cols, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < cols; ++i) g(i, j) = n(rng);
    }
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ() * Mat::Identity(cols, cols);
    // Sign fix so the distribution is uniform over orthogonal matrices.
    const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (r(j, j) < 0) q.col(j) *= -1.0;
    }
    out.block(b * cols, 0, cols, cols) = q;
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'G', 'M', 'O', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::int64_t>(out, store.step);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& p : store.params()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint8_t>(out, p.trainable ? 1 : 0);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.cols()));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.value.size())));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("not a checkpoint: " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  ParamStore store;
  store.step = get<std::int64_t>(in, path);
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = get<std::uint32_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const bool trainable = get<std::uint8_t>(in, path) != 0;
    const auto rows = get<std::uint64_t>(in, path);
    const auto cols = get<std::uint64_t>(in, path);
    Mat value(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(sizeof(double) * rows * cols));
    if (!in) throw IoError("truncated checkpoint " + path.string());
    store.add(name, std::move(value), trainable);
  }
  return store;
}

void load_checkpoint_into(ParamStore& store, const std::filesystem::path& path) {
  const auto loaded = load_checkpoint(path);
  if (loaded.size() != store.size()) {
    throw ShapeError("checkpoint " + path.string() + " holds " + std::to_string(loaded.size()) +
                     " arrays, expected " + std::to_string(store.size()));
  }
  store.assign_from(loaded);
}

}  // namespace gmop::neural

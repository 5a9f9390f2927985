#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace gmop::neural {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Param {
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;
  bool trainable = true;
};

using ParamId = std::size_t;

// Named parameter arrays with gradient and optimizer slots of matching shape.
class ParamStore {
 public:
  ParamId add(const std::string& name, Mat init, bool trainable = true);

  Param& operator[](ParamId id) { return params_.at(id); }
  const Param& operator[](ParamId id) const { return params_.at(id); }
  ParamId id(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  std::int64_t step = 0;

  void zero_grad();
  void set_trainable(bool trainable);
  double grad_norm() const;

  // Copies values by name from `other`; every name must exist with the same shape.
  void assign_from(const ParamStore& other);

 private:
  std::vector<Param> params_;
  std::map<std::string, ParamId> index_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);
// Stack of square orthogonal blocks, for recurrent matrices (rows must be a multiple of cols).
Mat orthogonal_blocks(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

// Binary checkpoint: magic, format version, step, then named arrays with shapes.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);
// Loads values into an existing store, checking names and shapes.
void load_checkpoint_into(ParamStore& store, const std::filesystem::path& path);

}  // namespace gmop::neural

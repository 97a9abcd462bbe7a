#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace reina {

enum class PolicyVariant { kReina, kReinaTan, kReinaSan, kReinaAll };

constexpr bool uses_time_embedding(PolicyVariant v) {
  return v == PolicyVariant::kReinaTan || v == PolicyVariant::kReinaAll;
}
constexpr bool uses_alignment_loss(PolicyVariant v) {
  return v == PolicyVariant::kReinaSan || v == PolicyVariant::kReinaAll;
}

std::string_view to_string(PolicyVariant v);
// Accepts "REINA", "REINA-TAN", "REINA_TAN", "tan", ... case-insensitively.
PolicyVariant parse_variant(std::string_view name);

struct PolicyConfig {
  int input_dim = 16;
  std::vector<int> hidden_dims{64, 64};
  bool use_time_embedding = false;
  int time_embed_dim = 16;
  double time_base = 100.0;

  void validate() const;
  // Consistency between the configured time path and a variant.
  void check_variant(PolicyVariant variant) const;
};

PolicyConfig policy_config_for(PolicyVariant variant, int input_dim,
                               std::vector<int> hidden_dims = {64, 64});

// Sinusoidal embedding of a continuous time value:
// e[2i] = sin(t / base^(2i/d)), e[2i+1] = cos(t / base^(2i/d)).
Eigen::VectorXd time_embedding(double t_audio, int dim, double base = 100.0);

// All weights live in one flat vector so optimizers and gradient checks can
// treat the network as a point in R^P. Layer l is stored as a row-major
// (out x in) weight block followed by its bias.
class PolicyParams {
 public:
  using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

  struct LayerShape {
    int rows = 0;
    int cols = 0;
    Eigen::Index weight_offset = 0;
    Eigen::Index bias_offset = 0;
  };

  PolicyParams() = default;

  static PolicyParams zeros(const PolicyConfig& config);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static PolicyParams init(const PolicyConfig& config, std::uint64_t seed);

  const PolicyConfig& config() const { return config_; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  Eigen::Index size() const { return values_.size(); }

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

  ConstMatrixMap weight(std::size_t layer) const;
  ConstVectorMap bias(std::size_t layer) const;

  bool all_finite() const { return values_.allFinite(); }

 private:
  explicit PolicyParams(const PolicyConfig& config);

  PolicyConfig config_;
  std::vector<LayerShape> layers_;
  Eigen::VectorXd values_;
};

// Column j of `features` and entry j of `t_audio` form one example.
struct PolicyBatch {
  Eigen::MatrixXd features;
  Eigen::VectorXd t_audio;

  Eigen::Index size() const { return features.cols(); }
};

double forward(const PolicyParams& params, const Eigen::VectorXd& features, double t_audio,
               PolicyVariant variant);
Eigen::VectorXd forward_batch(const PolicyParams& params, const PolicyBatch& batch,
                              PolicyVariant variant);
// Exact gradient of sum_j upstream[j] * q_j with respect to params.values().
Eigen::VectorXd backward(const PolicyParams& params, const PolicyBatch& batch,
                         PolicyVariant variant, const Eigen::VectorXd& upstream);

// Header line, JSON config line, then one shape line and one value line per
// array. Values use shortest round-trip decimal so reload is bit-exact.
void write_params(std::ostream& out, const PolicyParams& params, PolicyVariant variant);
void save_params(const std::filesystem::path& path, const PolicyParams& params,
                 PolicyVariant variant);

struct Checkpoint {
  PolicyParams params;
  PolicyVariant variant = PolicyVariant::kReina;
};
Checkpoint read_params(std::istream& in, const std::string& source = "<stream>");
Checkpoint load_params(const std::filesystem::path& path);

}  // namespace reina

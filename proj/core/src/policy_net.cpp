#include "reina/policy_net.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "reina/errors.hpp"
#include "text_format.hpp"

namespace reina {
namespace {

constexpr std::string_view kCheckpointMagic = "reina-policy 1";

std::string normalize_name(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (c == '-' || c == '_') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

Eigen::MatrixXd policy_input(const PolicyParams& params, const PolicyBatch& batch,
                             PolicyVariant variant) {
  const auto& cfg = params.config();
  cfg.check_variant(variant);
  if (batch.features.rows() != cfg.input_dim)
    throw ShapeError("feature dimension " + std::to_string(batch.features.rows()) +
                     " does not match policy input_dim " + std::to_string(cfg.input_dim));
  if (batch.t_audio.size() != batch.features.cols())
    throw ShapeError("batch has " + std::to_string(batch.features.cols()) + " feature columns but " +
                     std::to_string(batch.t_audio.size()) + " time values");
  Eigen::MatrixXd input = batch.features;
  if (uses_time_embedding(variant)) {
    for (Eigen::Index j = 0; j < input.cols(); ++j)
      input.col(j) += time_embedding(batch.t_audio(j), cfg.input_dim, cfg.time_base);
  }
  return input;
}

// Hidden activations a_0 (input) .. a_{L-1}; the output row is returned separately.
struct Activations {
  std::vector<Eigen::MatrixXd> hidden;
  Eigen::RowVectorXd output;
};

Activations run_forward(const PolicyParams& params, const PolicyBatch& batch,
                        PolicyVariant variant) {
  Activations acts;
  acts.hidden.push_back(policy_input(params, batch, variant));
  const std::size_t n_layers = params.layers().size();
  const Eigen::Index cols = batch.size();
  // Column-by-column products: a score must not depend on which other
  // examples share its batch, and GEMM vs GEMV kernels round differently.
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    const auto w = params.weight(l);
    const auto b = params.bias(l);
    const Eigen::MatrixXd& in = acts.hidden.back();
    Eigen::MatrixXd a(w.rows(), cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      Eigen::VectorXd z = w * in.col(j);
      a.col(j) = (z + b).array().tanh().matrix();
    }
    acts.hidden.push_back(std::move(a));
  }
  const std::size_t last = n_layers - 1;
  const auto w = params.weight(last);
  const double b = params.bias(last)(0);
  acts.output.resize(cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    acts.output(j) = w.row(0).dot(acts.hidden.back().col(j)) + b;
  return acts;
}

}  // namespace

std::string_view to_string(PolicyVariant v) {
  switch (v) {
    case PolicyVariant::kReina:
      return "REINA";
    case PolicyVariant::kReinaTan:
      return "REINA-TAN";
    case PolicyVariant::kReinaSan:
      return "REINA-SAN";
    case PolicyVariant::kReinaAll:
      return "REINA-ALL";
  }
  return "REINA";
}

PolicyVariant parse_variant(std::string_view name) {
  const std::string key = normalize_name(name);
  if (key == "reina") return PolicyVariant::kReina;
  if (key == "reinatan" || key == "tan") return PolicyVariant::kReinaTan;
  if (key == "reinasan" || key == "san") return PolicyVariant::kReinaSan;
  if (key == "reinaall" || key == "all") return PolicyVariant::kReinaAll;
  throw ConfigError("variant", "unknown policy variant '" + std::string(name) + "'");
}

void PolicyConfig::validate() const {
  if (input_dim < 1) throw ConfigError("input_dim", "must be >= 1");
  for (int h : hidden_dims)
    if (h < 1) throw ConfigError("hidden_dims", "every layer width must be >= 1");
  if (!(time_base > 1)) throw ConfigError("time_base", "must be > 1");
  if (use_time_embedding) {
    if (time_embed_dim != input_dim)
      throw ConfigError("time_embed_dim", "must equal input_dim when the embedding is added");
    if (time_embed_dim % 2 != 0) throw ConfigError("time_embed_dim", "must be even");
  }
}

void PolicyConfig::check_variant(PolicyVariant variant) const {
  if (use_time_embedding != uses_time_embedding(variant))
    throw ConfigError("use_time_embedding", std::string("inconsistent with variant ") +
                                                std::string(to_string(variant)));
}

PolicyConfig policy_config_for(PolicyVariant variant, int input_dim,
                               std::vector<int> hidden_dims) {
  PolicyConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden_dims = std::move(hidden_dims);
  cfg.use_time_embedding = uses_time_embedding(variant);
  cfg.time_embed_dim = input_dim;
  return cfg;
}

Eigen::VectorXd time_embedding(double t_audio, int dim, double base) {
  if (dim <= 0 || dim % 2 != 0)
    throw ConfigError("time_embed_dim", "embedding dimension must be positive and even, got " +
                                            std::to_string(dim));
  Eigen::VectorXd e(dim);
  for (int i = 0; 2 * i < dim; ++i) {
    const double divisor = std::pow(base, 2.0 * i / dim);
    e(2 * i) = std::sin(t_audio / divisor);
    e(2 * i + 1) = std::cos(t_audio / divisor);
  }
  return e;
}

PolicyParams::PolicyParams(const PolicyConfig& config) : config_(config) {
  config_.validate();
  std::vector<int> widths{config_.input_dim};
  widths.insert(widths.end(), config_.hidden_dims.begin(), config_.hidden_dims.end());
  widths.push_back(1);
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    LayerShape shape;
    shape.rows = widths[l + 1];
    shape.cols = widths[l];
    shape.weight_offset = offset;
    offset += static_cast<Eigen::Index>(shape.rows) * shape.cols;
    shape.bias_offset = offset;
    offset += shape.rows;
    layers_.push_back(shape);
  }
  values_ = Eigen::VectorXd::Zero(offset);
}

PolicyParams PolicyParams::zeros(const PolicyConfig& config) { return PolicyParams(config); }

PolicyParams PolicyParams::init(const PolicyConfig& config, std::uint64_t seed) {
  PolicyParams p(config);
  std::mt19937_64 rng(seed);
  for (const auto& shape : p.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shape.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const Eigen::Index count = static_cast<Eigen::Index>(shape.rows) * shape.cols + shape.rows;
    for (Eigen::Index i = 0; i < count; ++i) p.values_(shape.weight_offset + i) = dist(rng);
  }
  return p;
}

PolicyParams::ConstMatrixMap PolicyParams::weight(std::size_t layer) const {
  const auto& s = layers_.at(layer);
  return ConstMatrixMap(values_.data() + s.weight_offset, s.rows, s.cols);
}

PolicyParams::ConstVectorMap PolicyParams::bias(std::size_t layer) const {
  const auto& s = layers_.at(layer);
  return ConstVectorMap(values_.data() + s.bias_offset, s.rows);
}

double forward(const PolicyParams& params, const Eigen::VectorXd& features, double t_audio,
               PolicyVariant variant) {
  PolicyBatch batch{features, Eigen::VectorXd::Constant(1, t_audio)};
  return forward_batch(params, batch, variant)(0);
}

Eigen::VectorXd forward_batch(const PolicyParams& params, const PolicyBatch& batch,
                              PolicyVariant variant) {
  if (batch.size() == 0) return Eigen::VectorXd();
  return run_forward(params, batch, variant).output.transpose();
}

Eigen::VectorXd backward(const PolicyParams& params, const PolicyBatch& batch,
                         PolicyVariant variant, const Eigen::VectorXd& upstream) {
  if (upstream.size() != batch.size())
    throw ShapeError("upstream gradient has " + std::to_string(upstream.size()) +
                     " entries for a batch of " + std::to_string(batch.size()));
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
  if (batch.size() == 0) return grad;

  const Activations acts = run_forward(params, batch, variant);
  using GradMap = Eigen::Map<PolicyParams::RowMajorMatrix>;
  Eigen::MatrixXd delta = upstream.transpose();  // 1 x B
  for (std::size_t l = params.layers().size(); l-- > 0;) {
    const auto& shape = params.layers()[l];
    const Eigen::MatrixXd& input = acts.hidden[l];
    GradMap(grad.data() + shape.weight_offset, shape.rows, shape.cols) =
        delta * input.transpose();
    grad.segment(shape.bias_offset, shape.rows) = delta.rowwise().sum();
    if (l == 0) break;
    // input == tanh(z_{l-1}), so d tanh = 1 - input^2.
    delta = (params.weight(l).transpose() * delta).cwiseProduct(
        (1.0 - input.array().square()).matrix());
  }
  return grad;
}

void write_params(std::ostream& out, const PolicyParams& params, PolicyVariant variant) {
  const auto& cfg = params.config();
  nlohmann::ordered_json header;
  header["variant"] = std::string(to_string(variant));
  header["config"] = {{"input_dim", cfg.input_dim},
                      {"hidden_dims", cfg.hidden_dims},
                      {"activation", "tanh"},
                      {"use_time_embedding", cfg.use_time_embedding},
                      {"time_embed_dim", cfg.time_embed_dim},
                      {"time_base", cfg.time_base}};
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  const auto& v = params.values();
  for (std::size_t l = 0; l < params.layers().size(); ++l) {
    const auto& s = params.layers()[l];
    out << "layer" << l << ".weight " << s.rows << ' ' << s.cols << '\n';
    out << detail::json_number_array(std::span<const double>(
               v.data() + s.weight_offset, static_cast<std::size_t>(s.rows) * s.cols))
        << '\n';
    out << "layer" << l << ".bias " << s.rows << " 1\n";
    out << detail::json_number_array(
               std::span<const double>(v.data() + s.bias_offset, static_cast<std::size_t>(s.rows)))
        << '\n';
  }
}

void save_params(const std::filesystem::path& path, const PolicyParams& params,
                 PolicyVariant variant) {
  std::ostringstream out;
  write_params(out, params, variant);
  detail::write_text_file(path, out.str());
}

Checkpoint read_params(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic)
    throw IoError(source, "not a policy checkpoint (bad header line)");
  if (!std::getline(in, line)) throw IoError(source, "missing config line");

  Checkpoint ckpt;
  PolicyConfig cfg;
  try {
    const auto header = nlohmann::json::parse(line);
    ckpt.variant = parse_variant(header.at("variant").get<std::string>());
    const auto& c = header.at("config");
    cfg.input_dim = c.at("input_dim").get<int>();
    cfg.hidden_dims = c.at("hidden_dims").get<std::vector<int>>();
    cfg.use_time_embedding = c.at("use_time_embedding").get<bool>();
    cfg.time_embed_dim = c.at("time_embed_dim").get<int>();
    cfg.time_base = c.at("time_base").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(source, std::string("malformed checkpoint config: ") + e.what());
  }
  ckpt.params = PolicyParams::zeros(cfg);
  auto& values = ckpt.params.values();

  auto read_array = [&](const std::string& name, int rows, int cols, Eigen::Index offset) {
    std::string shape_line;
    if (!std::getline(in, shape_line)) throw IoError(source, "missing array " + name);
    std::istringstream shape(shape_line);
    std::string got_name;
    int got_rows = 0;
    int got_cols = 0;
    shape >> got_name >> got_rows >> got_cols;
    if (got_name != name || got_rows != rows || got_cols != cols)
      throw IoError(source, "array header '" + shape_line + "' does not match " + name + " " +
                                std::to_string(rows) + "x" + std::to_string(cols));
    std::string data;
    if (!std::getline(in, data)) throw IoError(source, "missing values for " + name);
    std::vector<double> parsed;
    try {
      parsed = nlohmann::json::parse(data).get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError(source, "malformed values for " + name + ": " + e.what());
    }
    if (parsed.size() != static_cast<std::size_t>(rows) * cols)
      throw IoError(source, "wrong value count for " + name);
    for (std::size_t i = 0; i < parsed.size(); ++i)
      values(offset + static_cast<Eigen::Index>(i)) = parsed[i];
  };

  for (std::size_t l = 0; l < ckpt.params.layers().size(); ++l) {
    const auto& s = ckpt.params.layers()[l];
    const std::string prefix = "layer" + std::to_string(l);
    read_array(prefix + ".weight", s.rows, s.cols, s.weight_offset);
    read_array(prefix + ".bias", s.rows, 1, s.bias_offset);
  }
  if (!ckpt.params.all_finite()) throw IoError(source, "checkpoint contains non-finite weights");
  return ckpt;
}

Checkpoint load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  return read_params(in, path.string());
}

}  // namespace reina

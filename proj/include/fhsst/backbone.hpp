#pragma once

#include "fhsst/layers.hpp"
#include "fhsst/params.hpp"
#include "fhsst/tensor.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace fhsst {

struct ConvSpec {
  int out_channels = 1;
  Dims3 kernel{1, 1, 1};
  Dims3 stride{1, 1, 1};
  bool same_padding = true;
  Dims3 padding{0, 0, 0};  // used only when same_padding is false
  bool relu = true;
};

/// 3D max pooling with "same" padding.
struct PoolSpec {
  Dims3 kernel{1, 1, 1};
  Dims3 stride{1, 1, 1};
};

using StageSpec = std::variant<ConvSpec, PoolSpec>;

struct BranchSpec {
  std::string name;
  std::vector<StageSpec> stages;
};

/// Channel widths of a four-branch inception module:
/// 1x1 | 1x1 -> 3x3x3 | 1x1 -> 3x3x3 | pool -> 1x1.
struct InceptionWidths {
  int b0 = 0;
  int b1_reduce = 0;
  int b1 = 0;
  int b2_reduce = 0;
  int b2 = 0;
  int pool_proj = 0;

  int out_channels() const { return b0 + b1 + b2 + pool_proj; }
};

/// A set of parallel branches over one input, merged by channel concat.
struct ModuleSpec {
  std::string name;
  std::vector<BranchSpec> branches;
  std::optional<InceptionWidths> inception;  // when set, `branches` was derived from it
};

struct BlockSpec {
  std::string name;
  std::optional<PoolSpec> entry_pool;
  std::vector<ModuleSpec> modules;  // applied sequentially
  std::optional<PoolSpec> post_pool;
  std::optional<Shape4> declared_output;
};

struct BackboneConfig {
  std::string name;
  Shape4 input_shape;
  std::vector<BlockSpec> blocks;
  int embedding_dim = 1024;
};

ModuleSpec inception_module(const std::string& name, const InceptionWidths& widths);

/// The five-block 3D inception backbone. Default input is the 80x224x224
/// cube, for which every block output equals its declared shape.
BackboneConfig full_backbone(const Shape4& input = {80, 224, 224, 3});

/// Same topology with narrow channels, sized for desk-scale training on
/// 16x64x64 cubes.
BackboneConfig reduced_backbone(const Shape4& input = {16, 64, 64, 3});

/// Looks up "full" or "reduced".
BackboneConfig backbone_preset(const std::string& name, const Shape4& input);

nlohmann::json to_json(const BackboneConfig& cfg);
BackboneConfig backbone_from_json(const nlohmann::json& j);

struct StageShape {
  std::string name;
  Shape4 shape;
};

struct ShapePlan {
  std::vector<StageShape> blocks;   // output of every block
  int embedding_dim = 0;            // flat length after global average pooling
  std::vector<std::string> divergences;  // planned vs declared block shapes

  bool matches_declared() const { return divergences.empty(); }
};

/// Analytic shape propagation; no weights are created. Throws InvalidConfig
/// if any stage yields a non-positive extent or the final channel count is
/// not the configured embedding size.
ShapePlan shape_plan(const BackboneConfig& cfg);

/// Exact count of trainable scalars (conv weights and biases).
long long count_params(const BackboneConfig& cfg);

// ---------------------------------------------------------------------------
// Executable form.

struct GraphOp {
  enum class Kind { Conv, MaxPool, Concat, GlobalAvgPool };
  Kind kind = Kind::Conv;
  std::string name;
  std::vector<int> inputs;
  int output = -1;
  WindowGeometry geometry;
  bool relu = false;
  int weight = -1;
  int bias = -1;
};

struct ParamSlot {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  double fan_in = 0;
  double fan_out = 0;
  bool is_bias = false;
};

/// The config lowered to a straight-line op list over numbered buffers.
/// Buffer 0 is the input; `embedding` is the pooled (1,1,1,C) output.
struct BackboneGraph {
  std::vector<GraphOp> ops;
  std::vector<Shape4> buffers;
  std::vector<ParamSlot> params;
  std::vector<StageShape> block_outputs;
  std::vector<int> block_buffers;
  std::vector<int> last_use;
  int embedding = -1;
};

BackboneGraph build_graph(const BackboneConfig& cfg);

template <typename Scalar>
struct BackboneTape {
  std::vector<Tensor4<Scalar>> buffers;
  std::vector<std::vector<std::int32_t>> argmax;  // indexed by op
};

template <typename Scalar>
class Backbone {
 public:
  explicit Backbone(BackboneConfig config);

  const BackboneConfig& config() const { return config_; }
  const BackboneGraph& graph() const { return graph_; }
  int embedding_dim() const { return config_.embedding_dim; }

  /// Glorot-uniform weights, zero biases.
  ParamSet<Scalar> init_params(std::uint64_t seed) const;

  /// Embeds one cube. With a tape, every intermediate buffer is kept for
  /// backward; without one, buffers are released after their last use.
  /// `block_shapes`, when given, receives the observed block output shapes.
  Vector<Scalar> forward(const Tensor4<Scalar>& input, const ParamSet<Scalar>& params,
                         BackboneTape<Scalar>* tape = nullptr,
                         std::vector<Shape4>* block_shapes = nullptr) const;

  /// Adds d(loss)/d(params) into `grads` given d(loss)/d(embedding).
  void backward(const BackboneTape<Scalar>& tape, const Vector<Scalar>& d_embedding,
                const ParamSet<Scalar>& params, ParamSet<Scalar>& grads) const;

 private:
  BackboneConfig config_;
  BackboneGraph graph_;
};

}  // namespace fhsst

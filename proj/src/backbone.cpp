#include "fhsst/backbone.hpp"

#include "fhsst/errors.hpp"

#include <algorithm>
#include <random>

namespace fhsst {
namespace {

using nlohmann::json;

json dims_json(const Dims3& d) { return json::array({d.t, d.h, d.w}); }

Dims3 dims_from(const json& j) {
  if (!j.is_array() || j.size() != 3) fail(Errc::InvalidConfig, "expected a (t,h,w) triple, got " + j.dump());
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

json shape_json(const Shape4& s) { return json::array({s.t, s.h, s.w, s.c}); }

Shape4 shape_from(const json& j) {
  if (!j.is_array() || j.size() != 4) fail(Errc::InvalidConfig, "expected a (t,h,w,c) shape, got " + j.dump());
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

json pool_json(const PoolSpec& p) { return {{"kernel", dims_json(p.kernel)}, {"stride", dims_json(p.stride)}}; }

PoolSpec pool_from(const json& j) { return {dims_from(j.at("kernel")), dims_from(j.at("stride"))}; }

json stage_json(const StageSpec& s) {
  if (const auto* c = std::get_if<ConvSpec>(&s)) {
    json conv = {{"out_channels", c->out_channels},
                 {"kernel", dims_json(c->kernel)},
                 {"stride", dims_json(c->stride)},
                 {"relu", c->relu}};
    conv["padding"] = c->same_padding ? json("same") : dims_json(c->padding);
    return {{"conv", conv}};
  }
  return {{"max_pool", pool_json(std::get<PoolSpec>(s))}};
}

StageSpec stage_from(const json& j) {
  if (j.contains("conv")) {
    const json& c = j["conv"];
    ConvSpec spec;
    spec.out_channels = c.at("out_channels").get<int>();
    spec.kernel = dims_from(c.at("kernel"));
    spec.stride = c.contains("stride") ? dims_from(c["stride"]) : Dims3{1, 1, 1};
    spec.relu = c.value("relu", true);
    const json pad = c.value("padding", json("same"));
    if (pad.is_string()) {
      if (pad.get<std::string>() != "same") fail(Errc::InvalidConfig, "unknown padding " + pad.dump());
      spec.same_padding = true;
    } else {
      spec.same_padding = false;
      spec.padding = dims_from(pad);
    }
    return spec;
  }
  if (j.contains("max_pool")) return pool_from(j["max_pool"]);
  fail(Errc::InvalidConfig, "stage must be conv or max_pool: " + j.dump());
}

ConvSpec conv(int out, Dims3 kernel, Dims3 stride = {1, 1, 1}) {
  ConvSpec c;
  c.out_channels = out;
  c.kernel = kernel;
  c.stride = stride;
  return c;
}

constexpr Dims3 kUnit{1, 1, 1};

}  // namespace

ModuleSpec inception_module(const std::string& name, const InceptionWidths& w) {
  ModuleSpec m;
  m.name = name;
  m.inception = w;
  m.branches = {
      {"branch_0", {conv(w.b0, kUnit)}},
      {"branch_1", {conv(w.b1_reduce, kUnit), conv(w.b1, {3, 3, 3})}},
      {"branch_2", {conv(w.b2_reduce, kUnit), conv(w.b2, {3, 3, 3})}},
      {"branch_3", {PoolSpec{{3, 3, 3}, kUnit}, conv(w.pool_proj, kUnit)}},
  };
  return m;
}

BackboneConfig full_backbone(const Shape4& input) {
  BackboneConfig cfg;
  cfg.name = "full";
  cfg.input_shape = input;
  cfg.embedding_dim = 1024;

  BlockSpec b1;
  b1.name = "block1";
  b1.modules.push_back({"1a",
                        {{"branch_0", {conv(32, {7, 3, 7}, {2, 2, 2}), conv(32, {7, 3, 7})}},
                         {"branch_1", {PoolSpec{{3, 3, 3}, {2, 2, 2}}, conv(32, kUnit)}}},
                        std::nullopt});
  b1.post_pool = PoolSpec{{1, 3, 3}, {1, 2, 2}};
  b1.declared_output = Shape4{40, 56, 56, 64};

  BlockSpec b2;
  b2.name = "block2";
  b2.modules.push_back({"2a",
                        {{"branch_0", {conv(64, kUnit), conv(81, {3, 3, 7})}},
                         {"branch_1", {conv(81, {3, 7, 3})}}},
                        std::nullopt});
  b2.post_pool = PoolSpec{{1, 3, 3}, {1, 2, 2}};
  b2.declared_output = Shape4{40, 28, 28, 162};

  // Inception-v1 per-module widths.
  BlockSpec b3;
  b3.name = "block3";
  b3.modules = {inception_module("3b", {64, 96, 128, 16, 32, 32}),
                inception_module("3c", {128, 128, 192, 32, 96, 64})};
  b3.post_pool = PoolSpec{{1, 3, 3}, {1, 2, 2}};
  b3.declared_output = Shape4{40, 14, 14, 480};

  BlockSpec b4;
  b4.name = "block4";
  b4.entry_pool = PoolSpec{{3, 3, 3}, {2, 2, 2}};
  b4.modules = {inception_module("4b", {192, 96, 208, 16, 48, 64}),
                inception_module("4c", {160, 112, 224, 24, 64, 64}),
                inception_module("4d", {128, 128, 256, 24, 64, 64}),
                inception_module("4e", {112, 144, 288, 32, 64, 64}),
                inception_module("4f", {256, 160, 320, 32, 128, 128})};
  b4.declared_output = Shape4{20, 7, 7, 832};

  BlockSpec b5;
  b5.name = "block5";
  b5.entry_pool = PoolSpec{{2, 2, 2}, {2, 2, 2}};
  b5.modules = {inception_module("5b", {256, 160, 320, 32, 128, 128}),
                inception_module("5c", {384, 192, 384, 48, 128, 128})};
  b5.declared_output = Shape4{10, 4, 4, 1024};

  cfg.blocks = {b1, b2, b3, b4, b5};
  return cfg;
}

BackboneConfig reduced_backbone(const Shape4& input) {
  BackboneConfig cfg;
  cfg.name = "reduced";
  cfg.input_shape = input;
  cfg.embedding_dim = 64;

  BlockSpec b1;
  b1.name = "block1";
  b1.modules.push_back({"1a",
                        {{"branch_0", {conv(8, {3, 3, 3}, {2, 2, 2}), conv(8, {3, 3, 3})}},
                         {"branch_1", {PoolSpec{{3, 3, 3}, {2, 2, 2}}, conv(8, kUnit)}}},
                        std::nullopt});
  b1.post_pool = PoolSpec{{1, 3, 3}, {1, 2, 2}};

  BlockSpec b2;
  b2.name = "block2";
  b2.modules.push_back({"2a",
                        {{"branch_0", {conv(8, kUnit), conv(12, {3, 3, 5})}},
                         {"branch_1", {conv(12, {3, 5, 3})}}},
                        std::nullopt});
  b2.post_pool = PoolSpec{{1, 3, 3}, {1, 2, 2}};

  BlockSpec b3;
  b3.name = "block3";
  b3.modules = {inception_module("3b", {8, 8, 12, 4, 6, 6})};
  b3.post_pool = PoolSpec{{1, 3, 3}, {1, 2, 2}};

  BlockSpec b4;
  b4.name = "block4";
  b4.entry_pool = PoolSpec{{3, 3, 3}, {2, 2, 2}};
  b4.modules = {inception_module("4b", {16, 12, 16, 4, 8, 8})};

  BlockSpec b5;
  b5.name = "block5";
  b5.entry_pool = PoolSpec{{2, 2, 2}, {2, 2, 2}};
  b5.modules = {inception_module("5b", {16, 16, 24, 4, 12, 12})};

  cfg.blocks = {b1, b2, b3, b4, b5};
  return cfg;
}

BackboneConfig backbone_preset(const std::string& name, const Shape4& input) {
  if (name == "full") return full_backbone(input);
  if (name == "reduced") return reduced_backbone(input);
  fail(Errc::InvalidConfig, "unknown backbone preset '" + name + "' (expected full|reduced)");
}

nlohmann::json to_json(const BackboneConfig& cfg) {
  json blocks = json::array();
  for (const auto& b : cfg.blocks) {
    json jb;
    jb["name"] = b.name;
    jb["entry_pool"] = b.entry_pool ? pool_json(*b.entry_pool) : json(nullptr);
    jb["post_pool"] = b.post_pool ? pool_json(*b.post_pool) : json(nullptr);
    jb["declared_output"] = b.declared_output ? shape_json(*b.declared_output) : json(nullptr);
    json modules = json::array();
    for (const auto& m : b.modules) {
      json jm;
      jm["name"] = m.name;
      if (m.inception) {
        const auto& w = *m.inception;
        jm["inception"] = {{"b0", w.b0},       {"b1_reduce", w.b1_reduce}, {"b1", w.b1},
                           {"b2_reduce", w.b2_reduce}, {"b2", w.b2}, {"pool_proj", w.pool_proj}};
      } else {
        json branches = json::array();
        for (const auto& br : m.branches) {
          json stages = json::array();
          for (const auto& s : br.stages) stages.push_back(stage_json(s));
          branches.push_back({{"name", br.name}, {"stages", stages}});
        }
        jm["branches"] = branches;
      }
      modules.push_back(jm);
    }
    jb["modules"] = modules;
    blocks.push_back(jb);
  }
  return {{"name", cfg.name},
          {"input_shape", shape_json(cfg.input_shape)},
          {"embedding_dim", cfg.embedding_dim},
          {"blocks", blocks}};
}

BackboneConfig backbone_from_json(const nlohmann::json& j) {
  try {
    BackboneConfig cfg;
    cfg.name = j.value("name", std::string("custom"));
    cfg.input_shape = shape_from(j.at("input_shape"));
    cfg.embedding_dim = j.at("embedding_dim").get<int>();
    for (const auto& jb : j.at("blocks")) {
      BlockSpec b;
      b.name = jb.at("name").get<std::string>();
      if (jb.contains("entry_pool") && !jb["entry_pool"].is_null()) b.entry_pool = pool_from(jb["entry_pool"]);
      if (jb.contains("post_pool") && !jb["post_pool"].is_null()) b.post_pool = pool_from(jb["post_pool"]);
      if (jb.contains("declared_output") && !jb["declared_output"].is_null())
        b.declared_output = shape_from(jb["declared_output"]);
      for (const auto& jm : jb.at("modules")) {
        const auto name = jm.at("name").get<std::string>();
        if (jm.contains("inception")) {
          const json& w = jm["inception"];
          b.modules.push_back(inception_module(
              name, {w.at("b0").get<int>(), w.at("b1_reduce").get<int>(), w.at("b1").get<int>(),
                     w.at("b2_reduce").get<int>(), w.at("b2").get<int>(), w.at("pool_proj").get<int>()}));
          continue;
        }
        ModuleSpec m;
        m.name = name;
        for (const auto& jbr : jm.at("branches")) {
          BranchSpec br;
          br.name = jbr.at("name").get<std::string>();
          for (const auto& js : jbr.at("stages")) br.stages.push_back(stage_from(js));
          m.branches.push_back(std::move(br));
        }
        b.modules.push_back(std::move(m));
      }
      cfg.blocks.push_back(std::move(b));
    }
    return cfg;
  } catch (const json::exception& e) {
    fail(Errc::InvalidConfig, std::string("backbone config: ") + e.what());
  }
}

BackboneGraph build_graph(const BackboneConfig& cfg) {
  if (!cfg.input_shape.positive()) fail(Errc::InvalidConfig, "input shape must be positive");
  BackboneGraph g;
  g.buffers.push_back(cfg.input_shape);

  auto add_pool = [&](int in, const PoolSpec& p, const std::string& name) {
    GraphOp op;
    op.kind = GraphOp::Kind::MaxPool;
    op.name = name;
    op.inputs = {in};
    op.geometry = same_geometry(g.buffers[in], p.kernel, p.stride, g.buffers[in].c);
    op.output = static_cast<int>(g.buffers.size());
    g.buffers.push_back(op.geometry.out);
    g.ops.push_back(op);
    return op.output;
  };
  auto add_conv = [&](int in, const ConvSpec& c, const std::string& name) {
    if (c.out_channels < 1) fail(Errc::InvalidConfig, name + ": out_channels must be >= 1");
    const Shape4& s = g.buffers[in];
    GraphOp op;
    op.kind = GraphOp::Kind::Conv;
    op.name = name;
    op.inputs = {in};
    op.relu = c.relu;
    op.geometry = c.same_padding ? same_geometry(s, c.kernel, c.stride, c.out_channels)
                                 : explicit_geometry(s, c.kernel, c.stride, c.padding, c.out_channels);
    const double taps = c.kernel.volume();
    op.weight = static_cast<int>(g.params.size());
    g.params.push_back({name + "/w", Eigen::Index(taps) * s.c, c.out_channels, taps * s.c,
                        taps * c.out_channels, false});
    op.bias = static_cast<int>(g.params.size());
    g.params.push_back({name + "/b", c.out_channels, 1, 0, 0, true});
    op.output = static_cast<int>(g.buffers.size());
    g.buffers.push_back(op.geometry.out);
    g.ops.push_back(op);
    return op.output;
  };

  int cur = 0;
  for (const auto& block : cfg.blocks) {
    if (block.entry_pool) cur = add_pool(cur, *block.entry_pool, block.name + "/entry_pool");
    for (const auto& module : block.modules) {
      if (module.branches.empty()) fail(Errc::InvalidConfig, module.name + ": module has no branches");
      const std::string prefix = block.name + "/" + module.name;
      std::vector<int> outs;
      for (const auto& branch : module.branches) {
        if (branch.stages.empty()) fail(Errc::InvalidConfig, prefix + "/" + branch.name + ": empty branch");
        int b = cur;
        for (std::size_t i = 0; i < branch.stages.size(); ++i) {
          const std::string name = prefix + "/" + branch.name + "/" + std::to_string(i);
          if (const auto* c = std::get_if<ConvSpec>(&branch.stages[i])) {
            b = add_conv(b, *c, name + "_conv");
          } else {
            b = add_pool(b, std::get<PoolSpec>(branch.stages[i]), name + "_pool");
          }
        }
        outs.push_back(b);
      }
      if (outs.size() == 1) {
        cur = outs.front();
        continue;
      }
      const Shape4 first = g.buffers[outs.front()];
      int channels = 0;
      for (int o : outs) {
        const Shape4& s = g.buffers[o];
        if (s.t != first.t || s.h != first.h || s.w != first.w)
          fail(Errc::InvalidConfig, prefix + ": branch extents differ, cannot concatenate " + to_string(first) +
                                        " and " + to_string(s));
        channels += s.c;
      }
      GraphOp op;
      op.kind = GraphOp::Kind::Concat;
      op.name = prefix + "/concat";
      op.inputs = outs;
      op.output = static_cast<int>(g.buffers.size());
      g.buffers.push_back({first.t, first.h, first.w, channels});
      g.ops.push_back(op);
      cur = op.output;
    }
    if (block.post_pool) cur = add_pool(cur, *block.post_pool, block.name + "/post_pool");
    g.block_outputs.push_back({block.name, g.buffers[cur]});
    g.block_buffers.push_back(cur);
  }

  GraphOp gap;
  gap.kind = GraphOp::Kind::GlobalAvgPool;
  gap.name = "global_avg_pool";
  gap.inputs = {cur};
  gap.output = static_cast<int>(g.buffers.size());
  g.buffers.push_back({1, 1, 1, g.buffers[cur].c});
  g.ops.push_back(gap);
  g.embedding = gap.output;
  if (g.buffers[cur].c != cfg.embedding_dim)
    fail(Errc::InvalidConfig, "final channel count " + std::to_string(g.buffers[cur].c) +
                                  " differs from embedding_dim " + std::to_string(cfg.embedding_dim));

  g.last_use.assign(g.buffers.size(), -1);
  for (std::size_t i = 0; i < g.ops.size(); ++i)
    for (int in : g.ops[i].inputs) g.last_use[in] = static_cast<int>(i);
  return g;
}

ShapePlan shape_plan(const BackboneConfig& cfg) {
  const BackboneGraph g = build_graph(cfg);
  ShapePlan plan;
  plan.blocks = g.block_outputs;
  plan.embedding_dim = g.buffers[g.embedding].c;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& declared = cfg.blocks[i].declared_output;
    if (declared && !(*declared == plan.blocks[i].shape))
      plan.divergences.push_back(cfg.blocks[i].name + ": planned " + to_string(plan.blocks[i].shape) +
                                 ", declared " + to_string(*declared));
  }
  return plan;
}

long long count_params(const BackboneConfig& cfg) {
  long long total = 0;
  int channels = cfg.input_shape.c;
  for (const auto& block : cfg.blocks) {
    for (const auto& module : block.modules) {
      int merged = 0;
      for (const auto& branch : module.branches) {
        int c = channels;
        for (const auto& stage : branch.stages) {
          if (const auto* conv = std::get_if<ConvSpec>(&stage)) {
            total += 1LL * conv->kernel.volume() * c * conv->out_channels + conv->out_channels;
            c = conv->out_channels;
          }
        }
        merged += c;
      }
      channels = merged;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Backbone<Scalar>::Backbone(BackboneConfig config) : config_(std::move(config)), graph_(build_graph(config_)) {}

template <typename Scalar>
ParamSet<Scalar> Backbone<Scalar>::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  ParamSet<Scalar> p;
  p.tensors.reserve(graph_.params.size());
  for (const auto& slot : graph_.params) {
    Matrix<Scalar> m = Matrix<Scalar>::Zero(slot.rows, slot.cols);
    if (!slot.is_bias) glorot_uniform(m, slot.fan_in, slot.fan_out, rng);
    p.tensors.push_back({slot.name, std::move(m)});
  }
  return p;
}

template <typename Scalar>
Vector<Scalar> Backbone<Scalar>::forward(const Tensor4<Scalar>& input, const ParamSet<Scalar>& params,
                                         BackboneTape<Scalar>* tape, std::vector<Shape4>* block_shapes) const {
  if (!(input.shape == config_.input_shape))
    fail(Errc::ShapeMismatch, "backbone input " + to_string(input.shape) + ", expected " + to_string(config_.input_shape));
  if (params.size() != graph_.params.size())
    fail(Errc::ShapeMismatch, "backbone expects " + std::to_string(graph_.params.size()) + " parameter tensors");

  std::vector<Tensor4<Scalar>> local;
  std::vector<Tensor4<Scalar>>& buf = tape ? tape->buffers : local;
  buf.assign(graph_.buffers.size(), Tensor4<Scalar>());
  if (tape) tape->argmax.assign(graph_.ops.size(), {});
  buf[0] = input;
  if (block_shapes) block_shapes->clear();

  for (std::size_t i = 0; i < graph_.ops.size(); ++i) {
    const GraphOp& op = graph_.ops[i];
    Tensor4<Scalar>& out = buf[op.output];
    switch (op.kind) {
      case GraphOp::Kind::Conv:
        conv3d_forward(buf[op.inputs[0]], op.geometry, params[op.weight], params[op.bias], op.relu, out);
        if (!out.data.allFinite()) fail(Errc::NonFinite, "non-finite activation after " + op.name);
        break;
      case GraphOp::Kind::MaxPool:
        max_pool3d_forward(buf[op.inputs[0]], op.geometry, out, tape ? &tape->argmax[i] : nullptr);
        break;
      case GraphOp::Kind::Concat: {
        out = Tensor4<Scalar>(graph_.buffers[op.output]);
        Eigen::Index col = 0;
        for (int in : op.inputs) {
          out.data.middleCols(col, buf[in].shape.c) = buf[in].data;
          col += buf[in].shape.c;
        }
        break;
      }
      case GraphOp::Kind::GlobalAvgPool: {
        const Tensor4<Scalar>& x = buf[op.inputs[0]];
        out = Tensor4<Scalar>(graph_.buffers[op.output]);
        out.data = x.data.colwise().mean();
        break;
      }
    }
    if (!(out.shape == graph_.buffers[op.output]))
      fail(Errc::ShapeMismatch, op.name + " produced " + to_string(out.shape));
    if (block_shapes &&
        std::find(graph_.block_buffers.begin(), graph_.block_buffers.end(), op.output) != graph_.block_buffers.end())
      block_shapes->push_back(out.shape);
    if (!tape) {
      for (int in : op.inputs)
        if (graph_.last_use[in] == static_cast<int>(i)) buf[in] = Tensor4<Scalar>();
    }
  }
  Vector<Scalar> e = buf[graph_.embedding].data.row(0).transpose();
  if (!e.allFinite()) fail(Errc::NonFinite, "non-finite embedding");
  return e;
}

template <typename Scalar>
void Backbone<Scalar>::backward(const BackboneTape<Scalar>& tape, const Vector<Scalar>& d_embedding,
                                const ParamSet<Scalar>& params, ParamSet<Scalar>& grads) const {
  if (tape.buffers.size() != graph_.buffers.size()) fail(Errc::ShapeMismatch, "tape does not belong to this backbone");
  if (d_embedding.size() != config_.embedding_dim) fail(Errc::ShapeMismatch, "embedding gradient length");
  std::vector<Tensor4<Scalar>> d(graph_.buffers.size());
  auto grad_of = [&](int b) -> Tensor4<Scalar>& {
    if (!(d[b].shape == graph_.buffers[b])) d[b] = Tensor4<Scalar>::zeros(graph_.buffers[b]);
    return d[b];
  };
  grad_of(graph_.embedding).data.row(0) = d_embedding.transpose();

  for (std::size_t k = graph_.ops.size(); k-- > 0;) {
    const GraphOp& op = graph_.ops[k];
    if (!(d[op.output].shape == graph_.buffers[op.output])) continue;  // no gradient reached this op
    const Tensor4<Scalar>& dy = d[op.output];
    switch (op.kind) {
      case GraphOp::Kind::GlobalAvgPool: {
        Tensor4<Scalar>& dx = grad_of(op.inputs[0]);
        const Scalar inv = Scalar(1) / static_cast<Scalar>(dx.shape.positions());
        dx.data.rowwise() += dy.data.row(0) * inv;
        break;
      }
      case GraphOp::Kind::Concat: {
        Eigen::Index col = 0;
        for (int in : op.inputs) {
          const int c = graph_.buffers[in].c;
          grad_of(in).data += dy.data.middleCols(col, c);
          col += c;
        }
        break;
      }
      case GraphOp::Kind::MaxPool:
        max_pool3d_backward(tape.argmax[k], dy, grad_of(op.inputs[0]));
        break;
      case GraphOp::Kind::Conv: {
        const int in = op.inputs[0];
        Tensor4<Scalar>* dx = in == 0 ? nullptr : &grad_of(in);
        conv3d_backward(tape.buffers[in], tape.buffers[op.output], op.geometry, params[op.weight], op.relu, dy, dx,
                        grads[op.weight], grads[op.bias]);
        break;
      }
    }
    d[op.output] = Tensor4<Scalar>();
  }
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace fhsst

#include "stgcrnn/model.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stgcrnn/errors.hpp"

namespace stgcrnn::model {

GCRNNCell make_cell(conv::ConvKind kind, int order, std::size_t input_dim,
                    std::size_t hidden_dim, Rng& rng) {
  GCRNNCell cell;
  cell.input_dim = input_dim;
  cell.hidden_dim = hidden_dim;
  const std::size_t f_in = input_dim + hidden_dim;
  cell.reset_filter = conv::make_filter(kind, order, f_in, hidden_dim, rng);
  cell.update_filter = conv::make_filter(kind, order, f_in, hidden_dim, rng);
  cell.candidate_filter = conv::make_filter(kind, order, f_in, hidden_dim, rng);
  return cell;
}

ad::Tensor cell_step(ad::Tape& tape, const conv::GraphOperator& op, const GCRNNCell& cell,
                     const ad::Tensor& x_t, const ad::Tensor& h_prev) {
  if (x_t.cols() != cell.input_dim || h_prev.cols() != cell.hidden_dim ||
      x_t.rows() != h_prev.rows()) {
    throw ShapeError("cell_step: got input " + std::to_string(x_t.rows()) + "x" +
                     std::to_string(x_t.cols()) + ", state " + std::to_string(h_prev.rows()) +
                     "x" + std::to_string(h_prev.cols()) + ", cell expects input_dim=" +
                     std::to_string(cell.input_dim) + ", hidden_dim=" +
                     std::to_string(cell.hidden_dim));
  }
  // r and u share the propagation taps of [X, H]; the taps are filter-free.
  const ad::Tensor xh = tape.concat_columns(x_t, h_prev);
  const auto taps = conv::propagation_taps(tape, op, cell.reset_filter.order, xh);
  const ad::Tensor r = tape.sigmoid(conv::apply_filter(tape, cell.reset_filter, taps));
  const ad::Tensor u = tape.sigmoid(conv::apply_filter(tape, cell.update_filter, taps));

  const ad::Tensor xrh = tape.concat_columns(x_t, tape.hadamard(r, h_prev));
  const auto taps_c = conv::propagation_taps(tape, op, cell.candidate_filter.order, xrh);
  const ad::Tensor cand = tape.tanh(conv::apply_filter(tape, cell.candidate_filter, taps_c));

  return tape.gru_blend(u, h_prev, cand);
}

std::vector<ad::Tensor> GCRNNModel::parameters() const {
  std::vector<ad::Tensor> out;
  const auto push_cell = [&out](const GCRNNCell& cell) {
    for (const auto* f : {&cell.reset_filter, &cell.update_filter, &cell.candidate_filter}) {
      out.push_back(f->theta);
      out.push_back(f->bias);
    }
  };
  for (const auto& c : encoder) push_cell(c);
  for (const auto& c : decoder) push_cell(c);
  out.push_back(proj_weight);
  out.push_back(proj_bias);
  return out;
}

void GCRNNModel::zero_grads() const {
  for (ad::Tensor p : parameters()) p.zero_grad();
}

GCRNNModel make_model(const ModelConfig& config, const Mat& adjacency,
                      std::vector<std::string> node_ids, std::uint64_t seed) {
  if (config.num_layers == 0) throw ConfigError("make_model: num_layers must be >= 1");
  if (config.hidden_dim == 0) throw ConfigError("make_model: hidden_dim must be >= 1");
  if (config.input_dim == 0) throw ConfigError("make_model: input_dim must be >= 1");

  GCRNNModel m;
  m.config = config;
  m.adjacency = adjacency;
  m.node_ids = std::move(node_ids);
  if (m.node_ids.empty())
    for (std::size_t i = 0; i < adjacency.rows(); ++i)
      m.node_ids.push_back(std::to_string(i));
  m.op = conv::make_graph_operator(adjacency, config.kind, config.laplacian_kind,
                                   config.lambda_mode, config.recurrence);

  Rng rng(seed);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::size_t in = l == 0 ? config.input_dim : config.hidden_dim;
    m.encoder.push_back(make_cell(config.kind, config.order, in, config.hidden_dim, rng));
  }
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::size_t in = l == 0 ? 1 : config.hidden_dim;
    m.decoder.push_back(make_cell(config.kind, config.order, in, config.hidden_dim, rng));
  }
  const double a = std::sqrt(6.0 / static_cast<double>(config.hidden_dim + 1));
  std::vector<double> w(config.hidden_dim);
  for (auto& v : w) v = rng.uniform(-a, a);
  m.proj_weight = ad::Tensor::leaf(config.hidden_dim, 1, std::move(w), true);
  m.proj_bias = ad::Tensor::zeros(1, 1, true);
  return m;
}

std::vector<ad::Tensor> encode(ad::Tape& tape, const GCRNNModel& model,
                               std::span<const ad::Tensor> inputs) {
  if (inputs.empty()) throw ContractError("encode: need at least one input step");
  const std::size_t rows = inputs[0].rows();

  std::vector<ad::Tensor> finals;
  std::vector<ad::Tensor> layer_in(inputs.begin(), inputs.end());
  for (const auto& cell : model.encoder) {
    ad::Tensor h = ad::Tensor::zeros(rows, cell.hidden_dim);
    std::vector<ad::Tensor> layer_out;
    layer_out.reserve(layer_in.size());
    for (const auto& x : layer_in) {
      h = cell_step(tape, model.op, cell, x, h);
      layer_out.push_back(h);
    }
    finals.push_back(h);
    layer_in = std::move(layer_out);
  }
  return finals;
}

std::vector<ad::Tensor> decode(ad::Tape& tape, const GCRNNModel& model,
                               std::vector<ad::Tensor> states, std::size_t steps,
                               DecodeMode mode, std::span<const ad::Tensor> targets) {
  if (states.size() != model.decoder.size())
    throw ContractError("decode: got " + std::to_string(states.size()) + " layer states for " +
                        std::to_string(model.decoder.size()) + " decoder layers");
  if (mode == DecodeMode::teacher_forcing && targets.size() < steps)
    throw ContractError("decode: teacher forcing needs " + std::to_string(steps) +
                        " targets, got " + std::to_string(targets.size()));
  const std::size_t rows = states.empty() ? 0 : states[0].rows();

  std::vector<ad::Tensor> outputs;
  outputs.reserve(steps);
  ad::Tensor x = ad::Tensor::zeros(rows, 1);  // start signal
  for (std::size_t s = 0; s < steps; ++s) {
    ad::Tensor layer_input = x;
    for (std::size_t l = 0; l < model.decoder.size(); ++l) {
      states[l] = cell_step(tape, model.op, model.decoder[l], layer_input, states[l]);
      layer_input = states[l];
    }
    ad::Tensor y = tape.add_row_bias(tape.matmul(layer_input, model.proj_weight),
                                     model.proj_bias);
    outputs.push_back(y);
    if (s + 1 < steps) x = mode == DecodeMode::teacher_forcing ? targets[s] : y;
  }
  return outputs;
}

std::vector<ad::Tensor> forward(ad::Tape& tape, const GCRNNModel& model,
                                std::span<const ad::Tensor> inputs, DecodeMode mode,
                                std::span<const ad::Tensor> targets,
                                std::optional<std::size_t> steps) {
  auto states = encode(tape, model, inputs);
  return decode(tape, model, std::move(states), steps.value_or(model.config.horizon), mode,
                targets);
}

std::size_t cell_parameter_count(const GCRNNCell& cell) {
  const std::size_t taps = (static_cast<std::size_t>(cell.reset_filter.order) + 1) *
                           conv::transition_count(cell.reset_filter.kind);
  const std::size_t per_filter =
      taps * (cell.input_dim + cell.hidden_dim) * cell.hidden_dim + cell.hidden_dim;
  return 3 * per_filter;
}

std::size_t count_parameters(const GCRNNModel& model) {
  std::size_t total = 0;
  for (const auto& c : model.encoder) total += cell_parameter_count(c);
  for (const auto& c : model.decoder) total += cell_parameter_count(c);
  total += model.config.hidden_dim + 1;  // projection
  return total;
}

// ---- checkpoint -----------------------------------------------------------------

namespace {

nlohmann::json config_to_json(const ModelConfig& c) {
  return {
      {"kind", conv::to_string(c.kind)},
      {"order", c.order},
      {"input_dim", c.input_dim},
      {"hidden_dim", c.hidden_dim},
      {"num_layers", c.num_layers},
      {"history", c.history},
      {"horizon", c.horizon},
      {"laplacian_kind", graph::to_string(c.laplacian_kind)},
      {"lambda_max_mode",
       c.lambda_mode == graph::LambdaMaxMode::fixed_two ? "fixed_two" : "power_iteration"},
      {"cheb_recurrence",
       c.recurrence == graph::ChebRecurrence::standard ? "standard" : "as_printed"},
  };
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kind = conv::conv_kind_from_string(j.at("kind").get<std::string>());
  c.order = j.at("order").get<int>();
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.history = j.at("history").get<std::size_t>();
  c.horizon = j.at("horizon").get<std::size_t>();
  c.laplacian_kind = graph::laplacian_kind_from_string(j.at("laplacian_kind"));
  c.lambda_mode = j.at("lambda_max_mode") == "fixed_two" ? graph::LambdaMaxMode::fixed_two
                                                         : graph::LambdaMaxMode::power_iteration;
  c.recurrence = j.at("cheb_recurrence") == "as_printed" ? graph::ChebRecurrence::as_printed
                                                         : graph::ChebRecurrence::standard;
  return c;
}

}  // namespace

void save_checkpoint(const GCRNNModel& model, const std::string& extra_json,
                     const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["format"] = "stgcrnn-checkpoint";
  doc["version"] = 1;
  doc["config"] = config_to_json(model.config);
  doc["node_ids"] = model.node_ids;
  doc["W"] = model.adjacency.vec();
  nlohmann::json params = nlohmann::json::array();
  for (const ad::Tensor& p : model.parameters()) {
    params.push_back({{"rows", p.rows()}, {"cols", p.cols()}, {"values", p.values()}});
  }
  doc["params"] = std::move(params);
  doc["extra"] = extra_json.empty() ? nlohmann::json(nullptr)
                                    : nlohmann::json::parse(extra_json);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump() << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json doc = nlohmann::json::parse(ss.str());
  if (doc.value("format", "") != "stgcrnn-checkpoint")
    throw IoError(path.string() + ": not a checkpoint file");

  const ModelConfig config = config_from_json(doc.at("config"));
  auto node_ids = doc.at("node_ids").get<std::vector<std::string>>();
  const std::size_t n = node_ids.size();
  Mat w(n, n, doc.at("W").get<std::vector<double>>());

  GCRNNModel model = make_model(config, w, std::move(node_ids), 0);
  auto params = model.parameters();
  const auto& stored = doc.at("params");
  if (stored.size() != params.size())
    throw IoError(path.string() + ": parameter tensor count mismatch: file has " +
                  std::to_string(stored.size()) + ", model needs " +
                  std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& pj = stored[i];
    if (pj.at("rows").get<std::size_t>() != params[i].rows() ||
        pj.at("cols").get<std::size_t>() != params[i].cols())
      throw IoError(path.string() + ": parameter " + std::to_string(i) + " shape mismatch");
    params[i].values() = pj.at("values").get<std::vector<double>>();
  }

  Checkpoint cp{std::move(model), ""};
  if (!doc.at("extra").is_null()) cp.extra_json = doc.at("extra").dump();
  return cp;
}

}  // namespace stgcrnn::model

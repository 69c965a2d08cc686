#include "motionid/nn/models.hpp"

#include "json.hpp"

namespace motionid::nn {

using nlohmann::json;

namespace {
long conv_stack_params(int in, const std::vector<int>& channels, const std::vector<int>& kernels) {
  long n = 0;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    n += (static_cast<long>(in) * kernels[i] + 1) * channels[i];
    in = channels[i];
  }
  return n;
}
long fc_params(int in, int out) { return (static_cast<long>(in) + 1) * out; }

json parse_config(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string(what) + " config is not valid JSON: " + e.what());
  }
}
}  // namespace

int VerificationModelConfig::min_length() const {
  int l = 1;
  for (int k : kernels) l += k - 1;
  return l;
}

long VerificationModelConfig::parameter_count() const {
  return branches * conv_stack_params(branch_rows, channels, kernels) + fc_params(trunk_dim(), classes) +
         fc_params(trunk_dim(), embedding_dim) + fc_params(embedding_dim, proj_hidden) +
         fc_params(proj_hidden, proj_dim);
}

void VerificationModelConfig::validate() const {
  if (branches != kBranchCount)
    throw ShapeMismatch("verification model needs " + std::to_string(kBranchCount) + " branches");
  if (branch_rows < 1) throw ShapeMismatch("branch rows must be positive");
  if (channels.empty() || channels.size() != kernels.size())
    throw ShapeMismatch("branch channel and kernel lists must be non-empty and equal length");
  for (std::size_t i = 0; i < channels.size(); ++i)
    if (channels[i] < 1 || kernels[i] < 1) throw ShapeMismatch("branch layer sizes must be positive");
  if (embedding_dim < 1 || proj_hidden < 1 || proj_dim < 1)
    throw ShapeMismatch("head sizes must be positive");
  if (classes < 2) throw ShapeMismatch("classifier needs at least 2 classes");
}

std::string VerificationModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["branches"] = branches;
  j["branch_rows"] = branch_rows;
  j["channels"] = channels;
  j["kernels"] = kernels;
  j["embedding_dim"] = embedding_dim;
  j["proj_hidden"] = proj_hidden;
  j["proj_dim"] = proj_dim;
  j["classes"] = classes;
  return j.dump();
}

VerificationModelConfig VerificationModelConfig::from_json(const std::string& text) {
  const json j = parse_config(text, "verification model");
  VerificationModelConfig c;
  try {
    c.branches = j.at("branches").get<int>();
    c.branch_rows = j.at("branch_rows").get<int>();
    c.channels = j.at("channels").get<std::vector<int>>();
    c.kernels = j.at("kernels").get<std::vector<int>>();
    c.embedding_dim = j.at("embedding_dim").get<int>();
    c.proj_hidden = j.at("proj_hidden").get<int>();
    c.proj_dim = j.at("proj_dim").get<int>();
    c.classes = j.at("classes").get<int>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("verification model config: ") + e.what());
  }
  c.validate();
  return c;
}

long PatternModelConfig::parameter_count() const {
  return conv_stack_params(in_channels, channels, std::vector<int>(channels.size(), 1)) +
         fc_params(channels.back(), classes);
}

void PatternModelConfig::validate() const {
  if (in_channels < 1) throw ShapeMismatch("pattern model needs input channels");
  if (channels.empty()) throw ShapeMismatch("pattern model needs at least one conv layer");
  for (int c : channels)
    if (c < 1) throw ShapeMismatch("pattern layer widths must be positive");
  if (classes != 2) throw ShapeMismatch("pattern model output dimension is 2");
}

std::string PatternModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["in_channels"] = in_channels;
  j["channels"] = channels;
  j["classes"] = classes;
  return j.dump();
}

PatternModelConfig PatternModelConfig::from_json(const std::string& text) {
  const json j = parse_config(text, "pattern model");
  PatternModelConfig c;
  try {
    c.in_channels = j.at("in_channels").get<int>();
    c.channels = j.at("channels").get<std::vector<int>>();
    c.classes = j.at("classes").get<int>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("pattern model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace motionid::nn

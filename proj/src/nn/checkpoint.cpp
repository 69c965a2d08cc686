#include "motionid/nn/checkpoint.hpp"

#include <fstream>
#include <map>

#include "motionid/binio.hpp"

namespace motionid::nn {

namespace {
constexpr char kMagic[5] = "MIDM";
constexpr std::uint32_t kVersion = 1;

template <typename Model>
Checkpoint snapshot(const Model& m, const char* kind) {
  Checkpoint c;
  c.kind = kind;
  c.config_json = m.config().to_json();
  m.visit([&](const Param<float>& p) { c.params.emplace_back(p.name, p.value); });
  return c;
}

template <typename Model>
void restore(Model& m, const Checkpoint& c) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [n, t] : c.params) by_name[n] = &t;
  m.visit([&](Param<float>& p) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw IoError("checkpoint lacks parameter " + p.name);
    if (!it->second->same_shape(p.value)) throw IoError("checkpoint shape mismatch for " + p.name);
    p.value = *it->second;
    by_name.erase(it);
  });
  if (!by_name.empty()) throw IoError("checkpoint has unknown parameter " + by_name.begin()->first);
}
}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  using namespace binio;
  put_magic(out, kMagic);
  put<std::uint32_t>(out, kVersion);
  put_string(out, ckpt.kind);
  put_string(out, ckpt.config_json);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    put_floats(out, t.span());
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  using namespace binio;
  expect_magic(in, kMagic);
  if (get<std::uint32_t>(in) != kVersion) throw IoError("unsupported checkpoint version");
  Checkpoint c;
  c.kind = get_string(in);
  c.config_json = get_string(in);
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in);
    const auto rank = get<std::uint32_t>(in);
    if (rank < 1 || rank > 3) throw IoError("bad tensor rank in checkpoint");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(get<std::uint32_t>(in));
    Tensor<float> t(shape);
    get_floats(in, t.span());
    c.params.emplace_back(std::move(name), std::move(t));
  }
  return c;
}

void save_model(const std::filesystem::path& path, const VerificationModel& model) {
  write_checkpoint(path, snapshot(model, "verification"));
}

void save_model(const std::filesystem::path& path, const PatternModel& model) {
  write_checkpoint(path, snapshot(model, "pattern"));
}

VerificationModel load_verification_model(const std::filesystem::path& path) {
  const Checkpoint c = read_checkpoint(path);
  if (c.kind != "verification") throw IoError(path.string() + " holds a " + c.kind + " model");
  VerificationModel m(VerificationModelConfig::from_json(c.config_json), 0);
  restore(m, c);
  return m;
}

PatternModel load_pattern_model(const std::filesystem::path& path) {
  const Checkpoint c = read_checkpoint(path);
  if (c.kind != "pattern") throw IoError(path.string() + " holds a " + c.kind + " model");
  PatternModel m(PatternModelConfig::from_json(c.config_json), 0);
  restore(m, c);
  return m;
}

}  // namespace motionid::nn

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "motionid/pipeline.hpp"
#include "motionid/rng.hpp"

namespace motionid::pipeline {

namespace {

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename V>
V parse_number(const std::string& key, const std::string& text) {
  V v{};
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw UsageError("config key '" + key + "': bad value '" + text + "'");
  return v;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw UsageError("config key '" + key + "': empty list");
  return out;
}

std::string int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

// ---- metrics ---------------------------------------------------------------

std::vector<double> MetricsLog::series(const std::string& split, const std::string& metric) const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.split == split && r.metric == metric) out.push_back(r.value);
  return out;
}

int MetricsLog::epochs() const {
  std::set<int> e;
  for (const auto& r : rows) e.insert(r.epoch);
  return static_cast<int>(e.size());
}

std::string MetricsLog::to_csv() const {
  std::string out = "epoch,split,metric,value\n";
  for (const auto& r : rows) out += std::to_string(r.epoch) + "," + r.split + "," + r.metric + "," + num(r.value) + "\n";
  return out;
}

MetricsLog MetricsLog::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,split,metric,value") throw SchemaError("not a metrics log");
  MetricsLog log;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 4) throw RowError(n, "metrics rows have 4 fields");
    int e = 0;
    double v = 0.0;
    if (std::from_chars(f[0].data(), f[0].data() + f[0].size(), e).ec != std::errc())
      throw RowError(n, "bad epoch");
    if (std::from_chars(f[3].data(), f[3].data() + f[3].size(), v).ec != std::errc())
      throw RowError(n, "bad value");
    log.rows.push_back({e, f[1], f[2], v});
  }
  return log;
}

void MetricsLog::save(const std::filesystem::path& path) const { write_file(path, to_csv()); }

// ---- config ----------------------------------------------------------------

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw UsageError("config line " + std::to_string(n) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> load_config_file(const std::filesystem::path& path) {
  return parse_config_text(read_file(path));
}

void ExperimentConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) {
    auto i = [&] { return parse_number<int>(k, v); };
    auto d = [&] { return parse_number<double>(k, v); };
    if (k == "seed") {
      seed = parse_number<std::uint64_t>(k, v);
      seed_given = true;
    } else if (k == "n_base") n_base = i();
    else if (k == "n_val_add") n_val_add = i();
    else if (k == "n_test_final") n_test_final = i();
    else if (k == "train_fraction") train_fraction = d();
    else if (k == "val_fraction") val_fraction = d();
    else if (k == "epochs") epochs = i();
    else if (k == "batch_size") batch_size = i();
    else if (k == "lr") lr = d();
    else if (k == "repeats") repeats = i();
    else if (k == "margin") loss.margin = d();
    else if (k == "p_norm") loss.p_norm = d();
    else if (k == "alpha_tm") loss.alpha_tm = d();
    else if (k == "tau") loss.tau = d();
    else if (k == "crop_len") augment.crop_out_len = i();
    else if (k == "noise_fraction") augment.noise_fraction = d();
    else if (k == "branch_channels") model.channels = parse_int_list(k, v);
    else if (k == "branch_kernels") model.kernels = parse_int_list(k, v);
    else if (k == "embedding_dim") model.embedding_dim = i();
    else if (k == "proj_hidden") model.proj_hidden = i();
    else if (k == "proj_dim") model.proj_dim = i();
    else if (k == "finetune_epochs") finetune_epochs = i();
    else if (k == "finetune_lr_factor") finetune_lr_factor = d();
    else if (k == "finetune_batch_size") finetune_batch_size = i();
    else if (k == "tar") tar = eval::parse_rate(v);
    else if (k == "iterations") iterations = i();
    else if (k == "final_genuine") final_genuine = i();
    else if (k == "final_impostor") final_impostor = i();
    else if (k == "pattern_epochs") pattern_epochs = i();
    else if (k == "pattern_batch_size") pattern_batch_size = i();
    else if (k == "pattern_lr") pattern_lr = d();
    else if (k == "pattern_train_fraction") pattern_train_fraction = d();
    else if (k == "pattern_val_fraction") pattern_val_fraction = d();
    else if (k == "pattern_channels") pattern_channels = parse_int_list(k, v);
    else throw UsageError("unknown config key '" + k + "'");
  }
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  std::map<std::string, std::string> m;
  if (seed_given) m["seed"] = std::to_string(seed);
  m["n_base"] = std::to_string(n_base);
  m["n_val_add"] = std::to_string(n_val_add);
  m["n_test_final"] = std::to_string(n_test_final);
  m["train_fraction"] = num(train_fraction);
  m["val_fraction"] = num(val_fraction);
  m["epochs"] = std::to_string(epochs);
  m["batch_size"] = std::to_string(batch_size);
  m["lr"] = num(lr);
  m["repeats"] = std::to_string(repeats);
  m["margin"] = num(loss.margin);
  m["p_norm"] = num(loss.p_norm);
  m["alpha_tm"] = num(loss.alpha_tm);
  m["tau"] = num(loss.tau);
  m["crop_len"] = std::to_string(augment.crop_out_len);
  m["noise_fraction"] = num(augment.noise_fraction);
  m["branch_channels"] = int_list(model.channels);
  m["branch_kernels"] = int_list(model.kernels);
  m["embedding_dim"] = std::to_string(model.embedding_dim);
  m["proj_hidden"] = std::to_string(model.proj_hidden);
  m["proj_dim"] = std::to_string(model.proj_dim);
  m["finetune_epochs"] = std::to_string(finetune_epochs);
  m["finetune_lr_factor"] = num(finetune_lr_factor);
  m["finetune_batch_size"] = std::to_string(finetune_batch_size);
  m["tar"] = num(tar);
  m["iterations"] = std::to_string(iterations);
  m["final_genuine"] = std::to_string(final_genuine);
  m["final_impostor"] = std::to_string(final_impostor);
  m["pattern_epochs"] = std::to_string(pattern_epochs);
  m["pattern_batch_size"] = std::to_string(pattern_batch_size);
  m["pattern_lr"] = num(pattern_lr);
  m["pattern_train_fraction"] = num(pattern_train_fraction);
  m["pattern_val_fraction"] = num(pattern_val_fraction);
  m["pattern_channels"] = int_list(pattern_channels);
  return m;
}

std::string ExperimentConfig::to_text() const {
  std::string s;
  for (const auto& [k, v] : to_map()) s += k + " = " + v + "\n";
  return s;
}

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError(what);
  };
  need(n_base >= 1 && n_val_add >= 0 && n_test_final >= 0, "user counts must be non-negative, n_base >= 1");
  need(train_fraction > 0 && val_fraction >= 0 && train_fraction + val_fraction < 1.0,
       "attempt fractions must satisfy train > 0, val >= 0, train + val < 1");
  need(epochs >= 1 && batch_size >= 2 && repeats >= 1, "epochs, batch_size >= 2 and repeats must be positive");
  need(lr > 0, "lr must be positive");
  need(finetune_epochs >= 1 && finetune_batch_size >= 2, "fine-tune epochs and batch size must be positive");
  need(finetune_lr_factor > 0 && finetune_lr_factor < 1, "finetune_lr_factor must lie in (0, 1)");
  need(tar > 0 && tar <= 1, "tar must lie in (0, 1]");
  need(iterations >= 1 && final_genuine >= 1 && final_impostor >= 1, "bootstrap sizes must be positive");
  need(pattern_epochs >= 1 && pattern_batch_size >= 2 && pattern_lr > 0, "pattern training settings must be positive");
  need(pattern_train_fraction > 0 && pattern_val_fraction > 0 && pattern_train_fraction + pattern_val_fraction <= 1.0,
       "pattern fractions must be positive and sum to at most 1");
  need(augment.crop_out_len >= 1 && augment.noise_fraction >= 0, "augmentation settings out of range");
  try {
    loss.validate();
    nn::VerificationModelConfig m = model;
    m.validate();
    nn::PatternModelConfig p;
    p.channels = pattern_channels;
    p.validate();
  } catch (const ShapeMismatch& e) {
    throw UsageError(e.what());
  }
  need(augment.crop_out_len >= model.min_length(), "crop_len shorter than the branch receptive field");
}

// ---- attempt sets ----------------------------------------------------------

features::FeatureTensor to_feature_tensor(Window w) {
  if (w.rows() != features::kFeatureRows)
    throw GridMismatch("feature windows need " + std::to_string(features::kFeatureRows) + " rows");
  return {std::move(w)};
}

void save_attempt_set(const std::filesystem::path& dir, const AttemptSet& set) {
  std::filesystem::create_directories(dir);
  for (const auto& [user, attempts] : set) {
    std::vector<Window> windows;
    for (const auto& a : attempts) windows.push_back(a.window);
    preprocess::write_window_file(dir / (user + ".midw"), preprocess::make_window_file(user, std::move(windows)));
  }
}

AttemptSet load_attempt_set(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".midw") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  AttemptSet set;
  for (const auto& f : files) {
    auto wf = preprocess::read_window_file(f);
    auto& list = set[wf.user_id];
    for (auto& w : wf.windows) list.push_back(to_feature_tensor(std::move(w)));
  }
  if (set.empty()) throw IoError("no feature files in " + dir.string());
  return set;
}

nn::Tensor<float> stack_windows(const std::vector<const Window*>& windows) {
  if (windows.empty()) throw ShapeMismatch("cannot stack an empty window list");
  const int rows = windows.front()->rows(), len = windows.front()->timesteps();
  nn::Tensor<float> x({static_cast<int>(windows.size()), rows, len});
  const std::size_t per = static_cast<std::size_t>(rows) * len;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i]->rows() != rows || windows[i]->timesteps() != len)
      throw ShapeMismatch("windows in a batch must share shape");
    std::copy(windows[i]->data().begin(), windows[i]->data().end(), x.data() + i * per);
  }
  return x;
}

// ---- split plan ------------------------------------------------------------

void SplitPlan::validate() const {
  std::set<std::string> seen;
  for (const auto* group : {&subset_base, &val_add, &test_final})
    for (const auto& u : *group)
      if (!seen.insert(u).second) throw UsageError("user " + u + " appears in more than one split");
  for (const auto& [user, idx] : attempts) {
    std::set<int> s;
    for (const auto* part : {&idx.train, &idx.val, &idx.test})
      for (int i : *part)
        if (i < 0 || !s.insert(i).second) throw UsageError("attempt splits of " + user + " overlap");
  }
  for (const auto& u : seen)
    if (!attempts.count(u)) throw UsageError("no attempt split for user " + u);
}

std::string SplitPlan::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["subset_base"] = subset_base;
  j["val_add"] = val_add;
  j["test_final"] = test_final;
  auto& a = j["attempts"] = nlohmann::ordered_json::object();
  for (const auto& [user, idx] : attempts) a[user] = {{"train", idx.train}, {"val", idx.val}, {"test", idx.test}};
  return j.dump(1);
}

SplitPlan SplitPlan::from_json(const std::string& text) {
  SplitPlan p;
  try {
    const auto j = nlohmann::json::parse(text);
    p.seed = j.at("seed").get<std::uint64_t>();
    p.subset_base = j.at("subset_base").get<std::vector<std::string>>();
    p.val_add = j.at("val_add").get<std::vector<std::string>>();
    p.test_final = j.at("test_final").get<std::vector<std::string>>();
    for (const auto& [user, idx] : j.at("attempts").items())
      p.attempts[user] = {idx.at("train").get<std::vector<int>>(), idx.at("val").get<std::vector<int>>(),
                          idx.at("test").get<std::vector<int>>()};
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("split plan: ") + e.what());
  }
  p.validate();
  return p;
}

void SplitPlan::save(const std::filesystem::path& path) const { write_file(path, to_json() + "\n"); }
SplitPlan SplitPlan::load(const std::filesystem::path& path) { return from_json(read_file(path)); }

int SplitPlan::class_of(const std::string& base_user) const {
  const auto it = std::find(subset_base.begin(), subset_base.end(), base_user);
  if (it == subset_base.end()) throw UsageError(base_user + " is not in subset_base");
  return static_cast<int>(it - subset_base.begin());
}

namespace {
AttemptIndices cut(int count, double train_fraction, double val_fraction, Rng& rng) {
  std::vector<int> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const int n_train = static_cast<int>(std::floor(train_fraction * count + 1e-9));
  const int n_val = static_cast<int>(std::floor(val_fraction * count + 1e-9));
  AttemptIndices a;
  a.train.assign(idx.begin(), idx.begin() + n_train);
  a.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  a.test.assign(idx.begin() + n_train + n_val, idx.end());
  for (auto* v : {&a.train, &a.val, &a.test}) std::sort(v->begin(), v->end());
  return a;
}

void cut_all(SplitPlan& p, const AttemptSet& set, double train_fraction, double val_fraction, std::uint64_t seed) {
  p.attempts.clear();
  std::uint64_t stream = 0;
  for (const auto* group : {&p.subset_base, &p.val_add, &p.test_final})
    for (const auto& u : *group) {
      Rng rng = make_rng(seed, 1000 + stream++);
      p.attempts[u] = cut(static_cast<int>(set.at(u).size()), train_fraction, val_fraction, rng);
    }
}
}  // namespace

SplitPlan make_split_plan(const AttemptSet& set, int n_base, int n_val_add, int n_test_final, double train_fraction,
                          double val_fraction, std::uint64_t seed) {
  if (n_base < 2) throw InsufficientData("subset_base needs at least 2 users (classes)");
  const int need = n_base + n_val_add + n_test_final;
  if (static_cast<int>(set.size()) < need)
    throw InsufficientData("plan needs " + std::to_string(need) + " users, data has " + std::to_string(set.size()));
  std::vector<std::string> users;
  for (const auto& [u, _] : set) users.push_back(u);
  Rng rng = make_rng(seed, 1);
  std::shuffle(users.begin(), users.end(), rng);
  SplitPlan p;
  p.seed = seed;
  p.subset_base.assign(users.begin(), users.begin() + n_base);
  p.val_add.assign(users.begin() + n_base, users.begin() + n_base + n_val_add);
  p.test_final.assign(users.begin() + n_base + n_val_add, users.begin() + need);
  for (auto* g : {&p.subset_base, &p.val_add, &p.test_final}) std::sort(g->begin(), g->end());
  cut_all(p, set, train_fraction, val_fraction, seed);
  p.validate();
  return p;
}

SplitPlan resample_attempts(const SplitPlan& plan, const AttemptSet& set, double train_fraction, double val_fraction,
                            int repeat) {
  if (repeat == 0) return plan;
  SplitPlan p = plan;
  cut_all(p, set, train_fraction, val_fraction, derive_seed(plan.seed, 5000 + static_cast<std::uint64_t>(repeat)));
  p.validate();
  return p;
}

}  // namespace motionid::pipeline

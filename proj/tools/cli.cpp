#include "cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "motionid/eval.hpp"
#include "motionid/ingest.hpp"
#include "motionid/nn/checkpoint.hpp"
#include "motionid/pipeline.hpp"
#include "motionid/report.hpp"
#include "motionid/synth.hpp"

namespace motionid::cli {
namespace {

namespace fs = std::filesystem;
using pipeline::ExperimentConfig;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string grouped(std::int64_t v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > (s[0] == '-' ? 1 : 0); i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

void apply_thread_override() {
  const char* v = std::getenv("MOTIONID_THREADS");
  if (!v || !*v) return;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end || n < 1) throw UsageError(std::string("MOTIONID_THREADS must be a positive integer, got '") + v + "'");
  omp_set_num_threads(static_cast<int>(n));
}

struct Globals {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  bool replication = false;

  // defaults < config file < flags
  ExperimentConfig config() const {
    ExperimentConfig cfg;
    if (!config_file.empty()) {
      if (!fs::exists(config_file)) throw UsageError("config file " + config_file + " does not exist");
      cfg.apply(pipeline::load_config_file(config_file));
    }
    std::map<std::string, std::string> kv;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
      kv[s.substr(0, eq)] = s.substr(eq + 1);
    }
    if (seed) kv["seed"] = std::to_string(*seed);
    cfg.apply(kv);
    cfg.validate();
    return cfg;
  }

  ExperimentConfig randomized(const std::string& command) const {
    auto cfg = config();
    if (replication && !cfg.seed_given) throw UsageError(command + ": replication mode needs an explicit seed");
    return cfg;
  }
};

void record_config(const fs::path& dir, const ExperimentConfig& cfg, const std::string& command) {
  write_text(dir / (command + ".cfg"), cfg.to_text());
}

std::vector<fs::path> files_with(const fs::path& dir, const std::string& suffix) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename().string().ends_with(suffix)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> targets(const pipeline::SplitPlan& plan, const std::string& user) {
  if (user.empty()) return plan.test_final;
  if (std::find(plan.test_final.begin(), plan.test_final.end(), user) == plan.test_final.end())
    throw UserNotHeldOut(user + " is not in test_final");
  return {user};
}

std::uint64_t user_stream(const pipeline::SplitPlan& plan, const std::string& user) {
  return static_cast<std::uint64_t>(std::find(plan.test_final.begin(), plan.test_final.end(), user) -
                                    plan.test_final.begin());
}

// ---- subcommands -----------------------------------------------------------

struct SynthArgs {
  std::string kind = "specific";
  std::string out;
  int users = 12;
  int devices = 1;
  int lifts = 50;
  int locations = 6;
  int days = 14;
  int unlocks = 10;
};

int do_synth(const Globals& g, const SynthArgs& a, std::ostream& out) {
  const auto cfg = g.randomized("synth");
  if (a.users < 1 || a.devices < 1) throw UsageError("synth needs --users >= 1 and --devices >= 1");
  const auto profiles = ingest::make_profiles(a.users, cfg.seed);
  ingest::DatasetManifest m;
  if (a.kind == "specific") {
    ingest::SpecificMotionConfig sm;
    sm.lifts_per_location = a.lifts;
    sm.locations = a.locations;
    m = ingest::synth_specific_motion(profiles, sm, a.out);
  } else if (a.kind == "all") {
    ingest::AllMotionsConfig am;
    am.days = a.days;
    am.unlocks_per_day = a.unlocks;
    m = ingest::synth_all_motions(profiles, am, a.devices, a.out);
  } else {
    throw UsageError("--kind must be 'specific' or 'all'");
  }
  record_config(a.out, cfg, "synth");
  out << "synth: " << m.entries.size() << " recordings of " << m.user_ids().size() << " users ("
      << ingest::to_string(m.kind) << ") -> " << (fs::path(a.out) / "manifest.json").string() << "\n";
  return 0;
}

int do_preprocess_verify(const std::string& manifest, const std::string& out_dir, std::ostream& out) {
  const auto m = ingest::load_manifest(manifest);
  std::map<std::string, std::vector<Window>> per_user;
  for (const auto& e : m.entries) {
    const auto rec = m.load(e);
    auto attempts = preprocess::cluster_attempts(preprocess::extract_verification_attempts(rec), rec.events());
    auto& list = per_user[e.user_id];
    for (auto& a : attempts) list.push_back(std::move(a.segment));
  }
  std::string csv = "user,attempts\n";
  for (auto& [user, windows] : per_user) {
    csv += user + "," + std::to_string(windows.size()) + "\n";
    out << "  " << user << ": " << windows.size() << " attempts\n";
    preprocess::write_window_file(fs::path(out_dir) / (user + ".midw"),
                                  preprocess::make_window_file(user, std::move(windows)));
  }
  write_text(fs::path(out_dir) / "attempts.csv", csv);
  out << "preprocess verify: " << per_user.size() << " users -> " << out_dir << "\n";
  return 0;
}

preprocess::WindowFile container(const std::string& user, std::vector<Window> windows) {
  if (windows.empty()) return preprocess::WindowFile{user, kDefaultRateHz, 0, {}, {}};
  return preprocess::make_window_file(user, std::move(windows));
}

int do_preprocess_patterns(const std::string& manifest, const std::string& out_dir, std::ostream& out) {
  const auto m = ingest::load_manifest(manifest);
  std::string csv = "device,user,positives,negatives\n";
  for (const auto& e : m.entries) {
    auto set = preprocess::extract_pattern_windows(m.load(e));
    const fs::path dir = fs::path(out_dir) / e.device_id;
    csv += e.device_id + "," + e.user_id + "," + std::to_string(set.positives.size()) + "," +
           std::to_string(set.negatives.size()) + "\n";
    out << "  " << e.device_id << "/" << e.user_id << ": " << set.positives.size() << " positive, "
        << set.negatives.size() << " negative\n";
    preprocess::write_window_file(dir / (e.user_id + ".pos.midw"), container(e.user_id, std::move(set.positives)));
    preprocess::write_window_file(dir / (e.user_id + ".neg.midw"), container(e.user_id, std::move(set.negatives)));
  }
  write_text(fs::path(out_dir) / "windows.csv", csv);
  out << "preprocess patterns: " << m.entries.size() << " recordings -> " << out_dir << "\n";
  return 0;
}

int do_features(const std::string& in_dir, const std::string& out_dir, std::ostream& out) {
  pipeline::AttemptSet set;
  for (const auto& f : files_with(in_dir, ".midw")) {
    auto wf = preprocess::read_window_file(f);
    auto& list = set[wf.user_id];
    for (auto& w : wf.windows) list.push_back(features::build_feature_tensor(preprocess::VerificationAttempt{std::move(w)}));
  }
  if (set.empty()) throw IoError("no attempt files in " + in_dir);
  pipeline::save_attempt_set(out_dir, set);
  std::size_t n = 0;
  for (const auto& [_, v] : set) n += v.size();
  out << "features: " << n << " tensors of " << features::feature_channel_names().size() << " rows for "
      << set.size() << " users -> " << out_dir << "\n";
  return 0;
}

int do_train_patterns(const Globals& g, const std::string& in_dir, const std::string& out_dir, bool shuffle,
                      std::ostream& out) {
  const auto cfg = g.randomized("train patterns");
  std::map<std::pair<std::string, std::string>, preprocess::PatternWindowSet> sets;
  for (const auto& f : files_with(in_dir, ".midw")) {
    const std::string name = f.filename().string();
    const bool pos = name.ends_with(".pos.midw");
    if (!pos && !name.ends_with(".neg.midw")) continue;
    auto wf = preprocess::read_window_file(f);
    const std::string device = f.parent_path().filename().string();
    auto& s = sets[{device, wf.user_id}];
    s.user_id = wf.user_id;
    s.device_id = device;
    auto& dst = pos ? s.positives : s.negatives;
    for (auto& w : wf.windows) dst.push_back(std::move(w));
  }
  if (sets.empty()) throw IoError("no pattern windows in " + in_dir);
  std::vector<preprocess::PatternWindowSet> list;
  for (auto& [_, s] : sets) list.push_back(std::move(s));
  const auto r = pipeline::train_pattern_model(list, cfg, cfg.seed, shuffle);

  report::PatternTable t;
  for (const auto& [key, _] : r.pair_accuracy) {
    if (std::find(t.devices.begin(), t.devices.end(), key.first) == t.devices.end()) t.devices.push_back(key.first);
    if (std::find(t.users.begin(), t.users.end(), key.second) == t.users.end()) t.users.push_back(key.second);
  }
  std::sort(t.users.begin(), t.users.end());
  t.accuracy.assign(t.devices.size(), std::vector<std::optional<report::MeanSd>>(t.users.size()));
  for (const auto& [key, acc] : r.pair_accuracy) {
    const auto d = std::find(t.devices.begin(), t.devices.end(), key.first) - t.devices.begin();
    const auto u = std::find(t.users.begin(), t.users.end(), key.second) - t.users.begin();
    t.accuracy[static_cast<std::size_t>(d)][static_cast<std::size_t>(u)] = report::MeanSd{acc, 0.0};
  }
  nn::save_model(fs::path(out_dir) / "pattern.ckpt", r.model);
  r.metrics.save(fs::path(out_dir) / "metrics.csv");
  write_text(fs::path(out_dir) / "pattern_table.csv", report::to_csv(t));
  record_config(out_dir, cfg, "train_patterns");
  out << "train patterns: best epoch " << r.best_epoch << ", validation ROC-AUC " << r.best_val_auc << " -> "
      << out_dir << "\n";
  return 0;
}

int do_train_baseline(const Globals& g, const std::string& feat_dir, const std::string& plan_file,
                      const std::string& out_dir, std::ostream& out) {
  const auto cfg = g.randomized("train baseline");
  const auto set = pipeline::load_attempt_set(feat_dir);
  const auto plan = plan_file.empty() ? pipeline::make_split_plan(set, cfg.n_base, cfg.n_val_add, cfg.n_test_final,
                                                                  cfg.train_fraction, cfg.val_fraction, cfg.seed)
                                      : pipeline::SplitPlan::load(plan_file);
  plan.save(fs::path(out_dir) / "plan.json");
  std::vector<double> acc_val, acc_test, far_val, far_test;
  for (int r = 0; r < cfg.repeats; ++r) {
    const auto p = pipeline::resample_attempts(plan, set, cfg.train_fraction, cfg.val_fraction, r);
    const auto res = pipeline::train_baseline(set, p, cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
    const std::string suffix = r == 0 ? "" : "_" + std::to_string(r);
    res.metrics.save(fs::path(out_dir) / ("metrics" + suffix + ".csv"));
    if (r == 0) nn::save_model(fs::path(out_dir) / "baseline.ckpt", res.model);
    acc_val.push_back(res.acc_val);
    acc_test.push_back(res.acc_test);
    far_val.push_back(res.far_val);
    far_test.push_back(res.far_test);
    out << "  repeat " << r << ": best epoch " << res.best_epoch << ", Acc_val " << res.acc_val << ", FAR_val "
        << res.far_val << "\n";
  }
  const int n = static_cast<int>(plan.subset_base.size());
  report::SplitTable t;
  t.rows.push_back({n, report::mean_sd(acc_val), report::mean_sd(acc_test), report::mean_sd(far_val),
                    report::mean_sd(far_test), eval::theoretical_far(n, 3)});
  write_text(fs::path(out_dir) / "split_table.csv", report::to_csv(t));
  record_config(out_dir, cfg, "train_baseline");
  out << "train baseline: " << n << " classes, " << cfg.repeats << " repeat(s) -> " << out_dir << "\n";
  return 0;
}

int do_finetune(const Globals& g, const std::string& feat_dir, const std::string& plan_file,
                const std::string& baseline, const std::string& user, const std::string& out_dir, std::ostream& out) {
  const auto cfg = g.randomized("finetune");
  const auto set = pipeline::load_attempt_set(feat_dir);
  const auto plan = pipeline::SplitPlan::load(plan_file);
  const auto base = nn::load_verification_model(baseline);
  for (const auto& u : targets(plan, user)) {
    const fs::path dir = fs::path(out_dir) / u;
    fs::create_directories(dir);
    const auto r = pipeline::finetune_user(
        base, u, plan, set, pipeline::finetune_config(cfg), cfg, derive_seed(cfg.seed, 100 + user_stream(plan, u)),
        [&](int e, const nn::VerificationModel& m) { nn::save_model(dir / ("epoch_" + std::to_string(e) + ".ckpt"), m); });
    r.metrics.save(dir / "metrics.csv");
    out << "  " << u << ": " << r.checkpoints.size() << " checkpoints, final train accuracy "
        << r.metrics.series("train", "accuracy").back() << "\n";
  }
  record_config(out_dir, cfg, "finetune");
  out << "finetune -> " << out_dir << "\n";
  return 0;
}

std::vector<fs::path> checkpoints_in(const fs::path& dir) {
  std::vector<fs::path> out;
  for (int e = 1; fs::exists(dir / ("epoch_" + std::to_string(e) + ".ckpt")); ++e)
    out.push_back(dir / ("epoch_" + std::to_string(e) + ".ckpt"));
  if (out.empty()) throw IoError("no epoch_<k>.ckpt files in " + dir.string());
  return out;
}

int do_select_epoch(const Globals& g, const std::string& feat_dir, const std::string& plan_file,
                    const std::string& ft_dir, const std::string& user, std::ostream& out) {
  const auto cfg = g.config();
  const auto set = pipeline::load_attempt_set(feat_dir);
  const auto plan = pipeline::SplitPlan::load(plan_file);
  for (const auto& u : targets(plan, user)) {
    const fs::path dir = fs::path(ft_dir) / u;
    std::vector<nn::VerificationModel> models;
    for (const auto& p : checkpoints_in(dir)) models.push_back(nn::load_verification_model(p));
    std::vector<const nn::VerificationModel*> ptrs;
    for (const auto& m : models) ptrs.push_back(&m);
    const auto sel = pipeline::select_epoch(ptrs, plan, set, u, cfg);
    nlohmann::ordered_json j;
    j["user"] = u;
    j["epoch"] = sel.epoch;
    j["far_per_epoch"] = sel.far_per_epoch;
    write_text(dir / "selection.json", j.dump(1) + "\n");
    out << "  " << u << ": epoch " << sel.epoch << " (FAR_val " << sel.far_per_epoch[sel.epoch - 1] << ")\n";
  }
  out << "select-epoch -> " << ft_dir << "\n";
  return 0;
}

int do_final_test(const Globals& g, const std::string& feat_dir, const std::string& plan_file,
                  const std::string& ft_dir, const std::string& user, std::string out_dir, std::ostream& out) {
  const auto cfg = g.randomized("final-test");
  if (out_dir.empty()) out_dir = ft_dir;
  const auto set = pipeline::load_attempt_set(feat_dir);
  const auto plan = pipeline::SplitPlan::load(plan_file);
  const int split = static_cast<int>(plan.subset_base.size());
  report::UserTable t;
  t.splits = {split};
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& u : targets(plan, user)) {
    const fs::path dir = fs::path(ft_dir) / u;
    int epoch = 0;
    try {
      epoch = nlohmann::json::parse(read_text(dir / "selection.json")).at("epoch").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("selection.json: " + std::string(e.what()));
    }
    const auto model = nn::load_verification_model(dir / ("epoch_" + std::to_string(epoch) + ".ckpt"));
    const auto r = pipeline::final_test(model, plan, set, u, cfg);
    t.users.push_back(u);
    t.far.push_back({report::MeanSd{r.bootstrap.mean, r.bootstrap.stddev}});
    j.push_back({{"user", u},
                 {"epoch", epoch},
                 {"far_mean", r.bootstrap.mean},
                 {"far_sd", r.bootstrap.stddev},
                 {"threshold", r.bootstrap.threshold},
                 {"genuine", r.genuine},
                 {"impostor_pool", r.impostor_pool},
                 {"iterations", cfg.iterations}});
    out << "  " << u << ": FAR(@TAR=" << cfg.tar << ") " << report::format_mean_sd(100 * r.bootstrap.mean,
                                                                                    100 * r.bootstrap.stddev)
        << " %\n";
  }
  write_text(fs::path(out_dir) / "final_test.csv", report::to_csv(t));
  write_text(fs::path(out_dir) / "final_test.json", j.dump(1) + "\n");
  out << "final-test -> " << (fs::path(out_dir) / "final_test.csv").string() << "\n";
  return 0;
}

int do_report(const std::vector<std::string>& inputs, const std::string& format, const std::string& out_file,
              std::ostream& out) {
  if (format != "csv" && format != "text") throw UsageError("--format must be csv or text");
  std::string csv, text;
  std::optional<report::UserTable> users;
  for (const auto& f : inputs) {
    const std::string s = read_text(f);
    const std::string head = s.substr(0, s.find('\n'));
    if (head.starts_with("device,")) {
      const auto t = report::parse_pattern_csv(s);
      csv += report::to_csv(t);
      text += report::to_text(t);
    } else if (head.starts_with("split,")) {
      const auto t = report::parse_split_csv(s);
      csv += report::to_csv(t);
      text += report::to_text(t);
    } else if (head.starts_with("user,split,")) {
      const auto t = report::parse_user_csv(s);
      if (!users) {
        users = t;
        continue;
      }
      // merge rows and columns of several final-test tables
      for (int sp : t.splits)
        if (std::find(users->splits.begin(), users->splits.end(), sp) == users->splits.end()) {
          users->splits.push_back(sp);
          for (auto& row : users->far) row.emplace_back();
        }
      for (std::size_t u = 0; u < t.users.size(); ++u) {
        auto it = std::find(users->users.begin(), users->users.end(), t.users[u]);
        if (it == users->users.end()) {
          users->users.push_back(t.users[u]);
          users->far.emplace_back(users->splits.size());
          it = users->users.end() - 1;
        }
        auto& row = users->far[static_cast<std::size_t>(it - users->users.begin())];
        for (std::size_t s2 = 0; s2 < t.splits.size(); ++s2) {
          const auto c = std::find(users->splits.begin(), users->splits.end(), t.splits[s2]) - users->splits.begin();
          if (t.far[u][s2]) row[static_cast<std::size_t>(c)] = t.far[u][s2];
        }
      }
    } else {
      throw SchemaError(f + ": not a result table");
    }
  }
  if (users) {
    csv += report::to_csv(*users);
    text += report::to_text(*users);
  }
  const std::string& body = format == "csv" ? csv : text;
  if (!out_file.empty()) write_text(out_file, body);
  out << body;
  return 0;
}

int do_plan(const std::string& target_far, const std::string& tar_text, int users, int m, const std::string& format,
            std::ostream& out) {
  eval::ComparisonBudget b;
  b.target_far = eval::parse_rate(target_far);
  b.target_tar = eval::parse_rate(tar_text);
  b.n = users;
  b.m = m;
  b.validate();
  if (format == "json") {
    nlohmann::ordered_json j;
    j["target_far"] = b.target_far;
    j["target_tar"] = b.target_tar;
    j["genuine_required"] = b.genuine_required();
    j["impostor_required"] = b.impostor_required();
    j["users"] = b.n;
    j["attempts_per_user"] = b.attempts_required();
    j["impostor_available"] = b.impostor_available();
    out << j.dump(1) << "\n";
    return 0;
  }
  if (format != "text") throw UsageError("--format must be text or json");
  out << grouped(b.genuine_required()) << " genuine / " << grouped(b.impostor_required()) << " impostor\n";
  out << "rule of 30 at TAR " << b.target_tar << " and FAR " << eval::one_over(b.target_far) << "; " << b.n
      << " users need " << grouped(b.attempts_required()) << " attempts each; " << b.n << " users x " << b.m
      << " give " << grouped(b.impostor_available()) << " impostor comparisons\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"IMU unlock detection and implicit user verification toolkit", "motionid"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_file, "key = value config file");
  app.add_option("--set", g.sets, "override a config key (key=value), repeatable");
  app.add_option("--seed", g.seed, "experiment seed");
  app.add_flag("--replication", g.replication, "refuse randomized commands without an explicit seed");

  int rc = 0;
  std::function<int()> action;

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--kind", sa.kind, "specific | all")->check(CLI::IsMember({"specific", "all"}));
  synth->add_option("--users", sa.users, "number of users");
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_option("--devices", sa.devices, "devices per user (all-motions)");
  synth->add_option("--lifts-per-location", sa.lifts, "lifts per location (specific-motion)");
  synth->add_option("--locations", sa.locations, "locations (specific-motion)");
  synth->add_option("--days", sa.days, "days (all-motions)");
  synth->add_option("--unlocks-per-day", sa.unlocks, "unlocks per day (all-motions)");
  synth->callback([&] { action = [&] { return do_synth(g, sa, out); }; });

  std::string manifest, in_dir, out_dir, plan_file, baseline, user, ft_dir, format = "text";
  auto* pre = app.add_subcommand("preprocess", "extract windows from a dataset");
  pre->require_subcommand(1);
  auto* pre_v = pre->add_subcommand("verify", "verification segments, clustered");
  auto* pre_p = pre->add_subcommand("patterns", "unlock / no-unlock pattern windows");
  for (auto* s : {pre_v, pre_p}) {
    s->add_option("--manifest", manifest, "manifest.json")->required()->check(CLI::ExistingFile);
    s->add_option("--out", out_dir, "output directory")->required();
  }
  pre_v->callback([&] { action = [&] { return do_preprocess_verify(manifest, out_dir, out); }; });
  pre_p->callback([&] { action = [&] { return do_preprocess_patterns(manifest, out_dir, out); }; });

  auto* feat = app.add_subcommand("features", "66-row feature tensors from verification segments");
  feat->add_option("--in", in_dir, "preprocess verify output")->required();
  feat->add_option("--out", out_dir, "output directory")->required();
  feat->callback([&] { action = [&] { return do_features(in_dir, out_dir, out); }; });

  bool shuffle = false;
  auto* train = app.add_subcommand("train", "train a model");
  train->require_subcommand(1);
  auto* train_p = train->add_subcommand("patterns", "unlock pattern classifier");
  train_p->add_option("--in", in_dir, "preprocess patterns output")->required();
  train_p->add_option("--out", out_dir, "output directory")->required();
  train_p->add_flag("--shuffle-labels", shuffle, "permute labels (sanity baseline)");
  train_p->callback([&] { action = [&] { return do_train_patterns(g, in_dir, out_dir, shuffle, out); }; });
  auto* train_b = train->add_subcommand("baseline", "multi-class verification baseline");
  train_b->add_option("--features", in_dir, "features output")->required();
  train_b->add_option("--plan", plan_file, "existing split plan (default: draw one)");
  train_b->add_option("--out", out_dir, "output directory")->required();
  train_b->callback([&] { action = [&] { return do_train_baseline(g, in_dir, plan_file, out_dir, out); }; });

  auto* ft = app.add_subcommand("finetune", "per-user fine-tuning of the baseline");
  ft->add_option("--features", in_dir, "features output")->required();
  ft->add_option("--plan", plan_file, "split plan")->required();
  ft->add_option("--baseline", baseline, "baseline checkpoint")->required();
  ft->add_option("--user", user, "held-out user (default: every test_final user)");
  ft->add_option("--out", out_dir, "output directory")->required();
  ft->callback([&] { action = [&] { return do_finetune(g, in_dir, plan_file, baseline, user, out_dir, out); }; });

  auto* sel = app.add_subcommand("select-epoch", "choose the fine-tune checkpoint on validation FAR");
  sel->add_option("--features", in_dir, "features output")->required();
  sel->add_option("--plan", plan_file, "split plan")->required();
  sel->add_option("--finetune", ft_dir, "finetune output")->required();
  sel->add_option("--user", user, "held-out user (default: every test_final user)");
  sel->callback([&] { action = [&] { return do_select_epoch(g, in_dir, plan_file, ft_dir, user, out); }; });

  auto* fin = app.add_subcommand("final-test", "bootstrap FAR of the selected checkpoints");
  fin->add_option("--features", in_dir, "features output")->required();
  fin->add_option("--plan", plan_file, "split plan")->required();
  fin->add_option("--finetune", ft_dir, "finetune output")->required();
  fin->add_option("--user", user, "held-out user (default: every test_final user)");
  fin->add_option("--out", out_dir, "output directory (default: the finetune directory)");
  fin->callback([&] { action = [&] { return do_final_test(g, in_dir, plan_file, ft_dir, user, out_dir, out); }; });

  std::vector<std::string> inputs;
  std::string report_out;
  auto* rep = app.add_subcommand("report", "render result tables");
  rep->add_option("inputs", inputs, "table CSV files")->required()->check(CLI::ExistingFile);
  rep->add_option("--format", format, "csv | text");
  rep->add_option("--out", report_out, "also write to this file");
  rep->callback([&] { action = [&] { return do_report(inputs, format, report_out, out); }; });

  std::string target_far = "1/50000", tar = "0.9";
  int users = 90, m = 1;
  auto* plan = app.add_subcommand("plan", "rule-of-30 and comparison budget arithmetic");
  plan->add_option("--target-far", target_far, "FAR target, e.g. 1/50000");
  plan->add_option("--tar", tar, "TAR target");
  plan->add_option("--users", users, "users in the comparison budget");
  plan->add_option("--attempts", m, "attempts per user");
  plan->add_option("--format", format, "text | json");
  plan->callback([&] { action = [&] { return do_plan(target_far, tar, users, m, format, out); }; });

  for (auto* s : {synth, pre, pre_v, pre_p, feat, train, train_p, train_b, ft, sel, fin, rep, plan}) s->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    apply_thread_override();
    g.config();  // reject bad config keys for every command
    rc = action ? action() : 1;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace motionid::cli

// lumina: batch front end for training, enhancement, decomposition,
// evaluation, and synthetic-pair generation.
//
// Exit codes: 0 success, 2 usage/config error, 3 data error, 4 model or
// checkpoint error, 5 partial failure (some files in a batch failed).

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>
#include <type_traits>
#include <vector>

#include <CLI11.hpp>

#include "lumina/checkpoint.hpp"
#include "lumina/data.hpp"
#include "lumina/metrics.hpp"
#include "lumina/nets.hpp"
#include "lumina/png_io.hpp"
#include "lumina/train.hpp"
#include "lumina/version.hpp"

namespace fs = std::filesystem;
using namespace lumina;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitModel = 4;
constexpr int kExitPartial = 5;

int thread_budget() {
  if (const char* env = std::getenv("LUMINA_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Ordered key=value record of a resolved run, written alongside outputs.
/// The file doubles as a --config input, so a run can be replayed from its
/// manifest.
class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)) {}

  void set(const std::string& key, const std::string& value) {
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) {
    std::ostringstream os;
    os.precision(17);
    os << value;
    set(key, os.str());
  }
  void set(const std::string& key, int64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, uint64_t value) { set(key, std::to_string(value)); }

  void write(const fs::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
      throw DataError("cannot write run manifest '" + path.string() + "'");
    out << "# lumina run manifest (replay: lumina " << command_
        << " --config " << path.filename().string() << ")\n";
    out << "# command: " << command_ << "\n";
    out << "# tool_version: " << kVersion << "\n";
    for (const auto& [k, v] : entries_) out << k << "=" << v << "\n";
  }

 private:
  std::string command_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Applies a plain key=value config file to a parsed subcommand. Keys mirror
/// the long option names. Command-line flags take precedence: a key is only
/// applied when its option was not given on the command line. Unknown keys are
/// usage errors.
void apply_config(const CLI::App* cmd, const std::string& file,
                  const std::map<std::string, std::function<void(const std::string&)>>& keys) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file '" + file + "'");
  auto trim = [](std::string s) {
    const char* ws = " \t\r\n";
    const size_t a = s.find_first_not_of(ws);
    if (a == std::string::npos) return std::string();
    return s.substr(a, s.find_last_not_of(ws) - a + 1);
  };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(file + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    const auto it = keys.find(key);
    if (it == keys.end())
      throw ConfigError(file + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    const CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt != nullptr && opt->count() > 0) continue;  // flag wins over config
    try {
      it->second(value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError(file + ":" + std::to_string(lineno) + ": bad value '" + value +
                        "' for key '" + key + "'");
    }
  }
}

template <typename T>
std::function<void(const std::string&)> into(T& dest) {
  return [&dest](const std::string& v) {
    size_t used = 0;
    if constexpr (std::is_same_v<T, std::string>) {
      dest = v;
      return;
    } else if constexpr (std::is_same_v<T, double>) {
      dest = std::stod(v, &used);
    } else if constexpr (std::is_same_v<T, uint64_t>) {
      dest = std::stoull(v, &used);
    } else {
      dest = static_cast<T>(std::stoll(v, &used));
    }
    if (used != v.size()) throw std::invalid_argument(v);
  };
}

std::function<void(const std::string&)> into_bool(bool& dest) {
  return [&dest](const std::string& v) {
    if (v == "true" || v == "1") dest = true;
    else if (v == "false" || v == "0") dest = false;
    else throw std::invalid_argument(v);
  };
}

std::function<void(const std::string&)> into_list(std::vector<std::string>& dest) {
  return [&dest](const std::string& v) {
    dest.clear();
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) dest.push_back(part);
  };
}

LossWeights parse_weights(const std::string& text) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      size_t used = 0;
      vals.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError("--weights expects four comma-separated numbers, got '" +
                        text + "'");
    }
  }
  if (vals.size() != 4)
    throw ConfigError("--weights expects exactly four values w0,w1,w2,w3, got '" +
                      text + "'");
  LossWeights w;
  w.w0 = vals[0];
  w.w1 = vals[1];
  w.w2 = vals[2];
  w.w3 = vals[3];
  w.validate();
  return w;
}

AblationSet parse_disable(const std::vector<std::string>& names) {
  AblationSet a;
  for (const std::string& n : names) {
    if (n == "oec") a.oec = true;
    else if (n == "cg") a.cg = true;
    else if (n == "ce") a.ce = true;
    else throw ConfigError("--disable accepts oec, cg, ce; got '" + n + "'");
  }
  return a;
}

std::vector<fs::path> collect_pngs(const fs::path& input) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(input)) {
    files.push_back(input);
  } else if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file() && e.path().extension() == ".png")
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    throw DataError("input '" + input.string() + "' is neither a file nor a directory");
  }
  if (files.empty()) throw DataError("no PNG files under '" + input.string() + "'");
  return files;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, out;
  TrainConfig cfg;
  std::string weights_text = "5,1,1,0.1";
  std::string profile = "default";
  bool lambda_given = false;
};

int run_train(const TrainArgs& args) {
  TrainConfig cfg = args.cfg;
  cfg.weights = parse_weights(args.weights_text);
  // An explicit --lambda (flag or config) beats the profile's value.
  if (!args.lambda_given && args.profile == "lol") cfg.lambda = kLolLambda;
  cfg.validate();

  std::vector<std::string> warnings;
  const std::vector<LowLightPair> pairs = load_pairs(args.data, &warnings);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";

  fs::create_directories(args.out);
  const fs::path out_dir(args.out);
  const int64_t total_steps = static_cast<int64_t>(cfg.epochs) *
                              static_cast<int64_t>(pairs.size());
  std::cout << "training on " << pairs.size() << " pairs, " << cfg.epochs
            << " epochs (" << total_steps << " steps)\n";

  const int64_t report_every = std::max<int64_t>(1, total_steps / 10);
  TrainResult result = train(cfg, pairs, [&](const StepLog& log) {
    if (log.step == 1 || log.step % report_every == 0 || log.step == total_steps)
      std::cout << "step " << log.step << "/" << total_steps << "  loss "
                << log.total << "  lr " << log.lr << "\n";
  });

  checkpoint_save(result.params, out_dir / "model.ckpt");
  write_loss_log(out_dir / "loss_log.tsv", result.log);

  Manifest m("train");
  m.set("data", args.data);
  m.set("out", args.out);
  m.set("epochs", static_cast<int64_t>(cfg.epochs));
  m.set("crop", static_cast<int64_t>(cfg.crop));
  m.set("batch", static_cast<int64_t>(cfg.batch));
  m.set("lr", cfg.lr);
  m.set("lambda", cfg.lambda);
  m.set("weights", args.weights_text);
  m.set("seed", cfg.seed);
  m.set("phi-seed", cfg.phi_seed);
  m.set("clamp-floor", cfg.clamp_floor);
  m.write(out_dir / "run_manifest.txt");

  std::cout << "wrote " << (out_dir / "model.ckpt").string() << ", loss_log.tsv, run_manifest.txt\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EnhanceArgs {
  std::string model, input, output;
  double lambda = kDefaultLambda;
  std::vector<std::string> disable;
  bool dump_intermediates = false;
  bool decompose_mode = false;  // decompose: no I_f, always dump the fields
};

void write_decomposition(const Decomposition<float>& d, const fs::path& dir,
                         const std::string& stem, bool with_output,
                         bool with_fields) {
  if (with_output) write_png(from_tensor(d.I_f), dir / (stem + ".png"));
  if (with_fields) {
    write_png(from_tensor(d.i), dir / (stem + "_i.png"));
    write_png(from_tensor(d.R), dir / (stem + "_R.png"));
    write_png(from_tensor(d.L), dir / (stem + "_L.png"));
    write_png(from_tensor(d.R_f), dir / (stem + "_Rf.png"));
    write_png(from_tensor(d.L_f), dir / (stem + "_Lf.png"));
  }
}

int run_enhance(const EnhanceArgs& args) {
  const AblationSet ablate = parse_disable(args.disable);
  if (!(args.lambda > 0.0) || args.lambda > 1.0)
    throw ConfigError("--lambda must lie in (0, 1], got " + std::to_string(args.lambda));
  const ModelParams<float> params = checkpoint_load(args.model);

  const std::vector<fs::path> files = collect_pngs(args.input);
  const bool single_file_out =
      files.size() == 1 && fs::path(args.output).extension() == ".png";
  const fs::path out_dir =
      single_file_out ? fs::path(args.output).parent_path() : fs::path(args.output);
  if (!out_dir.empty()) fs::create_directories(out_dir);

  std::vector<std::string> errors(files.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t idx = next.fetch_add(1); idx < files.size(); idx = next.fetch_add(1)) {
      const fs::path& file = files[idx];
      try {
        const Image img = read_png(file);
        const Tensor<float> t = to_tensor<float>(img);
        const Decomposition<float> d = enhance(params, t, args.lambda, ablate);
        const std::string stem = single_file_out
                                     ? fs::path(args.output).stem().string()
                                     : file.stem().string();
        const fs::path dir = out_dir.empty() ? fs::path(".") : out_dir;
        write_decomposition(d, dir, stem, !args.decompose_mode,
                            args.dump_intermediates || args.decompose_mode);
      } catch (const Error& e) {
        errors[idx] = e.what();
      }
    }
  };
  const int threads = std::min<int>(thread_budget(), static_cast<int>(files.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  int failed = 0;
  for (size_t i = 0; i < files.size(); ++i)
    if (!errors[i].empty()) {
      ++failed;
      std::cerr << "error: " << files[i].string() << ": " << errors[i] << "\n";
    }

  Manifest m(args.decompose_mode ? "decompose" : "enhance");
  m.set("model", args.model);
  m.set("input", args.input);
  m.set("output", args.output);
  if (!args.decompose_mode) m.set("lambda", args.lambda);
  if (!args.disable.empty()) m.set("disable", join(args.disable, ","));
  if (args.dump_intermediates && !args.decompose_mode)
    m.set("dump-intermediates", std::string("true"));
  m.write((out_dir.empty() ? fs::path(".") : out_dir) / "run_manifest.txt");

  std::cout << (files.size() - static_cast<size_t>(failed)) << "/" << files.size()
            << " images processed into '" << args.output << "'\n";
  return failed == 0 ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string enhanced, reference, report;
};

int run_evaluate(const EvaluateArgs& args) {
  const MetricsReport report = evaluate_dir(args.enhanced, args.reference);

  const fs::path base(args.report);
  if (!base.parent_path().empty()) fs::create_directories(base.parent_path());
  const fs::path text_path = base.string() + ".txt";
  const fs::path tsv_path = base.string() + ".tsv";
  {
    std::ofstream t(text_path, std::ios::trunc);
    t << report_text(report);
    std::ofstream s(tsv_path, std::ios::trunc);
    s << report_structured(report);
    if (!t || !s) throw DataError("failed to write report files under '" + args.report + "'");
  }

  Manifest m("evaluate");
  m.set("enhanced", args.enhanced);
  m.set("reference", args.reference);
  m.set("report", args.report);
  m.write(base.parent_path().empty()
              ? fs::path("run_manifest.txt")
              : base.parent_path() / "run_manifest.txt");

  for (const std::string& w : report.warnings) std::cerr << "warning: " << w << "\n";
  for (const std::string& e : report.file_errors) std::cerr << "error: " << e << "\n";
  if (report.empty()) {
    std::cerr << "no image pairs to evaluate\n";
    return kExitData;
  }
  std::cout << "images: " << report.per_image.size() << "  mean_psnr: "
            << report.mean_psnr << "  mean_ssim: " << report.mean_ssim << "\n";
  std::cout << "wrote " << text_path.string() << " and " << tsv_path.string() << "\n";
  return report.file_errors.empty() ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string base, out;
  int count = 4;
  uint64_t seed = 0;
  SynthParams params;
};

int run_synth(const SynthArgs& args) {
  std::vector<Image> bases;
  for (const fs::path& p : collect_pngs(args.base)) bases.push_back(read_png(p));

  std::vector<std::string> warnings;
  const std::vector<LowLightPair> pairs =
      synth_pairs(bases, args.count, args.seed, args.params, &warnings);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";

  const fs::path out_dir(args.out);
  fs::create_directories(out_dir);
  for (const LowLightPair& pair : pairs) {
    const fs::path dir = out_dir / pair.id;
    fs::create_directories(dir);
    write_png(from_tensor(pair.I1), dir / "a.png");
    write_png(from_tensor(pair.I2), dir / "b.png");
  }

  Manifest m("synth");
  m.set("base", args.base);
  m.set("out", args.out);
  m.set("count", static_cast<int64_t>(args.count));
  m.set("seed", args.seed);
  m.write(out_dir / "run_manifest.txt");

  std::cout << "wrote " << pairs.size() << " pair directories under '" << args.out << "'\n";
  return kExitOk;
}

}  // namespace

void require_set(const std::string& value, const char* flag) {
  if (value.empty())
    throw ConfigError(std::string(flag) + " is required (flag or config key)");
}

int main(int argc, char** argv) {
  CLI::App app{"LUMINA-Net low-light image enhancement"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  TrainArgs train_args;
  std::string train_config;
  CLI::App* t = app.add_subcommand("train", "Train a model on paired low-light images");
  t->add_option("--config", train_config, "Key=value config file (flags take precedence)");
  t->add_option("--data", train_args.data, "Directory of pair subdirectories (a.png/b.png); required");
  t->add_option("--out", train_args.out, "Output directory for checkpoint, log, manifest; required");
  t->add_option("--epochs", train_args.cfg.epochs, "Training epochs")->capture_default_str();
  t->add_option("--crop", train_args.cfg.crop, "Square crop size")->capture_default_str();
  t->add_option("--batch", train_args.cfg.batch, "Batch size (only 1 supported)")->capture_default_str();
  t->add_option("--lr", train_args.cfg.lr, "Initial learning rate")->capture_default_str();
  auto* lambda_opt =
      t->add_option("--lambda", train_args.cfg.lambda, "Illumination correction factor")->capture_default_str();
  t->add_option("--weights", train_args.weights_text, "Loss weights w0,w1,w2,w3")->capture_default_str();
  t->add_option("--profile", train_args.profile, "Config profile")->capture_default_str()
      ->check(CLI::IsMember({"default", "lol"}));
  t->add_option("--seed", train_args.cfg.seed, "Training seed")->capture_default_str();
  t->add_option("--phi-seed", train_args.cfg.phi_seed, "Perceptual feature stack seed")->capture_default_str();
  t->add_option("--clamp-floor", train_args.cfg.clamp_floor, "Illumination clamp floor")->capture_default_str();

  EnhanceArgs enhance_args;
  std::string enhance_config;
  CLI::App* e = app.add_subcommand("enhance", "Enhance a PNG file or directory");
  e->add_option("--config", enhance_config, "Key=value config file (flags take precedence)");
  e->add_option("--model", enhance_args.model, "Checkpoint path; required");
  e->add_option("--input", enhance_args.input, "PNG file or directory; required");
  e->add_option("--output", enhance_args.output, "Output PNG path or directory; required");
  e->add_option("--lambda", enhance_args.lambda, "Illumination correction factor")->capture_default_str();
  e->add_option("--disable", enhance_args.disable, "Disable modules: oec, cg, ce (repeatable)");
  e->add_flag("--dump-intermediates", enhance_args.dump_intermediates,
              "Also write i, R, L, R_f, L_f maps");

  EnhanceArgs decompose_args;
  decompose_args.decompose_mode = true;
  std::string decompose_config;
  CLI::App* d = app.add_subcommand("decompose",
                                   "Write the Retinex decomposition maps of images");
  d->add_option("--config", decompose_config, "Key=value config file (flags take precedence)");
  d->add_option("--model", decompose_args.model, "Checkpoint path; required");
  d->add_option("--input", decompose_args.input, "PNG file or directory; required");
  d->add_option("--output", decompose_args.output, "Output directory; required");
  d->add_option("--disable", decompose_args.disable, "Disable modules: cg, ce (repeatable)");

  EvaluateArgs eval_args;
  std::string eval_config;
  CLI::App* v = app.add_subcommand("evaluate", "PSNR/SSIM report over paired directories");
  v->add_option("--config", eval_config, "Key=value config file (flags take precedence)");
  v->add_option("--enhanced", eval_args.enhanced, "Directory of enhanced images; required");
  v->add_option("--reference", eval_args.reference, "Directory of reference images; required");
  v->add_option("--report", eval_args.report, "Report base path (writes .txt and .tsv); required");

  SynthArgs synth_args;
  std::string synth_config;
  CLI::App* s = app.add_subcommand("synth", "Generate synthetic low-light pairs");
  s->add_option("--config", synth_config, "Key=value config file (flags take precedence)");
  s->add_option("--base", synth_args.base, "Base PNG file or directory; required");
  s->add_option("--out", synth_args.out, "Output directory for pair subdirectories; required");
  s->add_option("--count", synth_args.count, "Number of pairs")->capture_default_str();
  s->add_option("--seed", synth_args.seed, "Generator seed")->capture_default_str();
  s->add_option("--noise-sigma", synth_args.params.noise_sigma,
                "Per-branch Gaussian noise sigma")->capture_default_str();
  s->add_option("--min-size", synth_args.params.min_size,
                "Minimum base image dimension")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int rc = app.exit(ex);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand(t)) {
      train_args.lambda_given = lambda_opt->count() > 0;
      if (!train_config.empty())
        apply_config(t, train_config,
                     {{"data", into(train_args.data)},
                      {"out", into(train_args.out)},
                      {"epochs", into(train_args.cfg.epochs)},
                      {"crop", into(train_args.cfg.crop)},
                      {"batch", into(train_args.cfg.batch)},
                      {"lr", into(train_args.cfg.lr)},
                      {"lambda",
                       [&](const std::string& val) {
                         into(train_args.cfg.lambda)(val);
                         train_args.lambda_given = true;
                       }},
                      {"weights", into(train_args.weights_text)},
                      {"profile",
                       [&](const std::string& val) {
                         if (val != "default" && val != "lol")
                           throw ConfigError("profile must be default or lol, got '" + val + "'");
                         train_args.profile = val;
                       }},
                      {"seed", into(train_args.cfg.seed)},
                      {"phi-seed", into(train_args.cfg.phi_seed)},
                      {"clamp-floor", into(train_args.cfg.clamp_floor)}});
      require_set(train_args.data, "--data");
      require_set(train_args.out, "--out");
      return run_train(train_args);
    }
    if (app.got_subcommand(e) || app.got_subcommand(d)) {
      EnhanceArgs& args = app.got_subcommand(e) ? enhance_args : decompose_args;
      const std::string& cfg_file = app.got_subcommand(e) ? enhance_config : decompose_config;
      const CLI::App* cmd = app.got_subcommand(e) ? e : d;
      if (!cfg_file.empty())
        apply_config(cmd, cfg_file,
                     {{"model", into(args.model)},
                      {"input", into(args.input)},
                      {"output", into(args.output)},
                      {"lambda", into(args.lambda)},
                      {"disable", into_list(args.disable)},
                      {"dump-intermediates", into_bool(args.dump_intermediates)}});
      require_set(args.model, "--model");
      require_set(args.input, "--input");
      require_set(args.output, "--output");
      return run_enhance(args);
    }
    if (app.got_subcommand(v)) {
      if (!eval_config.empty())
        apply_config(v, eval_config,
                     {{"enhanced", into(eval_args.enhanced)},
                      {"reference", into(eval_args.reference)},
                      {"report", into(eval_args.report)}});
      require_set(eval_args.enhanced, "--enhanced");
      require_set(eval_args.reference, "--reference");
      require_set(eval_args.report, "--report");
      return run_evaluate(eval_args);
    }
    if (app.got_subcommand(s)) {
      if (!synth_config.empty())
        apply_config(s, synth_config,
                     {{"base", into(synth_args.base)},
                      {"out", into(synth_args.out)},
                      {"count", into(synth_args.count)},
                      {"seed", into(synth_args.seed)},
                      {"noise-sigma", into(synth_args.params.noise_sigma)},
                      {"min-size", into(synth_args.params.min_size)}});
      require_set(synth_args.base, "--base");
      require_set(synth_args.out, "--out");
      return run_synth(synth_args);
    }
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& ex) {
    std::cerr << "model error: " << ex.what() << "\n";
    return kExitModel;
  } catch (const TrainError& ex) {
    std::cerr << "training error: " << ex.what() << "\n";
    return kExitModel;
  } catch (const DataError& ex) {
    std::cerr << "data error: " << ex.what() << "\n";
    return kExitData;
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitModel;
  }
  return kExitUsage;
}

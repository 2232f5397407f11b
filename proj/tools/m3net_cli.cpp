// m3net command-line front end: train, infer, eval, ablate, gradcheck, gen-data.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "m3net/checkpoint.hpp"
#include "m3net/harness.hpp"

namespace fs = std::filesystem;
using namespace m3net;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> synthetic;
  std::string data;
  std::string out;
};

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.synthetic) cfg.data.synthetic = *c.synthetic;
  cfg.validate();
  return cfg;
}

std::vector<Sample> resolve_dataset(const Common& c, const RunConfig& cfg) {
  if (!c.data.empty()) return load_dataset(c.data);
  if (cfg.data.synthetic > 0) return gen_synthetic(cfg.data.synthetic, cfg.data.image_size, cfg.data.image_size, cfg.seed);
  throw DataError("no dataset: pass --data <dir> or --synthetic <n>");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

int cmd_train(const Common& c) {
  const RunConfig cfg = resolve_config(c);
  if (c.out.empty()) throw ConfigError("train: --out is required");
  const fs::path out = c.out;
  fs::create_directories(out);
  const Split split = split_dataset(resolve_dataset(c, cfg), cfg.data.val_fraction);
  Rng irng = init_rng(cfg.seed);
  Model model(cfg.model, irng);
  const std::string cfg_text = serialize_config(cfg);
  write_text(out / "config.conf", cfg_text);
  std::string log_text = std::string(kLogHeader) + "\n";
  const ParameterList params = model.parameters();
  Rng trng = train_rng(cfg.seed);
  std::fprintf(stderr, "train: %zu train / %zu val samples, %zu epochs\n", split.train.size(), split.val.size(),
               cfg.optim.epochs);
  train_model(model, cfg, split, trng, [&](const EpochLog& row, std::uint32_t step) {
    log_text += format_log_row(row) + "\n";
    write_text(out / "train_log.csv", log_text);
    save_checkpoint(Checkpoint::from_parameters(params, cfg_text, step), out / "checkpoint.m3nt");
    std::fprintf(stderr, "epoch %zu loss %.6f val_mae %.6f\n", row.epoch, row.loss, row.val_mae);
  });
  return kExitOk;
}

Model model_from_checkpoint(const fs::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  RunConfig cfg = parse_config(ck.config_text);
  cfg.model.validate();
  Rng rng = init_rng(cfg.seed);
  Model model(cfg.model, rng);
  ck.apply_to(model.parameters());
  return model;
}

int cmd_infer(const std::string& checkpoint, const std::string& images, const std::string& out, bool all_levels) {
  const Model model = model_from_checkpoint(checkpoint);
  const std::vector<Sample> inputs = load_images(images);
  if (inputs.empty()) throw DataError("infer: no .ppm images in " + images);
  const std::size_t n = infer_to_dir(model, inputs, out, all_levels);
  std::fprintf(stderr, "infer: wrote %zu predictions to %s\n", n, out.c_str());
  return kExitOk;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& out) {
  const fs::path gt_dir = fs::is_directory(fs::path(gt) / "masks") ? fs::path(gt) / "masks" : fs::path(gt);
  const DirReport rep = evaluate_dirs(pred, gt_dir);
  const fs::path csv = out;
  write_report_csv(rep, csv);
  fs::path curves = csv;
  curves.replace_filename(csv.stem().string() + "_curves" + csv.extension().string());
  write_curves_csv(rep.mean.curves, curves);
  for (const std::string& m : rep.missing) std::fprintf(stderr, "warning: no pair for '%s'\n", m.c_str());
  std::fprintf(stderr, "eval: %zu images, %zu warnings; mae %.4f e %.4f s %.4f wf %.4f\n", rep.images.size(),
               rep.warnings(), rep.mean.mae, rep.mean.e_mean, rep.mean.s_measure, rep.mean.wf);
  return kExitOk;
}

int cmd_ablate(const Common& c, const std::string& axis, const std::vector<std::string>& values_in) {
  const RunConfig cfg = resolve_config(c);
  if (c.out.empty()) throw ConfigError("ablate: --out <csv> is required");
  const std::vector<std::string> values = values_in.empty() ? axis_values(axis) : values_in;
  for (const std::string& v : values) apply_axis(cfg, axis, v);
  const Split split = split_dataset(resolve_dataset(c, cfg), cfg.data.val_fraction);
  std::string text = std::string(kAblationHeader) + "\n";
  for (const std::string& v : values) {
    for (const AblationRow& row : ablate(cfg, axis, split, {v})) {
      text += format_ablation_row(row) + "\n";
      std::fprintf(stderr, "%s\n", format_ablation_row(row).c_str());
    }
    write_text(c.out, text);
  }
  return kExitOk;
}

int cmd_gradcheck(const std::string& scope, std::size_t seeds) {
  std::vector<std::string> scopes = scope == "all" ? std::vector<std::string>{"ops", "blocks", "model"}
                                                   : std::vector<std::string>{scope};
  bool ok = true;
  for (const std::string& s : scopes) {
    for (const GradCheckLine& l : run_gradcheck_suite(s, seeds)) {
      std::printf("%s %-6s %-28s seed=%llu err=%.3e tol=%.0e\n", l.pass() ? "PASS" : "FAIL", l.scope.c_str(),
                  l.name.c_str(), static_cast<unsigned long long>(l.seed), l.error, l.threshold);
      ok = ok && l.pass();
    }
  }
  return ok ? kExitOk : kExitNumerical;
}

int cmd_gen_data(const Common& c) {
  const RunConfig cfg = resolve_config(c);
  if (c.out.empty()) throw ConfigError("gen-data: --out is required");
  if (cfg.data.synthetic == 0) throw ConfigError("gen-data: --synthetic <n> is required");
  save_dataset(gen_synthetic(cfg.data.synthetic, cfg.data.image_size, cfg.data.image_size, cfg.seed), c.out);
  std::fprintf(stderr, "gen-data: wrote %zu samples to %s\n", cfg.data.synthetic, c.out.c_str());
  return kExitOk;
}

void add_common(CLI::App* sub, Common& c, bool with_data) {
  sub->add_option("--config", c.config, "Config file (key = value lines)");
  sub->add_option("--seed", c.seed, "Override the config seed");
  sub->add_option("--synthetic", c.synthetic, "Generate this many synthetic samples");
  if (with_data) sub->add_option("--data", c.data, "Dataset root with images/ and masks/");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"m3net: multilevel, mixed and multistage attention for salient object detection"};
  app.require_subcommand(1);

  Common train_c, ablate_c, gen_c;
  auto* train = app.add_subcommand("train", "Train on a dataset or synthetic data");
  add_common(train, train_c, true);
  train->add_option("--out", train_c.out, "Output directory")->required();

  std::string ckpt, images, infer_out;
  bool all_levels = false;
  auto* infer = app.add_subcommand("infer", "Write saliency maps for a directory of images");
  infer->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  infer->add_option("--images", images, "Directory of .ppm images (or a dataset root)")->required();
  infer->add_option("--out", infer_out, "Output directory for .pgm maps")->required();
  infer->add_flag("--all-levels", all_levels, "Also write every supervised level");

  std::string pred_dir, gt_dir, eval_out;
  auto* eval = app.add_subcommand("eval", "Score predictions against ground-truth masks");
  eval->add_option("--pred", pred_dir, "Prediction directory")->required();
  eval->add_option("--gt", gt_dir, "Ground-truth directory (or dataset root)")->required();
  eval->add_option("--out", eval_out, "Report CSV path")->required();

  std::string axis;
  std::vector<std::string> values;
  auto* abl = app.add_subcommand("ablate", "Train and score once per value of one axis");
  add_common(abl, ablate_c, true);
  abl->add_option("--axis", axis, "across_levels | interaction | window | upsample")->required();
  abl->add_option("--values", values, "Subset of axis values")->delimiter(',');
  abl->add_option("--out", ablate_c.out, "Result CSV path")->required();

  std::string scope = "all";
  std::size_t seeds = 5;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--scope", scope, "ops | blocks | model | all");
  gc->add_option("--seeds", seeds, "Seeds per case");

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset");
  add_common(gen, gen_c, false);
  gen->add_option("--out", gen_c.out, "Dataset root")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_c);
    if (*infer) return cmd_infer(ckpt, images, infer_out, all_levels);
    if (*eval) return cmd_eval(pred_dir, gt_dir, eval_out);
    if (*abl) return cmd_ablate(ablate_c, axis, values);
    if (*gc) return cmd_gradcheck(scope, seeds);
    if (*gen) return cmd_gen_data(gen_c);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kExitData;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumerical;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}

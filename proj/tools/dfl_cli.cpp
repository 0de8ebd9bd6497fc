// dfl: discriminative feature localization workbench.
//
// Subcommands: synth, train-predictor, train-localizer, sweep, ci, heatmap,
// oracle, arch-sweep. Configuration comes from a TOML file; a handful of
// flags override file values. Every artifact-producing run writes a
// manifest.json last, so its presence signals completion.
//
// Exit codes: 0 ok, 2 config/data error, 3 oracle tie, 4 numerical
// divergence, 5 target unreachable under --strict.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <thread>

#include "dfl/checkpoint.hpp"
#include "dfl/metrics.hpp"
#include "dfl/oracles.hpp"
#include "dfl/ppm.hpp"
#include "dfl/synth.hpp"
#include "dfl/toml.hpp"
#include "dfl/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dfl;

namespace {

constexpr const char* kVersion = "0.2.0";

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

class Manifest {
 public:
  Manifest(std::string command, std::string config_path, std::uint64_t seed)
      : command_(std::move(command)),
        config_path_(std::move(config_path)),
        seed_(seed),
        start_(std::chrono::steady_clock::now()) {}

  void add_artifact(const std::string& path) { artifacts_.push_back(path); }
  void add_timing(const std::string& label, double seconds) {
    timings_[label] = seconds;
  }

  void write(const std::string& out_dir) {
    json j;
    j["tool_version"] = kVersion;
    j["command"] = command_;
    j["config"] = config_path_;
    j["seed"] = seed_;
    j["artifacts"] = artifacts_;
    auto total = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                               start_)
                     .count();
    timings_["total"] = total;
    j["wall_seconds"] = timings_;
    std::ofstream f(fs::path(out_dir) / "manifest.json");
    if (!f) throw DataError("cannot write manifest in " + out_dir);
    f << j.dump(2) << "\n";
  }

 private:
  std::string command_;
  std::string config_path_;
  std::uint64_t seed_;
  std::vector<std::string> artifacts_;
  std::map<std::string, double> timings_;
  std::chrono::steady_clock::time_point start_;
};

void write_text(const std::string& path, const std::string& text,
                Manifest* manifest = nullptr) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  f << text;
  if (!text.empty() && text.back() != '\n') f << "\n";
  if (manifest) manifest->add_artifact(path);
}

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

std::uint64_t resolve_seed(const TomlDoc& doc, long flag_seed) {
  if (flag_seed >= 0) return static_cast<std::uint64_t>(flag_seed);
  if (const char* env = std::getenv("DFL_SEED")) {
    return static_cast<std::uint64_t>(std::stoull(env));
  }
  return static_cast<std::uint64_t>(doc.get_int("", "seed", 1));
}

struct LoadedData {
  Dataset train;
  Dataset test;
};

Dataset load_raw_dataset(const TomlDoc& doc, std::uint64_t seed) {
  std::string kind = doc.get_string("dataset", "kind", "");
  if (kind.empty()) throw ConfigError("[dataset].kind is required");
  std::uint64_t data_seed =
      static_cast<std::uint64_t>(doc.get_int("dataset", "data_seed",
                                             static_cast<long>(seed)));
  if (kind == "synth-digits") {
    auto n = static_cast<std::size_t>(doc.get_int("dataset", "n", 1500));
    return synth_digits(n, data_seed);
  }
  if (kind == "synth-sequences") {
    auto n = static_cast<std::size_t>(doc.get_int("dataset", "n", 1000));
    auto len = static_cast<std::size_t>(doc.get_int("dataset", "length", 64));
    return synth_sequences(n, len, data_seed);
  }
  if (kind == "synth-tabular") {
    auto n = static_cast<std::size_t>(doc.get_int("dataset", "n", 4000));
    auto p = static_cast<std::size_t>(doc.get_int("dataset", "p", 20));
    auto inf = static_cast<std::size_t>(doc.get_int("dataset", "informative", 4));
    return synth_tabular(n, p, inf, data_seed);
  }
  if (kind == "idx") {
    std::string images = doc.get_string("dataset", "images", "");
    std::string labels = doc.get_string("dataset", "labels", "");
    if (images.empty() || labels.empty()) {
      throw ConfigError("[dataset] idx needs images and labels paths");
    }
    return load_idx_dataset(images, labels);
  }
  if (kind == "csv") {
    std::string path = doc.get_string("dataset", "path", "");
    if (path.empty()) throw ConfigError("[dataset] csv needs a path");
    long label_col = doc.get_int("dataset", "label_column", -1);
    bool header = doc.get_bool("dataset", "header", false);
    return load_csv_dataset(path, label_col, /*rescale=*/false, header);
  }
  throw ConfigError("unknown [dataset].kind: " + kind);
}

LoadedData load_dataset(const TomlDoc& doc, std::uint64_t seed) {
  Dataset all = load_raw_dataset(doc, seed);
  std::vector<long> keep = doc.get_ints("dataset", "keep_classes");
  if (!keep.empty()) {
    std::vector<int> keep_int(keep.begin(), keep.end());
    bool relabel = doc.get_bool("dataset", "relabel", true);
    all = filter_classes(all, keep_int, relabel);
  }
  double tf = doc.get_double("dataset", "test_fraction", 0.25);
  if (tf <= 0.0 || tf >= 1.0) {
    throw ConfigError("[dataset].test_fraction must lie in (0,1)");
  }
  auto parts = split(all, {1.0 - tf, tf}, mix_seed(seed, 0x5711));
  LoadedData data{std::move(parts[0]), std::move(parts[1])};
  // test rescaling reuses train statistics: the test sample must stay
  // independent of the scale fit
  if (doc.get_string("dataset", "kind", "") == "csv" &&
      doc.get_bool("dataset", "rescale", true)) {
    RescaleStats stats = compute_rescale_stats(data.train);
    data.train = apply_rescale(data.train, stats);
    data.test = apply_rescale(data.test, stats);
  }
  data.train.validate_feature_range();
  data.test.validate_feature_range();
  return data;
}

TrainConfig train_config_from(const TomlDoc& doc, const std::string& section,
                              std::uint64_t seed, bool localizer) {
  TrainConfig cfg;
  cfg.optimizer = optimizer_kind_from_string(
      doc.get_string(section, "optimizer", localizer ? "sgd" : "adam"));
  cfg.learning_rate =
      doc.get_double(section, "learning_rate", localizer ? 0.0 : 0.001);
  cfg.momentum = doc.get_double(section, "momentum", 0.0);
  cfg.weight_decay = doc.get_double(section, "weight_decay", 0.0);
  cfg.max_epochs =
      static_cast<int>(doc.get_int(section, "max_epochs", localizer ? 60 : 60));
  cfg.batch_size = static_cast<int>(doc.get_int(section, "batch_size", 64));
  cfg.validation_fraction = doc.get_double(section, "validation_fraction", 0.2);
  cfg.early_stop_patience = static_cast<int>(
      doc.get_int(section, "early_stop_patience", localizer ? 15 : 10));
  cfg.lr_reduce_factor = doc.get_double(section, "lr_reduce_factor", 0.382);
  cfg.lr_reduce_patience =
      static_cast<int>(doc.get_int(section, "lr_reduce_patience", 5));
  cfg.seed = seed;
  return cfg;
}

CaeConfig cae_config_from(const TomlDoc& doc, const Shape& input_shape) {
  CaeConfig cfg;
  if (input_shape.size() == 1) {
    cfg = CaeConfig::default_1d(input_shape[0]);
  } else if (input_shape.size() == 2) {
    cfg = CaeConfig::default_2d(input_shape[0], input_shape[1]);
  } else {
    throw ConfigError("localizer supports 1-d and 2-d feature shapes");
  }
  if (doc.has("localizer", "encoder")) cfg.encoder = doc.get_pairs("localizer", "encoder");
  if (doc.has("localizer", "decoder")) cfg.decoder = doc.get_pairs("localizer", "decoder");
  if (doc.has("localizer", "hidden")) {
    cfg.hidden.clear();
    for (long w : doc.get_ints("localizer", "hidden")) {
      cfg.hidden.push_back(static_cast<std::size_t>(w));
    }
  }
  cfg.activation = activation_kind_from_string(
      doc.get_string("localizer", "activation", "trelu-softmax"));
  cfg.weight_norm = doc.get_bool("localizer", "weight_norm", true);
  return cfg;
}

// Named architecture shorthand: "cae:C:K", "mlp:W", "default".
CaeConfig make_named_config(const std::string& name, const Shape& input_shape) {
  auto split_name = [](const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      std::size_t colon = s.find(':', start);
      parts.push_back(s.substr(start, colon - start));
      if (colon == std::string::npos) break;
      start = colon + 1;
    }
    return parts;
  };
  auto parts = split_name(name);
  const std::size_t flat = shape_numel(input_shape);
  if (parts[0] == "default") {
    return input_shape.size() == 2
               ? CaeConfig::default_2d(input_shape[0], input_shape[1])
               : CaeConfig::default_1d(flat);
  }
  if (parts[0] == "cae") {
    if (parts.size() != 3) throw ConfigError("expected cae:<filters>:<size>");
    auto c = static_cast<std::size_t>(std::stoul(parts[1]));
    auto k = static_cast<std::size_t>(std::stoul(parts[2]));
    if (input_shape.size() == 2) {
      CaeConfig cfg;
      cfg.input_shape = input_shape;
      cfg.encoder = {{c, k}, {c / 2, k}};
      cfg.decoder = {{c / 2, k}, {c, k}};
      return cfg;
    }
    return CaeConfig::cae_1d(flat, c, k);
  }
  if (parts[0] == "mlp") {
    if (parts.size() != 2) throw ConfigError("expected mlp:<width>");
    CaeConfig cfg = CaeConfig::mlp_1d(flat, std::stoul(parts[1]));
    cfg.input_shape = input_shape;
    return cfg;
  }
  throw ConfigError("unknown architecture name: " + name);
}

Predictor predictor_from_config(const TomlDoc& doc, const LoadedData& data,
                                std::uint64_t seed, const std::string& out_dir,
                                Manifest* manifest) {
  std::string checkpoint = doc.get_string("predictor", "checkpoint", "");
  std::string spec_path = doc.get_string("predictor", "spec", "");
  if (!checkpoint.empty()) {
    if (spec_path.empty()) spec_path = checkpoint + ".json";
    return Predictor::load(checkpoint, spec_path);
  }
  std::string preset = doc.get_string("predictor", "preset", "");
  if (preset.empty()) {
    preset = data.train.feature_shape().size() == 2 ? "image-cnn" : "mlp";
  }
  LossKind loss = loss_kind_from_string(
      doc.get_string("predictor", "loss", "cross-entropy"));
  std::size_t outputs = loss == LossKind::CrossEntropy
                            ? static_cast<std::size_t>(data.train.num_classes())
                            : 1;
  NetworkSpec spec = preset_network(preset, data.train.feature_shape(), outputs);
  TrainConfig cfg = train_config_from(doc, "train_predictor", seed, false);
  double l1 = doc.get_double("predictor", "l1_weight", 0.001);
  // optionally fit d on a subsample of the train split (the localizer still
  // sees the full split)
  double sub = doc.get_double("predictor", "train_subsample", 1.0);
  Dataset fit_data = data.train;
  if (sub < 1.0) {
    fit_data = split(data.train, {sub, 1.0 - sub}, mix_seed(seed, 0xf17))[0];
  }
  auto t0 = std::chrono::steady_clock::now();
  Predictor d = train_predictor(spec, loss, fit_data, cfg, l1);
  if (manifest) {
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                  .count();
    manifest->add_timing("train_predictor", dt);
    std::string base = (fs::path(out_dir) / "predictor").string();
    d.save(base + ".dfl", base + ".json");
    manifest->add_artifact(base + ".dfl");
    manifest->add_artifact(base + ".json");
  }
  return d;
}

void export_heatmaps(const Localizer& loc, const Dataset& data,
                     const std::vector<std::size_t>& indices,
                     const std::string& out_dir, const std::string& stem,
                     const std::string& format, Manifest* manifest) {
  const Shape fshape = data.feature_shape();
  for (std::size_t idx : indices) {
    if (idx >= data.size()) {
      throw DataError("heatmap instance index " + std::to_string(idx) +
                      " out of range for dataset of size " +
                      std::to_string(data.size()));
    }
    Tensor x = data.instance(idx);
    LocalizeResult r = loc.localize(x);
    double pi_sum = r.pi.sum();
    if (pi_sum > loc.tau() + 1e-9) {
      throw DataError("exported pi exceeds the budget: " + std::to_string(pi_sum));
    }
    std::string base =
        (fs::path(out_dir) / (stem + "_i" + std::to_string(idx))).string();
    json pj;
    pj["instance"] = idx;
    pj["tau"] = loc.tau();
    pj["pi_sum"] = pi_sum;
    pj["pi"] = std::vector<double>(r.pi.data(), r.pi.data() + r.pi.numel());
    bool image = fshape.size() == 2;
    if (image && format != "json") {
      Shape img{fshape[0], fshape[1]};
      write_heatmap_ppm(base + ".ppm", x.reshaped(img), r.pi.reshaped(img));
      if (manifest) manifest->add_artifact(base + ".ppm");
    }
    if (!image) {
      pj["signal"] = std::vector<double>(x.data(), x.data() + x.numel());
    }
    write_text(base + ".json", pj.dump(2), manifest);
  }
}

std::vector<std::size_t> heatmap_indices(const TomlDoc& doc) {
  std::vector<std::size_t> out;
  for (long v : doc.get_ints("sweep", "heatmap_instances")) {
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) out = {0, 1, 2};
  return out;
}

void print_report_table(const TauSweepResult& result) {
  std::cout << std::left << std::setw(8) << "tau" << std::setw(24)
            << "activity L1-norm J(.)" << std::setw(12) << "R^2" << std::setw(24)
            << "CI" << "\n";
  std::cout << std::string(66, '-') << "\n";
  for (const auto& cell : result.cells) {
    std::ostringstream ci;
    ci << "[" << std::fixed << std::setprecision(4) << cell.report.ci_lower
       << ", " << cell.report.ci_upper << "]";
    std::cout << std::left << std::fixed << std::setprecision(3) << std::setw(8)
              << cell.report.tau << std::setw(24) << std::setprecision(4)
              << cell.report.empirical_j << std::setw(12) << std::setprecision(4)
              << cell.report.point_estimate << std::setw(24) << ci.str() << "\n";
  }
  if (result.selected_tau) {
    std::cout << "selected tau = " << *result.selected_tau << "\n";
  } else {
    std::cout << "target R^2 " << result.target_r2
              << " not reached on this grid\n";
  }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const std::string& kind, std::size_t n, std::size_t length,
              std::size_t p, std::size_t informative, std::uint64_t seed,
              const std::string& out_dir) {
  fs::create_directories(out_dir);
  Manifest manifest("synth", "", seed);
  if (kind == "digits") {
    Dataset digits = synth_digits(n, seed);
    std::string imgs = (fs::path(out_dir) / "digits-images.idx").string();
    std::string labels = (fs::path(out_dir) / "digits-labels.idx").string();
    write_digit_idx_files(digits, imgs, labels);
    manifest.add_artifact(imgs);
    manifest.add_artifact(labels);
  } else {
    Dataset data = kind == "sequences" ? synth_sequences(n, length, seed)
                   : kind == "tabular" ? synth_tabular(n, p, informative, seed)
                                       : throw ConfigError("unknown synth kind: " +
                                                           kind);
    std::ostringstream csv;
    csv.precision(10);
    const std::size_t width = data.feature_count();
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        csv << data.features[i * width + j] << ",";
      }
      csv << data.labels[i] << "\n";
    }
    std::string path = (fs::path(out_dir) / (kind + ".csv")).string();
    write_text(path, csv.str(), &manifest);
  }
  manifest.write(out_dir);
  std::cout << "wrote " << kind << " dataset (n=" << n << ") to " << out_dir
            << "\n";
  return 0;
}

int cmd_train_predictor(const TomlDoc& doc, const std::string& config_path,
                        std::uint64_t seed, const std::string& out_dir) {
  fs::create_directories(out_dir);
  Manifest manifest("train-predictor", config_path, seed);
  LoadedData data = load_dataset(doc, seed);
  Predictor d = predictor_from_config(doc, data, seed, out_dir, &manifest);
  if (d.loss == LossKind::CrossEntropy) {
    std::cout << "test accuracy: " << std::fixed << std::setprecision(4)
              << d.accuracy(data.test) << "\n";
  } else {
    std::cout << "test loss: " << mean_loss(d, data.test, d.loss) << "\n";
  }
  manifest.write(out_dir);
  return 0;
}

int cmd_train_localizer(const TomlDoc& doc, const std::string& config_path,
                        std::uint64_t seed, const std::string& out_dir,
                        double tau_flag) {
  fs::create_directories(out_dir);
  Manifest manifest("train-localizer", config_path, seed);
  LoadedData data = load_dataset(doc, seed);
  Predictor d = predictor_from_config(doc, data, seed, out_dir, &manifest);
  double tau = tau_flag > 0 ? tau_flag : doc.get_double("localizer", "tau", 0.0);
  if (tau <= 0) throw ConfigError("[localizer].tau (or --tau) must be positive");

  Localizer loc = [&] {
    if (doc.get_string("localizer", "kind", "cae") == "constant") {
      return Localizer::build_constant(data.train.feature_count(), tau,
                                       mix_seed(seed, 0x10c));
    }
    CaeConfig cfg = cae_config_from(doc, data.train.feature_shape());
    return Localizer::build_cae(cfg, tau, mix_seed(seed, 0x10c));
  }();

  TrainConfig cfg = train_config_from(doc, "train_localizer", seed, true);
  auto t0 = std::chrono::steady_clock::now();
  TrainLog log = train_localizer(d, loc, data.train, cfg);
  manifest.add_timing("train_localizer",
                      std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count());

  int b = static_cast<int>(doc.get_int("bootstrap", "b", 500));
  double level = doc.get_double("bootstrap", "level", 0.95);
  R2Report report = bootstrap_r2_ci(d, loc, data.test, b, level, seed, d.loss);

  std::string base = (fs::path(out_dir) / "localizer").string();
  loc.save(base + ".dfl", base + ".json");
  manifest.add_artifact(base + ".dfl");
  manifest.add_artifact(base + ".json");
  write_text((fs::path(out_dir) / "report.json").string(), report.to_json(),
             &manifest);
  std::cout << "epochs: " << log.epochs_run << "  J: " << report.empirical_j
            << "  R^2: " << report.point_estimate << "  CI: ["
            << report.ci_lower << ", " << report.ci_upper << "]\n";
  manifest.write(out_dir);
  return 0;
}

int cmd_sweep(const TomlDoc& doc, const std::string& config_path,
              std::uint64_t seed, const std::string& out_dir, bool full_sweep,
              bool strict, int jobs) {
  fs::create_directories(out_dir);
  Manifest manifest("sweep", config_path, seed);
  LoadedData data = load_dataset(doc, seed);
  Predictor d = predictor_from_config(doc, data, seed, out_dir, &manifest);

  std::vector<double> grid = doc.get_doubles("sweep", "grid");
  if (grid.empty()) grid = {4, 6, 8, 10, 12, 14, 18, 20};
  double target = doc.get_double("sweep", "target_r2", 0.5);
  full_sweep = full_sweep || doc.get_bool("sweep", "full_sweep", false);
  TrainConfig cfg = train_config_from(doc, "train_localizer", seed, true);
  int b = static_cast<int>(doc.get_int("bootstrap", "b", 500));
  double level = doc.get_double("bootstrap", "level", 0.95);

  CaeConfig cae = cae_config_from(doc, data.train.feature_shape());
  LocalizerFactory factory = [&cae](double tau, std::uint64_t s) {
    return Localizer::build_cae(cae, tau, s);
  };

  // every cell is evaluated by the same path; --jobs only changes scheduling
  std::vector<std::optional<Localizer>> localizers(grid.size());
  std::vector<std::optional<TauCell>> cells(grid.size());
  auto run_cell = [&](std::size_t i) {
    std::optional<Localizer> trained;
    TauCell cell = evaluate_tau_cell(d, factory, data.train, data.test, grid[i],
                                     i, cfg, b, level, &trained);
    cells[i] = cell;
    localizers[i] = std::move(trained);
  };

  if (full_sweep && jobs > 1) {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        while (true) {
          std::size_t i = next.fetch_add(1);
          if (i >= grid.size()) return;
          run_cell(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  } else {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      run_cell(i);
      if (!full_sweep && cells[i]->report.point_estimate >= target) break;
    }
  }

  TauSweepResult result;
  result.target_r2 = target;
  std::vector<std::size_t> indices = heatmap_indices(doc);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!cells[i]) break;
    result.grid.push_back(grid[i]);
    result.cells.push_back(*cells[i]);
    if (!result.selected_tau && cells[i]->report.point_estimate >= target) {
      result.selected_tau = grid[i];
    }
    std::ostringstream stem;
    stem << "tau_" << grid[i];
    std::string base = (fs::path(out_dir) / ("localizer_" + stem.str())).string();
    localizers[i]->save(base + ".dfl", base + ".json");
    manifest.add_artifact(base + ".dfl");
    manifest.add_artifact(base + ".json");
    export_heatmaps(*localizers[i], data.test, indices, out_dir,
                    "heatmap_" + stem.str(), "auto", &manifest);
  }

  write_text((fs::path(out_dir) / "sweep.json").string(), result.to_json(),
             &manifest);
  write_text((fs::path(out_dir) / "sweep.csv").string(), result.to_csv(),
             &manifest);
  print_report_table(result);
  manifest.write(out_dir);
  if (strict && !result.selected_tau) {
    throw Error(ErrorCode::TargetUnreachable,
                "target R^2 not reached on the grid (strict mode)");
  }
  return 0;
}

int cmd_ci(const TomlDoc& doc, const std::string& config_path,
           std::uint64_t seed, const std::string& out_dir,
           const std::string& localizer_base) {
  fs::create_directories(out_dir);
  Manifest manifest("ci", config_path, seed);
  LoadedData data = load_dataset(doc, seed);
  Predictor d = predictor_from_config(doc, data, seed, out_dir, &manifest);
  Localizer loc = Localizer::load(localizer_base + ".dfl",
                                  localizer_base + ".json");
  int b = static_cast<int>(doc.get_int("bootstrap", "b", 500));
  double level = doc.get_double("bootstrap", "level", 0.95);
  R2Report report = bootstrap_r2_ci(d, loc, data.test, b, level, seed, d.loss);
  write_text((fs::path(out_dir) / "report.json").string(), report.to_json(),
             &manifest);
  std::cout << "R^2 " << report.point_estimate << "  " << level * 100
            << "% CI [" << report.ci_lower << ", " << report.ci_upper << "]  (B="
            << b << ")\n";
  manifest.write(out_dir);
  return 0;
}

int cmd_heatmap(const TomlDoc& doc, const std::string& config_path,
                std::uint64_t seed, const std::string& out_dir,
                const std::string& localizer_base, const std::string& indices_csv,
                const std::string& format) {
  fs::create_directories(out_dir);
  Manifest manifest("heatmap", config_path, seed);
  LoadedData data = load_dataset(doc, seed);
  Localizer loc = Localizer::load(localizer_base + ".dfl",
                                  localizer_base + ".json");
  std::vector<std::size_t> indices;
  std::istringstream in(indices_csv);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) indices.push_back(std::stoul(tok));
  }
  if (indices.empty()) indices = {0};
  export_heatmaps(loc, data.test, indices, out_dir, "heatmap", format, &manifest);
  manifest.write(out_dir);
  std::cout << "wrote " << indices.size() << " heatmap instance(s) to " << out_dir
            << "\n";
  return 0;
}

std::vector<double> parse_beta_csv(const std::string& text) {
  std::vector<double> beta;
  std::istringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      beta.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("cannot parse coefficient '" + tok + "'");
    }
  }
  if (beta.empty()) throw ConfigError("empty coefficient vector");
  return beta;
}

std::string delta_csv(const std::vector<double>& delta) {
  std::ostringstream out;
  out.precision(12);
  for (std::size_t j = 0; j < delta.size(); ++j) {
    if (j) out << ",";
    out << delta[j];
  }
  return out.str();
}

int cmd_oracle(const std::string& beta_text, double tau) {
  // regions separated by ';' reduce to the per-region rule
  std::vector<std::string> regions;
  std::size_t start = 0;
  while (true) {
    std::size_t semi = beta_text.find(';', start);
    regions.push_back(beta_text.substr(start, semi - start));
    if (semi == std::string::npos) break;
    start = semi + 1;
  }
  if (regions.size() == 1) {
    std::cout << delta_csv(greedy_linear_delta(parse_beta_csv(regions[0]), tau))
              << "\n";
    return 0;
  }
  PiecewiseLinearModel model;
  for (const auto& r : regions) model.betas.push_back(parse_beta_csv(r));
  for (const auto& delta : greedy_piecewise_delta(model, tau)) {
    std::cout << delta_csv(delta) << "\n";
  }
  return 0;
}

int cmd_arch_sweep(const TomlDoc& doc, const std::string& config_path,
                   std::uint64_t seed, const std::string& out_dir) {
  fs::create_directories(out_dir);
  Manifest manifest("arch-sweep", config_path, seed);
  LoadedData data = load_dataset(doc, seed);
  Predictor d = predictor_from_config(doc, data, seed, out_dir, &manifest);

  const TomlValue* names = doc.find("arch_sweep", "configs");
  if (!names || names->kind != TomlValue::Kind::Array) {
    throw ConfigError("[arch_sweep].configs must list architecture names");
  }
  std::vector<std::pair<std::string, CaeConfig>> configs;
  for (const auto& v : names->array) {
    if (v.kind != TomlValue::Kind::String) {
      throw ConfigError("[arch_sweep].configs entries must be strings");
    }
    configs.emplace_back(v.str,
                         make_named_config(v.str, data.train.feature_shape()));
  }
  double tau = doc.get_double("arch_sweep", "tau", 4.0);
  int folds = static_cast<int>(doc.get_int("arch_sweep", "folds", 5));
  TrainConfig cfg = train_config_from(doc, "train_localizer", seed, true);

  // train/test were already split; cross validation runs on the train side
  auto rows = architecture_sweep(d, configs, tau, data.train, cfg, folds);
  write_text((fs::path(out_dir) / "arch_sweep.json").string(),
             arch_sweep_json(rows), &manifest);
  std::cout << std::left << std::setw(16) << "config" << std::setw(12)
            << "mean R^2" << std::setw(12) << "std" << "\n";
  std::cout << std::string(40, '-') << "\n";
  for (const auto& r : rows) {
    if (r.ok()) {
      std::cout << std::left << std::setw(16) << r.name << std::fixed
                << std::setprecision(4) << std::setw(12) << r.mean_r2
                << std::setw(12) << r.std_r2 << "\n";
    } else {
      std::cout << std::left << std::setw(16) << r.name << "error: " << r.error
                << "\n";
    }
  }
  manifest.write(out_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discriminative feature localization workbench"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  long seed_flag = -1;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    if (needs_config) {
      cmd->add_option("--config", config_path, "TOML config file")->required();
    }
    cmd->add_option("--out-dir", out_dir, "artifact directory");
    cmd->add_option("--seed", seed_flag, "seed override (also DFL_SEED)");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_kind = "digits";
  std::size_t synth_n = 1500, synth_len = 64, synth_p = 20, synth_inf = 4;
  synth->add_option("--kind", synth_kind, "digits | sequences | tabular");
  synth->add_option("--n", synth_n, "instance count");
  synth->add_option("--length", synth_len, "sequence length");
  synth->add_option("--p", synth_p, "tabular feature count");
  synth->add_option("--informative", synth_inf, "informative features");
  add_common(synth, false);

  auto* tp = app.add_subcommand("train-predictor", "train and freeze a predictor");
  add_common(tp, true);

  auto* tl = app.add_subcommand("train-localizer",
                                "train a budgeted localizer against a predictor");
  double tau_flag = 0.0;
  tl->add_option("--tau", tau_flag, "budget override");
  add_common(tl, true);

  auto* sweep = app.add_subcommand("sweep", "grid-search tau to a target R^2");
  bool full_sweep = false, strict = false;
  int jobs = 1;
  sweep->add_flag("--full-sweep", full_sweep,
                  "evaluate every cell even after the target is met");
  sweep->add_flag("--strict", strict, "exit 5 when the target is unreachable");
  sweep->add_option("--jobs", jobs, "parallel cells (full sweeps only)");
  add_common(sweep, true);

  auto* ci = app.add_subcommand("ci", "bootstrap interval for a saved localizer");
  std::string localizer_base;
  ci->add_option("--localizer", localizer_base,
                 "checkpoint base path (expects .dfl and .json)")
      ->required();
  add_common(ci, true);

  auto* hm = app.add_subcommand("heatmap", "export disruption heatmaps");
  std::string hm_localizer, hm_indices = "0", hm_format = "auto";
  hm->add_option("--localizer", hm_localizer, "checkpoint base path")->required();
  hm->add_option("--indices", hm_indices, "comma-separated instance indices");
  hm->add_option("--format", hm_format, "auto | ppm | json");
  add_common(hm, true);

  auto* oracle = app.add_subcommand("oracle", "closed-form linear-model delta");
  std::string beta_text;
  double oracle_tau = 1.0;
  oracle->add_option("--beta", beta_text,
                     "coefficients as CSV; ';' separates regions")
      ->required();
  oracle->add_option("--tau", oracle_tau, "budget")->required();

  auto* arch = app.add_subcommand("arch-sweep",
                                  "cross-validated R^2 per architecture");
  add_common(arch, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      std::uint64_t seed = seed_flag >= 0 ? seed_flag : 1;
      if (const char* env = std::getenv("DFL_SEED")) seed = std::stoull(env);
      return cmd_synth(synth_kind, synth_n, synth_len, synth_p, synth_inf, seed,
                       out_dir);
    }
    if (*oracle) return cmd_oracle(beta_text, oracle_tau);

    TomlDoc doc = TomlDoc::parse_file(config_path);
    std::uint64_t seed = resolve_seed(doc, seed_flag);
    if (*tp) return cmd_train_predictor(doc, config_path, seed, out_dir);
    if (*tl) return cmd_train_localizer(doc, config_path, seed, out_dir, tau_flag);
    if (*sweep) {
      return cmd_sweep(doc, config_path, seed, out_dir, full_sweep, strict, jobs);
    }
    if (*ci) return cmd_ci(doc, config_path, seed, out_dir, localizer_base);
    if (*hm) {
      return cmd_heatmap(doc, config_path, seed, out_dir, hm_localizer,
                         hm_indices, hm_format);
    }
    if (*arch) return cmd_arch_sweep(doc, config_path, seed, out_dir);
  } catch (const Error& e) {
    json err;
    err["error"]["code"] = static_cast<int>(e.code());
    err["error"]["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    json err;
    err["error"]["code"] = 2;
    err["error"]["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return 2;
  }
  return 0;
}

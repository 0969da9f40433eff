#include "snapspec/cli.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "snapspec/errors.hpp"
#include "snapspec/manifest.hpp"
#include "snapspec/metrics.hpp"
#include "snapspec/parameters.hpp"
#include "snapspec/selection.hpp"
#include "snapspec/spectra.hpp"
#include "snapspec/unfolding.hpp"

namespace fs = std::filesystem;

namespace snapspec {

namespace {

// Manifest keys that describe a run rather than naming a flag.
bool is_meta_key(const std::string& key) {
  return key == "command" || key == "tool_version" || key.rfind("output.", 0) == 0 ||
         key.rfind("model.", 0) == 0 || key.rfind("result.", 0) == 0;
}

bool flag_present(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

// Pulls "--config FILE" out of args and appends every key of FILE that was not
// given explicitly.
std::vector<std::string> merge_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::optional<std::string> config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config requires a file argument");
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(std::strlen("--config="));
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!config) return rest;
  if (!fs::exists(*config)) throw CLI::ValidationError("--config", "file not found: " + *config);
  const RunManifest file = RunManifest::read(*config);
  for (const auto& [key, value] : file.entries()) {
    if (is_meta_key(key) || flag_present(rest, key)) continue;
    rest.push_back("--" + key + "=" + value);
  }
  return rest;
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) s += sep;
    s += items[i];
  }
  return s;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Every long option of the subcommand with its effective value.
RunManifest invocation_manifest(const CLI::App& sub) {
  RunManifest m;
  m.set("command", sub.get_name());
  m.set("tool_version", kToolVersion);
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string& name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    std::string value = opt->count() > 0 ? join(opt->results(), ',') : opt->get_default_str();
    if (opt->get_expected_max() == 0 && opt->count() > 0) value = "true";
    if (!value.empty()) m.set(name, value);
  }
  return m;
}

fs::path normalized(const fs::path& p) {
  fs::path n = p.lexically_normal();
  if (n.has_filename()) return n;
  return n.parent_path();
}

bool parse_bool(const std::string& text) { return text == "true"; }

double resolve_rho(const std::string& text, const FilterArray& phi) {
  if (text == "auto") return 1.0 / phi.lipschitz();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw CLI::ValidationError("--rho", "expected 'auto' or a number, got " + text);
  return v;
}

// Files given directly, or the sorted `ext` files of a single directory argument.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& items, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& item : items) {
    if (fs::is_directory(item)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(item)) {
        if (e.is_regular_file() && e.path().extension() == ext) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      if (!fs::exists(item)) throw std::runtime_error("file not found: " + item);
      out.emplace_back(item);
    }
  }
  return out;
}

std::string read_magic(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  char buf[4] = {};
  is.read(buf, 4);
  return is.gcount() == 4 ? std::string(buf, 4) : std::string();
}

void require_file(const std::string& flag, const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error(flag + ": file not found: " + path);
}

// ---------------------------------------------------------------------------

struct GenSpectraArgs {
  std::size_t n = 1000, bands = 300;
  std::uint64_t seed = 0;
  double gmax = 0.08, rmin = 0.3;
  std::string out, csv;
};

void cmd_gen_spectra(const GenSpectraArgs& a, const CLI::App& sub, std::ostream& out) {
  SyntheticSpectraOptions opt;
  opt.count = a.n;
  opt.seed = a.seed;
  opt.bands = a.bands;
  opt.constraints = {a.gmax, a.rmin};
  const MetasurfaceDataset ds = generate_synthetic(opt);
  save_spectra(ds, a.out);
  RunManifest m = invocation_manifest(sub);
  m.set("output.spectra", a.out);
  if (!a.csv.empty()) {
    export_spectra_csv(ds, a.csv);
    m.set("output.csv", a.csv);
  }
  m.write(manifest_path(a.out));
  out << "wrote " << ds.size() << " spectra x " << ds.bands() << " bands to " << a.out << '\n';
}

struct SelectArgs {
  std::string in, out, method = "fps", abs = "true";
  std::size_t k = 9;
  double tau = 0.9;
  std::uint64_t seed = 0;
};

void cmd_select(const SelectArgs& a, const CLI::App& sub, std::ostream& out) {
  require_file("--in", a.in);
  const MetasurfaceDataset ds = load_spectra(a.in);
  SelectionResult res;
  if (a.method == "fps") {
    res = select_fps(ds, a.k, parse_bool(a.abs));
  } else if (a.method == "innerproduct") {
    InnerProductOptions opt;
    opt.tau = a.tau;
    opt.seed = a.seed;
    res = select_innerproduct_baseline(ds, a.k, opt);
  } else {
    res = brute_force_oracle(ds, a.k);
  }
  save_selection(res, a.out);
  const std::string corr = a.out + ".correlation.csv", spectra = a.out + ".spectra.csv";
  correlation_report(res, corr, spectra);
  RunManifest m = invocation_manifest(sub);
  m.set("output.filters", a.out);
  m.set("output.indices", indices_sidecar(a.out).string());
  m.set("output.correlation", corr);
  m.set("output.spectra_csv", spectra);
  m.set("result.max_offdiag", num(res.max_offdiag));
  m.write(manifest_path(a.out));
  out << "selected";
  for (auto i : res.indices) out << ' ' << i;
  out << "; max |p| off-diagonal = " << res.max_offdiag << '\n';
}

struct GenScenesArgs {
  std::size_t n = 20, height = 32, width = 32, bands = 8;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_gen_scenes(const GenScenesArgs& a, const CLI::App& sub, std::ostream& out) {
  const fs::path dir = normalized(a.out);
  fs::create_directories(dir);
  SceneOptions opt;
  opt.height = a.height;
  opt.width = a.width;
  opt.bands = a.bands;
  RunManifest m = invocation_manifest(sub);
  for (std::size_t i = 0; i < a.n; ++i) {
    std::ostringstream name;
    name << "scene_" << std::setw(3) << std::setfill('0') << i << ".hsc";
    const fs::path p = dir / name.str();
    save_cube(generate_scene(opt, derive_seed(a.seed, i)), p);
    m.set("output.scene" + std::to_string(i), p.string());
  }
  m.write(manifest_path(dir));
  out << "wrote " << a.n << " scenes to " << dir.string() << '\n';
}

struct EncodeArgs {
  std::string scene, filters, out;
  std::size_t mosaic_s = 3;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

void cmd_encode(const EncodeArgs& a, const CLI::App& sub, std::ostream& out) {
  require_file("--scene", a.scene);
  require_file("--filters", a.filters);
  const HyperCube x = load_cube(a.scene);
  const FilterArray phi = build_mosaic(load_spectra(a.filters, x.grid), x.height, x.width, a.mosaic_s);
  const Measurement y = encode(x, phi, a.sigma, a.seed);
  save_measurement(y, a.out);
  RunManifest m = invocation_manifest(sub);
  m.set("output.measurement", a.out);
  m.write(manifest_path(a.out));
  out << "wrote " << y.height << "x" << y.width << " measurement to " << a.out << '\n';
}

struct TrainArgs {
  std::vector<std::string> scenes;
  std::string filters, out, rho_init = "auto", share = "true", augment = "true";
  std::size_t mosaic_s = 3, stages = 9, channels = 32, reduction = 4, queries = 8, epochs = 50, crop = 0;
  double lr = 2e-4, sigma = 0.0;
  std::uint64_t seed = 0;
};

void cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out) {
  require_file("--filters", a.filters);
  const auto files = expand_inputs(a.scenes, ".hsc");
  if (files.empty()) throw std::runtime_error("--scenes: no .hsc scenes found");
  std::vector<HyperCube> scenes;
  for (const auto& f : files) {
    scenes.push_back(load_cube(f));
    if (scenes.back().height != scenes.front().height || scenes.back().width != scenes.front().width ||
        scenes.back().bands != scenes.front().bands) {
      throw ShapeError("--scenes: " + f.string() + " differs in size from " + files.front().string());
    }
  }
  const HyperCube& first = scenes.front();
  const FilterArray phi =
      build_mosaic(load_spectra(a.filters, first.grid), first.height, first.width, a.mosaic_s);

  UnfoldingConfig cfg;
  cfg.stages = a.stages;
  cfg.rho_init = resolve_rho(a.rho_init, phi);
  cfg.share_params = parse_bool(a.share);
  erra::ErraConfig net;
  net.bands = first.bands;
  net.channels = a.channels;
  net.reduction = a.reduction;
  net.queries = a.queries;
  UnfoldingModel<float> model(cfg, net, derive_seed(a.seed, 0));

  TrainOptions opt;
  opt.epochs = a.epochs;
  opt.lr = a.lr;
  opt.seed = derive_seed(a.seed, 1);
  opt.augment = parse_bool(a.augment);
  opt.crop = a.crop;
  opt.noise_sigma = a.sigma;
  const std::string loss_csv = a.out + ".loss.csv";
  opt.loss_csv = fs::path(loss_csv);
  opt.on_epoch = [&out](std::size_t epoch, double loss) {
    out << "epoch " << epoch << " loss " << loss << '\n';
  };
  const TrainReport report = train(model, scenes, phi, opt);
  if (report.epoch_loss.empty()) write_loss_csv(report.epoch_loss, loss_csv);
  save_checkpoint(model.parameters(), a.out);

  RunManifest m = invocation_manifest(sub);
  for (const auto& [k, v] : model.describe()) m.set("model." + k, v);
  m.set("output.checkpoint", a.out);
  m.set("output.loss", loss_csv);
  m.write(manifest_path(a.out));
  out << "saved " << model.parameters().scalar_count() << " parameters to " << a.out << '\n';
}

struct ReconstructArgs {
  std::string measurement, filters, model, out, truth, rho = "auto";
  bool classical = false;
  std::size_t mosaic_s = 3, stages = 0;
  std::size_t bands = 0;
  double threshold = 0.0;
};

void cmd_reconstruct(const ReconstructArgs& a, const CLI::App& sub, std::ostream& out) {
  require_file("--measurement", a.measurement);
  require_file("--filters", a.filters);
  const Measurement y = load_measurement(a.measurement);
  const MetasurfaceDataset theta = load_spectra(a.filters);
  const FilterArray phi = build_mosaic(theta, y.height, y.width, a.mosaic_s);
  std::optional<HyperCube> truth;
  if (!a.truth.empty()) {
    require_file("--truth", a.truth);
    truth = load_cube(a.truth);
  }
  UnfoldingResult result;
  RunManifest m = invocation_manifest(sub);
  if (a.classical) {
    UnfoldingConfig cfg;
    cfg.prox = ProxKind::kSoftThreshold;
    cfg.stages = a.stages == 0 ? 9 : a.stages;
    cfg.rho_init = resolve_rho(a.rho, phi);
    cfg.threshold = a.threshold;
    result = run_unfolding(y, phi, cfg, truth.has_value());
    m.set("model.stages", std::to_string(cfg.stages));
    m.set("model.rho", num(cfg.rho_init));
  } else {
    require_file("--model", a.model);
    const auto model = UnfoldingModel<float>::from_checkpoint(a.model);
    if (a.stages != 0 && a.stages != model.stages()) {
      throw std::runtime_error("--stages " + std::to_string(a.stages) + " does not match the " +
                               std::to_string(model.stages()) + "-stage checkpoint " + a.model);
    }
    if (model.net_config().bands != phi.bands()) {
      throw ShapeError("--model: checkpoint expects " + std::to_string(model.net_config().bands) +
                       " bands, filters have " + std::to_string(phi.bands()));
    }
    result = model.reconstruct(y, phi, truth.has_value());
    for (const auto& [k, v] : model.describe()) m.set("model." + k, v);
  }
  save_cube(result.estimate, a.out);
  const std::string stages_csv = a.out + ".stages.csv";
  write_stage_csv(result, stages_csv, truth ? &*truth : nullptr);
  m.set("output.reconstruction", a.out);
  m.set("output.stages", stages_csv);
  m.write(manifest_path(a.out));
  out << "reconstructed " << result.stage_fidelity.size() << " stages; final fidelity "
      << result.stage_fidelity.back() << '\n';
}

struct EvaluateArgs {
  std::vector<std::string> recon, truth;
  std::string out;
};

void cmd_evaluate(const EvaluateArgs& a, const CLI::App& sub, std::ostream& out) {
  const auto recon = expand_inputs(a.recon, ".hsc");
  const auto truth = expand_inputs(a.truth, ".hsc");
  if (recon.size() != truth.size() || recon.empty()) {
    throw std::runtime_error("--recon and --truth must name the same positive number of cubes (" +
                             std::to_string(recon.size()) + " vs " + std::to_string(truth.size()) + ")");
  }
  std::vector<ScenePair> pairs;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    pairs.push_back({truth[i].stem().string(), load_cube(recon[i]), load_cube(truth[i])});
  }
  const QualityReport report = evaluate(pairs);
  write_report(report, a.out);
  RunManifest m = invocation_manifest(sub);
  m.set("output.report", a.out);
  m.set("result.average_psnr_db", num(report.average_psnr_db));
  m.set("result.average_ssim", num(report.average_ssim));
  m.write(manifest_path(a.out));
  out << "average PSNR " << report.average_psnr_db << " dB, SSIM " << report.average_ssim << '\n';
}

struct ExportArgs {
  std::vector<std::string> in;
  std::string out;
};

void cmd_export(const ExportArgs& a, const CLI::App& sub, std::ostream& out) {
  const fs::path dir = normalized(a.out);
  fs::create_directories(dir);
  RunManifest m = invocation_manifest(sub);
  std::size_t written = 0;
  auto record = [&](const fs::path& p) { m.set("output." + std::to_string(written++), p.string()); };
  for (const auto& item : a.in) {
    const fs::path src(item);
    require_file("--in", item);
    const std::string stem = src.filename().string();
    const std::string magic = read_magic(src);
    if (magic == "SPC1") {
      const MetasurfaceDataset ds = load_spectra(src);
      std::vector<std::size_t> all(ds.size());
      std::iota(all.begin(), all.end(), std::size_t{0});
      const SelectionResult everything = make_selection(ds, pearson_stats(ds), all);
      const fs::path corr = dir / (stem + ".correlation.csv"), spectra = dir / (stem + ".spectra.csv");
      correlation_report(everything, corr, spectra);
      record(corr);
      record(spectra);
    } else if (magic == "HSC1") {
      const HyperCube cube = load_cube(src);
      const fs::path p = dir / (stem + ".mean_spectrum.csv");
      std::ofstream os(p);
      os << "wavelength_nm,mean\n" << std::setprecision(9);
      for (std::size_t l = 0; l < cube.bands; ++l) {
        double acc = 0.0;
        for (std::size_t q = 0; q < cube.height * cube.width; ++q) acc += cube.data[q * cube.bands + l];
        os << cube.grid[l] << ',' << acc / static_cast<double>(cube.height * cube.width) << '\n';
      }
      record(p);
    } else if (magic == "MSR1") {
      const Measurement y = load_measurement(src);
      const fs::path p = dir / (stem + ".image.csv");
      std::ofstream os(p);
      os << std::setprecision(9);
      for (std::size_t r = 0; r < y.height; ++r) {
        for (std::size_t c = 0; c < y.width; ++c) os << (c ? "," : "") << y.y[r * y.width + c];
        os << '\n';
      }
      record(p);
    } else if (magic == "ERP1") {
      const auto params = read_checkpoint<float>(src);
      const fs::path p = dir / (stem + ".parameters.csv");
      std::ofstream os(p);
      os << "name,numel,mean_abs\n" << std::setprecision(9);
      for (const auto& prm : params) {
        double acc = 0.0;
        for (float v : prm.tensor.data()) acc += std::abs(static_cast<double>(v));
        os << prm.name << ',' << prm.tensor.numel() << ',' << acc / static_cast<double>(prm.tensor.numel())
           << '\n';
      }
      record(p);
    } else if (src.extension() == ".csv") {
      const fs::path p = dir / stem;
      if (fs::exists(p) && fs::equivalent(p, src)) continue;
      fs::copy_file(src, p, fs::copy_options::overwrite_existing);
      record(p);
    } else {
      throw FormatError("--in: unrecognised artifact " + item);
    }
  }
  m.write(manifest_path(dir));
  out << "exported " << written << " CSV files to " << dir.string() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Metasurface snapshot SWIR hyperspectral simulation and reconstruction toolkit", "snapspec"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  GenSpectraArgs gs;
  auto* gen_spectra = app.add_subcommand("gen-spectra", "Generate synthetic metasurface transmission spectra (SPC1)");
  gen_spectra->add_option("--n", gs.n, "Number of spectra")->check(CLI::PositiveNumber);
  gen_spectra->add_option("--seed", gs.seed, "Root seed");
  gen_spectra->add_option("--bands", gs.bands, "Wavelength samples over 1000-2500 nm")->check(CLI::Range(2, 100000));
  gen_spectra->add_option("--gmax", gs.gmax, "Largest allowed step between adjacent bands")->check(CLI::PositiveNumber);
  gen_spectra->add_option("--rmin", gs.rmin, "Smallest allowed peak-to-valley range")->check(CLI::Range(0.0, 0.9));
  gen_spectra->add_option("--out", gs.out, "Output SPC1 file")->required();
  gen_spectra->add_option("--csv", gs.csv, "Also write the spectra as CSV");

  SelectArgs sa;
  auto* select = app.add_subcommand("select-filters", "Choose the basic filter array from a spectra set");
  select->add_option("--in", sa.in, "Input SPC1 dataset")->required();
  select->add_option("--k", sa.k, "Number of filters")->check(CLI::PositiveNumber);
  select->add_option("--method", sa.method, "Selection method")->check(CLI::IsMember({"fps", "innerproduct", "oracle"}));
  select->add_option("--abs", sa.abs, "Use |Pearson| in the greedy score")->check(CLI::IsMember({"true", "false"}));
  select->add_option("--tau", sa.tau, "Inner-product threshold (innerproduct method)");
  select->add_option("--seed", sa.seed, "Seed (innerproduct method)");
  select->add_option("--out", sa.out, "Output SPC1 file of the selected spectra")->required();

  GenScenesArgs gc;
  auto* gen_scenes = app.add_subcommand("gen-scenes", "Generate synthetic hyperspectral scenes (HSC1)");
  gen_scenes->add_option("--n", gc.n, "Number of scenes")->check(CLI::PositiveNumber);
  gen_scenes->add_option("--height", gc.height, "Scene height")->check(CLI::PositiveNumber);
  gen_scenes->add_option("--width", gc.width, "Scene width")->check(CLI::PositiveNumber);
  gen_scenes->add_option("--bands", gc.bands, "Spectral bands")->check(CLI::Range(2, 100000));
  gen_scenes->add_option("--seed", gc.seed, "Root seed");
  gen_scenes->add_option("--out", gc.out, "Output directory")->required();

  EncodeArgs ea;
  auto* enc = app.add_subcommand("encode", "Simulate a snapshot measurement (MSR1)");
  enc->add_option("--scene", ea.scene, "Input HSC1 scene")->required();
  enc->add_option("--filters", ea.filters, "Selected filters (SPC1)")->required();
  enc->add_option("--mosaic-s", ea.mosaic_s, "Basic array period s")->check(CLI::PositiveNumber);
  enc->add_option("--sigma", ea.sigma, "Gaussian read-noise standard deviation")->check(CLI::NonNegativeNumber);
  enc->add_option("--seed", ea.seed, "Noise seed");
  enc->add_option("--out", ea.out, "Output MSR1 file")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train an unfolding model with the learned proximal network (ERP1)");
  tr->add_option("--scenes", ta.scenes, "Training scenes: HSC1 files or a directory")->required()->delimiter(',');
  tr->add_option("--filters", ta.filters, "Selected filters (SPC1)")->required();
  tr->add_option("--mosaic-s", ta.mosaic_s, "Basic array period s")->check(CLI::PositiveNumber);
  tr->add_option("--stages", ta.stages, "Unfolding stages K")->check(CLI::PositiveNumber);
  tr->add_option("--channels", ta.channels, "Feature channels C")->check(CLI::PositiveNumber);
  tr->add_option("--reduction", ta.reduction, "Low-rank reduction ratio r")->check(CLI::PositiveNumber);
  tr->add_option("--queries", ta.queries, "Query prior tokens m")->check(CLI::PositiveNumber);
  tr->add_option("--epochs", ta.epochs, "Training epochs");
  tr->add_option("--lr", ta.lr, "Learning rate")->check(CLI::NonNegativeNumber);
  tr->add_option("--rho-init", ta.rho_init, "Initial step size, or 'auto' for 1/L");
  tr->add_option("--share-params", ta.share, "Share the proximal network across stages")->check(CLI::IsMember({"true", "false"}));
  tr->add_option("--augment", ta.augment, "Random crop/rotation/flip")->check(CLI::IsMember({"true", "false"}));
  tr->add_option("--crop", ta.crop, "Square crop side (0 keeps full scenes)");
  tr->add_option("--sigma", ta.sigma, "Measurement noise during training")->check(CLI::NonNegativeNumber);
  tr->add_option("--seed", ta.seed, "Root seed");
  tr->add_option("--out", ta.out, "Output ERP1 checkpoint")->required();

  ReconstructArgs ra;
  auto* rec = app.add_subcommand("reconstruct", "Reconstruct a cube from a measurement (HSC1)");
  rec->add_option("--measurement", ra.measurement, "Input MSR1 measurement")->required();
  rec->add_option("--filters", ra.filters, "Selected filters (SPC1)")->required();
  rec->add_option("--mosaic-s", ra.mosaic_s, "Basic array period s")->check(CLI::PositiveNumber);
  auto* model_opt = rec->add_option("--model", ra.model, "Trained ERP1 checkpoint");
  auto* classical_opt = rec->add_flag("--classical", ra.classical, "Use the soft-threshold prox instead of a model");
  model_opt->excludes(classical_opt);
  rec->add_option("--stages", ra.stages, "Stage count (classical; must match a model checkpoint)");
  rec->add_option("--rho", ra.rho, "Classical step size, or 'auto' for 1/L");
  rec->add_option("--threshold", ra.threshold, "Classical soft-threshold level")->check(CLI::NonNegativeNumber);
  rec->add_option("--truth", ra.truth, "Ground-truth HSC1 for per-stage PSNR/SSIM");
  rec->add_option("--out", ra.out, "Output HSC1 reconstruction")->required();

  EvaluateArgs va;
  auto* eval = app.add_subcommand("evaluate", "PSNR/SSIM report (CSV)");
  eval->add_option("--recon", va.recon, "Reconstructions: HSC1 files or a directory")->required()->delimiter(',');
  eval->add_option("--truth", va.truth, "Ground truth: HSC1 files or a directory")->required()->delimiter(',');
  eval->add_option("--out", va.out, "Output CSV report")->required();

  ExportArgs xa;
  auto* exp = app.add_subcommand("export-plots", "Export plot-ready CSV bundles from artifacts");
  exp->add_option("--in", xa.in, "Artifacts (SPC1, HSC1, MSR1, ERP1 or CSV)")->required()->delimiter(',');
  exp->add_option("--out", xa.out, "Output directory")->required();

  std::string replay_manifest;
  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
  replay->add_option("--manifest", replay_manifest, "Manifest written by an earlier run")->required();

  if (raw_args.empty()) {
    err << app.help();
    return kExitUsage;
  }

  try {
    std::vector<std::string> args = merge_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
    if (!ra.classical && ra.model.empty() && rec->parsed()) {
      throw CLI::RequiredError("reconstruct needs --model or --classical");
    }
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (gen_spectra->parsed()) cmd_gen_spectra(gs, *gen_spectra, out);
    else if (select->parsed()) cmd_select(sa, *select, out);
    else if (gen_scenes->parsed()) cmd_gen_scenes(gc, *gen_scenes, out);
    else if (enc->parsed()) cmd_encode(ea, *enc, out);
    else if (tr->parsed()) cmd_train(ta, *tr, out);
    else if (rec->parsed()) cmd_reconstruct(ra, *rec, out);
    else if (eval->parsed()) cmd_evaluate(va, *eval, out);
    else if (exp->parsed()) cmd_export(xa, *exp, out);
    else if (replay->parsed()) {
      require_file("--manifest", replay_manifest);
      const RunManifest m = RunManifest::read(replay_manifest);
      const auto command = m.get("command");
      if (!command || *command == "replay") {
        err << "error: " << replay_manifest << " does not record a replayable command\n";
        return kExitUsage;
      }
      std::vector<std::string> args{*command};
      for (const auto& [k, v] : m.entries()) {
        if (!is_meta_key(k)) args.push_back("--" + k + "=" + v);
      }
      return run_cli(args, out, err);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace snapspec

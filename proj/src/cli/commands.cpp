#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include "CLI11.hpp"
#include "texa/cli.hpp"
#include "texa/io.hpp"
#include "texa/runtime.hpp"
#include "texa/simd/kernels.hpp"
#include "texa/trainer.hpp"
#include "texa/version.hpp"

namespace texa::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Flag value that parses but makes no sense.
class FlagError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  if (s == "e") return std::numbers::e;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FlagError("bad number '" + s + "' in " + what);
  }
}

std::size_t parse_count(const std::string& s, const std::string& what) {
  const double v = parse_number(s, what);
  if (v < 0 || v != std::floor(v)) throw FlagError("expected a non-negative integer in " + what + ", got '" + s + "'");
  return static_cast<std::size_t>(v);
}

std::pair<std::size_t, std::size_t> parse_extent(const std::string& s, const std::string& what) {
  const auto parts = split(s, 'x');
  if (parts.size() != 2) throw FlagError(what + " must look like HxW, got '" + s + "'");
  return {parse_count(parts[0], what), parse_count(parts[1], what)};
}

// "spec@T" -> (spec, T)
std::pair<std::string, std::size_t> split_at(const std::string& s, const std::string& what) {
  const auto at = s.rfind('@');
  if (at == std::string::npos) return {s, 0};
  return {s.substr(0, at), parse_count(s.substr(at + 1), what)};
}

struct DamageEvent {
  runtime::DamageShape shape;
  runtime::DamageMode mode = runtime::DamageMode::noise;
  std::size_t at = 0;
};

runtime::DamageMode parse_mode(const std::string& s) {
  if (s == "noise") return runtime::DamageMode::noise;
  if (s == "zero") return runtime::DamageMode::zero;
  throw FlagError("damage mode must be noise or zero, got '" + s + "'");
}

DamageEvent parse_damage(const std::string& spec) {
  const auto [body, at] = split_at(spec, "--damage");
  const auto colon = body.find(':');
  if (colon == std::string::npos) throw FlagError("--damage must look like disc:cx,cy,r,mode or rect:x,y,w,h,mode");
  const std::string kind = body.substr(0, colon);
  const auto args = split(body.substr(colon + 1), ',');
  DamageEvent ev;
  ev.at = at;
  if (kind == "disc" && args.size() == 4) {
    ev.shape.kind = runtime::DamageShape::Kind::disc;
    ev.shape.cx = parse_number(args[0], "--damage");
    ev.shape.cy = parse_number(args[1], "--damage");
    ev.shape.r = parse_number(args[2], "--damage");
    if (ev.shape.r < 0) throw FlagError("--damage radius must be non-negative");
    ev.mode = parse_mode(args[3]);
  } else if (kind == "rect" && args.size() == 5) {
    ev.shape.kind = runtime::DamageShape::Kind::rect;
    ev.shape.x = static_cast<std::ptrdiff_t>(parse_number(args[0], "--damage"));
    ev.shape.y = static_cast<std::ptrdiff_t>(parse_number(args[1], "--damage"));
    ev.shape.w = parse_count(args[2], "--damage");
    ev.shape.h = parse_count(args[3], "--damage");
    ev.mode = parse_mode(args[4]);
  } else {
    throw FlagError("cannot parse --damage '" + spec + "'");
  }
  return ev;
}

struct ExpandEvent {
  std::size_t h = 0, w = 0, y = 0, x = 0, at = 0;
};

ExpandEvent parse_expand(const std::string& spec) {
  const auto [body, at] = split_at(spec, "--expand");
  const auto parts = split(body, '+');
  if (parts.empty() || parts.size() == 2 || parts.size() > 3) {
    throw FlagError("--expand must look like HxW or HxW+y+x, got '" + spec + "'");
  }
  ExpandEvent ev;
  std::tie(ev.h, ev.w) = parse_extent(parts[0], "--expand");
  if (parts.size() == 3) {
    ev.y = parse_count(parts[1], "--expand");
    ev.x = parse_count(parts[2], "--expand");
  }
  ev.at = at;
  return ev;
}

json file_ref(const fs::path& p) { return {{"path", p.string()}, {"sha256", io::sha256_file(p)}}; }

void write_json(const fs::path& p, const json& j) {
  const std::string text = j.dump(2) + "\n";
  io::write_file(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

json manifest_base(const std::string& command, const std::vector<std::string>& args) {
  return {{"tool", "texa"}, {"version", kVersion}, {"command", command}, {"args", args}};
}

void write_png_rgb(const fs::path& p, const Tensor& state) { io::write_png(p, io::tensor_to_image(state)); }

// --- train ---------------------------------------------------------------------

int cmd_train(const std::map<std::string, std::string>& f, bool qat, bool hex, const std::vector<std::string>& args,
              std::ostream& out, std::ostream& err) {
  trainer::TrainConfig cfg;
  cfg.size = parse_count(f.at("size"), "--size");
  cfg.steps = parse_count(f.at("steps"), "--steps");
  cfg.batch = parse_count(f.at("batch"), "--batch");
  cfg.pool = parse_count(f.at("pool"), "--pool");
  cfg.lr = static_cast<float>(parse_number(f.at("lr"), "--lr"));
  cfg.seed = parse_count(f.at("seed"), "--seed");
  cfg.qat = qat;
  cfg.geometry = hex ? nca::Geometry::hex : nca::Geometry::square;
  const auto bounds = split(f.at("rollout"), ',');
  if (bounds.size() != 2) throw FlagError("--rollout must look like lo,hi");
  cfg.rollout_lo = parse_count(bounds[0], "--rollout");
  cfg.rollout_hi = parse_count(bounds[1], "--rollout");
  const std::string loss = f.at("loss");
  if (loss == "texture") {
    cfg.head = trainer::LossHead::texture;
  } else if (loss == "feature") {
    cfg.head = trainer::LossHead::feature;
    if (f.at("feature-tap").empty()) throw FlagError("--loss feature needs --feature-tap");
    cfg.feature = {f.at("feature-tap"), parse_count(f.at("feature-channel"), "--feature-channel")};
  } else {
    throw FlagError("--loss must be texture or feature, got '" + loss + "'");
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw FlagError(e.what());
  }

  const fs::path template_path = f.at("template"), observer_path = f.at("observer"), out_path = f.at("out");
  const fs::path metrics_path = f.at("metrics").empty() ? fs::path(out_path.string() + ".metrics.jsonl") : fs::path(f.at("metrics"));
  const fs::path manifest_path = fs::path(out_path.string() + ".manifest.json");
  const Tensor tmpl = io::image_to_tensor(io::read_image(template_path));
  const observer::Graph graph = observer::load_graph(observer_path);
  const json inputs = {{"template", file_ref(template_path)}, {"observer", file_ref(observer_path)}};

  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw io::IoError("cannot open '" + metrics_path.string() + "' for writing");
  std::size_t report = std::max<std::size_t>(1, cfg.steps / 20);
  trainer::FitResult result = trainer::fit(tmpl, graph, cfg, &metrics, [&](const trainer::StepResult& r) {
    if ((r.step + 1) % report == 0 || r.step == 0) {
      out << "step " << r.step + 1 << "/" << cfg.steps << " loss " << r.loss << (r.diverged ? " (diverged)" : "")
          << "\n";
    }
  });
  metrics.close();
  if (cfg.steps > 0 && result.diverged * 2 > cfg.steps) {
    err << "training diverged on " << result.diverged << " of " << cfg.steps << " steps; no model written\n";
    return kDiverged;
  }
  result.model.provenance["inputs"] = inputs;
  nca::save_model(out_path, result.model);
  json manifest = manifest_base("train", args);
  manifest["config"] = cfg.to_json();
  manifest["seed"] = cfg.seed;
  manifest["inputs"] = inputs;
  manifest["outputs"] = {{"model", file_ref(out_path)}};
  manifest["diverged_steps"] = result.diverged;
  manifest["isa"] = std::string(simd::isa_name(simd::kernels().isa));
  write_json(manifest_path, manifest);
  out << "wrote " << out_path.string() << "\n";
  return kOk;
}

// --- run -----------------------------------------------------------------------

struct LoadedModel {
  std::optional<nca::Model> f32;
  std::optional<runtime::QuantizedModel> int8;
  nca::Geometry geometry() const { return f32 ? f32->geometry : int8->geometry; }
};

LoadedModel load_any(const fs::path& p) {
  LoadedModel m;
  if (runtime::is_quantized_file(p)) {
    m.int8 = runtime::load_quantized(p);
  } else {
    m.f32 = nca::load_model(p);
  }
  return m;
}

int cmd_run(const std::map<std::string, std::string>& f, const std::vector<std::string>& damage_specs,
            const std::vector<std::string>& expand_specs, bool quantized, bool hex, bool dump_state,
            const std::vector<std::string>& args, std::ostream& out) {
  const auto [h, w] = parse_extent(f.at("size"), "--size");
  const std::size_t steps = parse_count(f.at("steps"), "--steps");
  const std::uint64_t seed = parse_count(f.at("seed"), "--seed");
  const std::size_t every = parse_count(f.at("snapshot-every"), "--snapshot-every");
  const fs::path model_path = f.at("model"), out_dir = f.at("out-dir");
  std::vector<DamageEvent> damages;
  for (const auto& s : damage_specs) damages.push_back(parse_damage(s));
  std::vector<ExpandEvent> expands;
  for (const auto& s : expand_specs) expands.push_back(parse_expand(s));

  runtime::RunOptions opt;
  opt.topology = runtime::parse_topology(f.at("topology"));
  opt.hex = hex;
  opt.quantized = quantized;
  json inputs = {{"model", file_ref(model_path)}};
  if (!f.at("rotation-field").empty()) {
    opt.rotation = runtime::load_rotation_field(f.at("rotation-field"));
    inputs["rotation_field"] = file_ref(f.at("rotation-field"));
  }
  const LoadedModel model = load_any(model_path);
  if (model.geometry() == nca::Geometry::hex && !hex) {
    throw runtime::GeometryError("model '" + model_path.string() + "' uses a hex grid; pass --hex");
  }
  if (model.int8) opt.quantized = true;

  fs::create_directories(out_dir);
  json outputs = json::object();
  auto emit = [&](const std::string& stem, const Tensor& state, const runtime::QuantizedRunner* q) {
    const fs::path png = out_dir / (stem + ".png");
    write_png_rgb(png, state);
    outputs[png.filename().string()] = io::sha256_file(png);
    if (dump_state) {
      const fs::path ncas = out_dir / (stem + ".ncas");
      if (q) {
        runtime::save_state_int8(ncas, q->codes(), q->height(), q->width(), nca::kChannels, state_grid().scale,
                                 opt.topology);
      } else {
        runtime::save_state(ncas, state, opt.topology);
      }
      outputs[ncas.filename().string()] = io::sha256_file(ncas);
    }
  };
  auto stem_of = [](std::size_t t) {
    std::ostringstream s;
    s << "step_" << std::setw(7) << std::setfill('0') << t;
    return s.str();
  };

  if (!f.at("tiles").empty()) {
    if (!damages.empty() || !expands.empty()) throw FlagError("--tiles cannot be combined with --damage or --expand");
    if (opt.quantized) throw FlagError("--tiles runs the float model only");
    const auto [cols, rows] = parse_extent(f.at("tiles"), "--tiles");
    std::vector<double> rates;
    if (!f.at("rates").empty())
      for (const auto& r : split(f.at("rates"), ',')) rates.push_back(parse_number(r, "--rates"));
    runtime::TilePlan plan;
    try {
      plan = runtime::TilePlan::grid(h, w, cols, rows, rates);
    } catch (const ValueError& e) {
      throw FlagError(e.what());
    }
    runtime::Runner probe(*model.f32, opt, seed);  // validates geometry
    probe.reset(h, w);
    const Tensor final_state = runtime::run_tiled(*model.f32, probe.state(), plan, steps, seed, opt);
    emit("final", final_state, nullptr);
  } else {
    std::optional<runtime::Runner> runner;
    if (model.int8) {
      runner.emplace(*model.int8, opt, seed);
    } else {
      runner.emplace(*model.f32, opt, seed);
    }
    runner->reset(h, w);
    for (std::size_t t = 0;; ++t) {
      for (const auto& ev : expands) {
        if (ev.at != t) continue;
        const Tensor s = runner->state();
        if (opt.rotation) throw FlagError("--expand cannot be combined with --rotation-field");
        runner->set_state(runtime::expand(s, ev.h, ev.w, ev.y, ev.x, rng::derive_seed(seed, 0x45, t)));
      }
      for (const auto& ev : damages) {
        if (ev.at != t) continue;
        Tensor s = runner->state();
        if (runtime::damage(s, ev.shape, ev.mode, rng::derive_seed(seed, 0x44, t)) == 0) {
          out << "warning: damage at step " << t << " does not touch the grid\n";
        }
        runner->set_state(s);
      }
      if (t == steps) break;
      runner->step();
      if (every > 0 && (t + 1) % every == 0) emit(stem_of(t + 1), runner->state(), runner->quantized_runner());
    }
    emit("final", runner->state(), runner->quantized_runner());
  }
  json manifest = manifest_base("run", args);
  manifest["seed"] = seed;
  manifest["config"] = {{"size", {h, w}},           {"steps", steps},
                        {"snapshot_every", every},  {"topology", runtime::topology_name(opt.topology)},
                        {"hex", hex},               {"quantized", opt.quantized},
                        {"damage", damage_specs},   {"expand", expand_specs},
                        {"tiles", f.at("tiles")},   {"rates", f.at("rates")}};
  manifest["inputs"] = inputs;
  manifest["outputs"] = outputs;
  write_json(out_dir / "manifest.json", manifest);
  out << "wrote " << outputs.size() << " files to " << out_dir.string() << "\n";
  return kOk;
}

// --- print / quantize / bench / make-observer -----------------------------------

int cmd_print(const std::map<std::string, std::string>& f, bool dump_state, const std::vector<std::string>& args,
              std::ostream& out) {
  const fs::path model_path = f.at("model"), out_path = f.at("out");
  runtime::PrintOptions po;
  po.band = parse_count(f.at("band"), "--band");
  po.steps_per_band = parse_count(f.at("steps-per-band"), "--steps-per-band");
  po.context = parse_count(f.at("context"), "--context");
  const std::size_t width = parse_count(f.at("width"), "--width");
  const std::size_t rows = parse_count(f.at("rows"), "--rows");
  const std::uint64_t seed = parse_count(f.at("seed"), "--seed");
  if (po.band == 0 || width == 0 || rows == 0) throw FlagError("--band, --width and --rows must be positive");
  const nca::Model model = nca::load_model(model_path);
  const Tensor printed = runtime::print_rows(model, width, rows, po, seed);
  write_png_rgb(out_path, printed);
  json outputs = {{out_path.filename().string(), io::sha256_file(out_path)}};
  if (dump_state) {
    const fs::path ncas = fs::path(out_path).replace_extension(".ncas");
    runtime::save_state(ncas, printed, runtime::Topology::cylinder);
    outputs[ncas.filename().string()] = io::sha256_file(ncas);
  }
  json manifest = manifest_base("print", args);
  manifest["seed"] = seed;
  manifest["config"] = {{"width", width},
                        {"rows", rows},
                        {"band", po.band},
                        {"steps_per_band", po.steps_per_band},
                        {"context", po.context}};
  manifest["inputs"] = {{"model", file_ref(model_path)}};
  manifest["outputs"] = outputs;
  write_json(fs::path(out_path.string() + ".manifest.json"), manifest);
  out << "wrote " << out_path.string() << " (" << rows << "x" << width << ")\n";
  return kOk;
}

int cmd_quantize(const std::map<std::string, std::string>& f, std::ostream& out) {
  const nca::Model model = nca::load_model(f.at("model"));
  const std::uint64_t seed = parse_count(f.at("seed"), "--seed");
  const runtime::QuantizedModel q = runtime::quantize_model(model, runtime::calibration_states(model, seed));
  runtime::save_quantized(f.at("out"), q);
  out << "wrote " << f.at("out") << " (hidden scale " << q.hidden_scale << ")\n";
  return kOk;
}

int cmd_bench(const std::map<std::string, std::string>& f, std::ostream& out) {
  const auto [h, w] = parse_extent(f.at("size"), "--size");
  const std::size_t steps = parse_count(f.at("steps"), "--steps");
  if (steps == 0) throw FlagError("--steps must be positive");
  const LoadedModel model = load_any(f.at("model"));
  runtime::RunOptions opt;
  opt.hex = model.geometry() == nca::Geometry::hex;
  auto time_runner = [&](runtime::Runner& r) {
    r.reset(h, w);
    r.run(2);
    const auto t0 = std::chrono::steady_clock::now();
    r.run(steps);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return static_cast<double>(h * w * steps) / secs;
  };
  json report = {{"size", {h, w}}, {"steps", steps}, {"isa", std::string(simd::isa_name(simd::kernels().isa))}};
  std::optional<runtime::QuantizedModel> q = model.int8;
  if (model.f32) {
    runtime::Runner fr(*model.f32, opt, 0);
    report["float_cells_per_second"] = time_runner(fr);
    q = runtime::quantize_model(*model.f32, runtime::calibration_states(*model.f32, 0));
  }
  runtime::Runner qr(*q, opt, 0);
  report["int8_cells_per_second"] = time_runner(qr);
  out << report.dump(2) << "\n";
  return kOk;
}

int cmd_make_observer(const std::map<std::string, std::string>& f, std::ostream& out) {
  const std::uint64_t seed = parse_count(f.at("seed"), "--seed");
  const std::string kind = f.at("kind");
  observer::Graph g;
  if (kind == "random") {
    g = observer::random_texture_net(seed);
  } else if (kind == "vgg16-layout") {
    g = observer::vgg16_layout(seed, f.at("last-tap"));
  } else {
    throw FlagError("--kind must be random or vgg16-layout, got '" + kind + "'");
  }
  observer::save_graph(f.at("out"), g);
  out << "wrote " << f.at("out") << " (" << g.layers().size() << " layers, taps";
  for (const auto& t : g.taps()) out << " " << t;
  out << ", sha256 " << io::sha256_file(f.at("out")) << ")\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"texa: texture cellular automata"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  // one flag table per subcommand; std::map references stay valid across inserts
  std::map<std::string, std::map<std::string, std::string>> flags;
  auto opt = [&](CLI::App* sub, const std::string& name, const std::string& def, const std::string& help,
                 bool required = false) {
    std::string& slot = flags[sub->get_name()][name];
    slot = def;
    auto* o = sub->add_option("--" + name, slot, help);
    if (required) o->required();
    return o;
  };
  bool qat = false, hex = false, quantized = false, dump_state = false;
  std::vector<std::string> damage_specs, expand_specs;

  auto* train = app.add_subcommand("train", "train a model against a template image");
  opt(train, "template", "", "template image (PNG or JPEG)", true);
  opt(train, "observer", "", "observer network (OBSV file)", true);
  opt(train, "out", "", "output model (NCAM)", true);
  opt(train, "size", "128", "training grid size");
  opt(train, "steps", "8000", "training steps");
  opt(train, "batch", "4", "rollouts per step");
  opt(train, "pool", "1024", "state pool capacity");
  opt(train, "lr", "2e-3", "learning rate (x0.1 after step 2000)");
  opt(train, "seed", "0", "random seed");
  opt(train, "rollout", "32,64", "rollout length bounds lo,hi");
  opt(train, "loss", "texture", "texture | feature");
  opt(train, "feature-tap", "", "observer tap for --loss feature");
  opt(train, "feature-channel", "0", "channel for --loss feature");
  opt(train, "metrics", "", "metrics JSON-lines path (default OUT.metrics.jsonl)");
  train->add_flag("--qat", qat, "quantization-aware training");
  train->add_flag("--hex", hex, "train on a hex grid");

  auto* runc = app.add_subcommand("run", "run a trained model");
  opt(runc, "model", "", "model (NCAM, f32 or int8)", true);
  opt(runc, "size", "128x128", "grid HxW");
  opt(runc, "steps", "1000", "steps");
  opt(runc, "seed", "0", "random seed");
  opt(runc, "snapshot-every", "0", "write a snapshot every K steps");
  opt(runc, "out-dir", "", "output directory", true);
  opt(runc, "topology", "torus", "torus | open | cylinder");
  opt(runc, "rotation-field", "", "rotation field (single-channel NCAS, radians)");
  opt(runc, "tiles", "", "tile grid NxM (columns x rows)");
  opt(runc, "rates", "", "per-tile rates, comma separated ('e' allowed)");
  runc->add_option("--damage", damage_specs, "disc:cx,cy,r,noise|zero@T or rect:x,y,w,h,noise|zero@T");
  runc->add_option("--expand", expand_specs, "HxW+y+x@T");
  runc->add_flag("--quantized", quantized, "int8 inference");
  runc->add_flag("--hex", hex, "hex kernels");
  runc->add_flag("--dump-state", dump_state, "also write NCAS state dumps");

  auto* print = app.add_subcommand("print", "print a tall texture band by band");
  opt(print, "model", "", "model (NCAM f32)", true);
  opt(print, "out", "", "output PNG", true);
  opt(print, "width", "128", "columns");
  opt(print, "rows", "512", "rows");
  opt(print, "band", "64", "rows per band");
  opt(print, "steps-per-band", "256", "steps per band");
  opt(print, "context", "16", "frozen rows kept above each band");
  opt(print, "seed", "0", "random seed");
  print->add_flag("--dump-state", dump_state, "also write an NCAS dump");

  auto* quant = app.add_subcommand("quantize", "convert an f32 model to int8");
  opt(quant, "model", "", "input model (NCAM f32)", true);
  opt(quant, "out", "", "output model (NCAM int8)", true);
  opt(quant, "seed", "0", "calibration seed");

  auto* bench = app.add_subcommand("bench", "measure float and int8 throughput");
  opt(bench, "model", "", "model (NCAM)", true);
  opt(bench, "size", "128x128", "grid HxW");
  opt(bench, "steps", "32", "timed steps");

  auto* mko = app.add_subcommand("make-observer", "write an observer network file");
  opt(mko, "kind", "random", "random | vgg16-layout");
  opt(mko, "seed", "0", "weight seed");
  opt(mko, "last-tap", "conv5_1", "deepest tap for vgg16-layout");
  opt(mko, "out", "", "output OBSV file", true);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kBadFlags;
  }

  try {
    const auto& f = flags[app.get_subcommands().front()->get_name()];
    if (*train) return cmd_train(f, qat, hex, args, out, err);
    if (*runc) return cmd_run(f, damage_specs, expand_specs, quantized, hex, dump_state, args, out);
    if (*print) return cmd_print(f, dump_state, args, out);
    if (*quant) return cmd_quantize(f, out);
    if (*bench) return cmd_bench(f, out);
    if (*mko) return cmd_make_observer(f, out);
  } catch (const FlagError& e) {
    err << "error: " << e.what() << "\n";
    return kBadFlags;
  } catch (const runtime::GeometryError& e) {
    err << "geometry error: " << e.what() << "\n";
    return kGeometry;
  } catch (const io::IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kIoError;
  } catch (const io::FormatError& e) {
    err << "io error: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kIoError;
  } catch (const nca::DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kBadFlags;
  } catch (const ValueError& e) {
    err << "error: " << e.what() << "\n";
    return kBadFlags;
  }
  return kBadFlags;
}

}  // namespace texa::cli

#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "dpq/codebook.hpp"
#include "dpq/decoder.hpp"
#include "dpq/descriptor_store.hpp"
#include "dpq/error.hpp"
#include "dpq/evalbench.hpp"
#include "dpq/map_compress.hpp"
#include "dpq/parallel.hpp"
#include "dpq/trainer.hpp"

namespace dpq::cli {
namespace {

using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return kIo;
    case ErrorKind::Config: return kConfig;
    case ErrorKind::Infeasible: return kInfeasible;
    case ErrorKind::Format:
    case ErrorKind::Integrity: return kFormat;
    case ErrorKind::Numeric:
    case ErrorKind::Training: return kNumeric;
    case ErrorKind::Dimension:
    case ErrorKind::DegenerateInput:
    case ErrorKind::Input:
    case ErrorKind::State: return kInput;
  }
  return kInternal;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return json(s).dump();
}

void report_error(std::string_view kind, int code, const std::string& msg) {
  std::cerr << "error kind=" << kind << " exit=" << code << " message=" << one_line(msg) << "\n";
}

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Collects what a run read and wrote, then writes <out>.manifest.json.
class Manifest {
 public:
  Manifest(std::string command, std::uint64_t seed) : command_(std::move(command)), seed_(seed) {}

  void config(const std::string& key, const std::string& value) { config_[key] = value; }
  void config_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) config_[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  void input(const std::string& path) { inputs_[path] = io::to_hex(io::sha256(io::read_file(path))); }
  void output(const std::string& path) { outputs_.push_back(path); }

  void write(const std::string& path, std::optional<double> wall_time_s) const {
    json j;
    j["command"] = command_;
    j["version"] = kVersion;
    j["seed"] = seed_;
    j["config"] = config_;
    j["inputs"] = inputs_;
    json outs = json::array();
    for (const auto& o : outputs_) outs.push_back({{"path", o}, {"sha256", io::to_hex(io::sha256(io::read_file(o)))}});
    j["outputs"] = outs;
    if (wall_time_s) j["wall_time_s"] = *wall_time_s;
    io::write_text(path, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::uint64_t seed_;
  std::map<std::string, std::string> config_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
};

struct Common {
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string config;
  std::string out;
  bool record_wall_time = false;
};

void add_common(CLI::App* app, Common& c, bool out_required = true) {
  app->add_option("--seed", c.seed, "Seed for every random draw");
  app->add_option("--threads", c.threads, "Worker thread cap (0 = all cores)");
  app->add_option("--config", c.config, "key=value config file");
  auto* out = app->add_option("--out", c.out, "Output path (or prefix)");
  if (out_required) out->required();
  app->add_flag("--record-wall-time", c.record_wall_time, "Add wall time to the manifest (breaks byte-identical reruns)");
}

// Training flags mirror TrainConfig keys; only flags given on the command
// line override the config file.
struct TrainFlags {
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> opts;

  void add(CLI::App* app) {
    static const char* kKeys[] = {"epochs", "batch_size", "lr", "margin", "tau", "lambda_d", "loss_variant",
                                  "hidden", "lora_rank", "kmeans_iters", "npair_n", "val_fraction",
                                  "lr_codebook_scale", "lr_decoder_scale"};
    for (const char* k : kKeys) opts.emplace_back(k, app->add_option(std::string("--") + k, values[k]));
    opts.emplace_back("M", app->add_option("--M,--m", values["M"], "Subspaces"));
    opts.emplace_back("K", app->add_option("--K,--k", values["K"], "Centroids per subspace"));
  }

  TrainConfig resolve(const Common& c) const {
    TrainConfig cfg;
    if (!c.config.empty()) cfg = load_train_config(c.config);
    for (const auto& [key, opt] : opts)
      if (opt->count() > 0) set_train_config_value(cfg, key, values.at(key));
    cfg.seed = c.seed;
    return cfg;
  }
};

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); }
};

void finish(const Manifest& m, const Common& c, const Timer& t, const std::string& manifest_path) {
  m.write(manifest_path, c.record_wall_time ? std::optional<double>(t.seconds()) : std::nullopt);
}

void log_epoch(const EpochStats& s) {
  std::fprintf(stderr, "epoch %zu train_loss=%.6f val_loss=%.6f recon_err=%.6f recall1=%.4f\n", s.epoch,
               s.train_loss, s.val_loss, s.recon_err, s.recall1);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Differentiable product quantization for descriptor maps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // synth
  Common synth_c;
  std::string synth_kind = "descriptors";
  std::size_t clusters = 32, per_cluster = 200, dim = 64, points = 1000;
  double spread = 0.08;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic descriptor set or scene");
  add_common(synth, synth_c);
  synth->add_option("--kind", synth_kind)->check(CLI::IsMember({"descriptors", "scene"}));
  synth->add_option("--clusters", clusters);
  synth->add_option("--per-cluster", per_cluster);
  synth->add_option("--dim", dim);
  synth->add_option("--spread", spread);
  synth->add_option("--points", points, "Scene point count");

  // fit
  Common fit_c;
  std::string fit_in;
  std::size_t fit_m = 4, fit_k = 16, fit_iters = kDefaultKMeansIters;
  bool fit_dups = false;
  auto* fit = app.add_subcommand("fit", "Fit a PQ codebook with k-means");
  add_common(fit, fit_c);
  fit->add_option("--in", fit_in)->required();
  fit->add_option("--M,--m", fit_m);
  fit->add_option("--K,--k", fit_k);
  fit->add_option("--kmeans_iters,--iters", fit_iters);
  fit->add_flag("--allow-duplicates", fit_dups);

  // train
  Common train_c;
  TrainFlags train_f;
  std::string train_in;
  auto* train_cmd = app.add_subcommand("train", "Train codebook and decoder end to end");
  add_common(train_cmd, train_c);
  train_cmd->add_option("--in", train_in)->required();
  train_f.add(train_cmd);

  // finetune-lora
  Common ft_c;
  TrainFlags ft_f;
  std::string ft_in, ft_cb, ft_dec;
  auto* ft = app.add_subcommand("finetune-lora", "Adapt a trained decoder with LoRA factors");
  add_common(ft, ft_c);
  ft->add_option("--in", ft_in)->required();
  ft->add_option("--codebook", ft_cb)->required();
  ft->add_option("--decoder", ft_dec)->required();
  ft_f.add(ft);

  // quantize
  Common q_c;
  std::string q_in, q_cb;
  auto* quant = app.add_subcommand("quantize", "Encode descriptors to PQ codes");
  add_common(quant, q_c);
  quant->add_option("--in", q_in)->required();
  quant->add_option("--codebook", q_cb)->required();

  // dequantize
  Common dq_c;
  std::string dq_in, dq_cb, dq_dec;
  auto* dequant = app.add_subcommand("dequantize", "Decode PQ codes, optionally through the decoder");
  add_common(dequant, dq_c);
  dequant->add_option("--in", dq_in)->required();
  dequant->add_option("--codebook", dq_cb)->required();
  dequant->add_option("--decoder", dq_dec);

  // compress-map
  Common cm_c;
  std::string cm_in, cm_kernel = "rbf";
  MapCompressionOptions cm_opts;
  auto* cm = app.add_subcommand("compress-map", "Select scene points by the map-compression QP");
  add_common(cm, cm_c);
  cm->add_option("--in", cm_in)->required();
  cm->add_option("--alpha", cm_opts.alpha);
  cm->add_option("--sigma", cm_opts.sigma, "RBF width (0 = median pairwise distance)");
  cm->add_option("--tau_qp,--tau-qp", cm_opts.tau_qp);
  cm->add_option("--iters", cm_opts.qp.iters);
  cm->add_option("--kernel", cm_kernel)->check(CLI::IsMember({"rbf", "distance"}));
  cm->add_option("--max_points,--max-points", cm_opts.max_points);

  // budget
  Common b_c;
  b_c.out = "budget.json";
  double b_bytes = 0.0, b_overhead = 0.0;
  std::uint64_t b_n = 0;
  std::size_t b_m = 4, b_k = 256;
  auto* budget = app.add_subcommand("budget", "Plan (M, alpha) for a memory budget");
  add_common(budget, b_c, false);
  budget->add_option("--bytes", b_bytes)->required();
  budget->add_option("--n", b_n)->required();
  budget->add_option("--M,--m", b_m);
  budget->add_option("--K,--k", b_k);
  budget->add_option("--overhead", b_overhead);

  // eval
  Common ev_c;
  std::string ev_in, ev_cb, ev_dec;
  double ev_noise = 0.05;
  std::size_t ev_triplets = kDefaultRankingTriplets;
  auto* ev = app.add_subcommand("eval", "Matching benchmark: raw vs PQ vs decoder");
  add_common(ev, ev_c);
  ev->add_option("--in", ev_in)->required();
  ev->add_option("--codebook", ev_cb)->required();
  ev->add_option("--decoder", ev_dec);
  ev->add_option("--noise", ev_noise);
  ev->add_option("--triplets", ev_triplets);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(std::move(rev));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", kUsage, e.what());
    return kUsage;
  }

  try {
    const Timer timer;
    if (synth->parsed()) {
      set_max_threads(synth_c.threads);
      Manifest m("synth", synth_c.seed);
      m.config("kind", synth_kind);
      if (synth_kind == "descriptors") {
        m.config("clusters", std::to_string(clusters));
        m.config("per_cluster", std::to_string(per_cluster));
        m.config("dim", std::to_string(dim));
        m.config("spread", real(spread));
        save_descriptors(synth_descriptors(clusters, per_cluster, dim, spread, synth_c.seed), synth_c.out);
      } else {
        m.config("points", std::to_string(points));
        m.config("clusters", std::to_string(clusters));
        save_scene(synth_scene(points, clusters, synth_c.seed), synth_c.out);
      }
      m.output(synth_c.out);
      finish(m, synth_c, timer, synth_c.out + ".manifest.json");
    } else if (fit->parsed()) {
      set_max_threads(fit_c.threads);
      Manifest m("fit", fit_c.seed);
      m.input(fit_in);
      m.config("M", std::to_string(fit_m));
      m.config("K", std::to_string(fit_k));
      m.config("kmeans_iters", std::to_string(fit_iters));
      m.config("allow_duplicates", fit_dups ? "1" : "0");
      const auto set = load_descriptors(fit_in);
      set.validate();
      save_codebook(fit_codebook(set, fit_m, fit_k, fit_iters, fit_c.seed, fit_dups), fit_c.out);
      m.output(fit_c.out);
      finish(m, fit_c, timer, fit_c.out + ".manifest.json");
    } else if (train_cmd->parsed()) {
      set_max_threads(train_c.threads);
      const TrainConfig cfg = train_f.resolve(train_c);
      Manifest m("train", cfg.seed);
      m.input(train_in);
      if (!train_c.config.empty()) m.input(train_c.config);
      m.config_text(to_config_text(cfg));
      const auto set = load_descriptors(train_in);
      const TrainResult r = train(set, cfg, log_epoch);
      const std::string& p = train_c.out;
      save_codebook(r.codebook, p + ".cbk");
      save_decoder(r.decoder, p + ".dec");
      io::write_text(p + ".rpt", r.report.to_text());
      m.output(p + ".cbk");
      m.output(p + ".dec");
      m.output(p + ".rpt");
      finish(m, train_c, timer, p + ".manifest.json");
    } else if (ft->parsed()) {
      set_max_threads(ft_c.threads);
      TrainConfig cfg = ft_f.resolve(ft_c);
      cfg.lora_mode = true;
      Manifest m("finetune-lora", cfg.seed);
      m.input(ft_in);
      m.input(ft_cb);
      m.input(ft_dec);
      if (!ft_c.config.empty()) m.input(ft_c.config);
      m.config_text(to_config_text(cfg));
      const auto set = load_descriptors(ft_in);
      const TrainResult r = finetune_lora(set, load_codebook(ft_cb), load_decoder(ft_dec), cfg, log_epoch);
      const std::string& p = ft_c.out;
      save_decoder(r.decoder, p + ".dec");
      save_lora_delta(r.decoder, p + ".lra");
      io::write_text(p + ".rpt", r.report.to_text());
      m.output(p + ".dec");
      m.output(p + ".lra");
      m.output(p + ".rpt");
      finish(m, ft_c, timer, p + ".manifest.json");
    } else if (quant->parsed()) {
      set_max_threads(q_c.threads);
      Manifest m("quantize", q_c.seed);
      m.input(q_in);
      m.input(q_cb);
      const auto cb = load_codebook(q_cb);
      cb.validate();
      save_index(pq_encode(cb, load_descriptors(q_in)), q_c.out);
      m.output(q_c.out);
      finish(m, q_c, timer, q_c.out + ".manifest.json");
    } else if (dequant->parsed()) {
      set_max_threads(dq_c.threads);
      Manifest m("dequantize", dq_c.seed);
      m.input(dq_in);
      m.input(dq_cb);
      const auto cb = load_codebook(dq_cb);
      DescriptorSet out = pq_decode(cb, load_index(dq_in));
      if (!dq_dec.empty()) {
        m.input(dq_dec);
        out.descriptors = decoder_forward(out.descriptors, load_decoder(dq_dec));
      }
      save_descriptors(out, dq_c.out);
      m.output(dq_c.out);
      finish(m, dq_c, timer, dq_c.out + ".manifest.json");
    } else if (cm->parsed()) {
      set_max_threads(cm_c.threads);
      Manifest m("compress-map", cm_c.seed);
      m.input(cm_in);
      cm_opts.kernel = parse_kernel_kind(cm_kernel);
      m.config("alpha", real(cm_opts.alpha));
      m.config("sigma", real(cm_opts.sigma));
      m.config("tau_qp", real(cm_opts.tau_qp));
      m.config("iters", std::to_string(cm_opts.qp.iters));
      m.config("kernel", cm_kernel);
      m.config("max_points", std::to_string(cm_opts.max_points));
      const auto scene = load_scene(cm_in);
      const auto res = compress_map(scene, cm_opts);
      std::string idx;
      for (auto i : res.selected) idx += std::to_string(i) + "\n";
      const std::string& p = cm_c.out;
      io::write_text(p + ".idx", idx);
      json summary;
      summary["objective"] = res.solution.objective;
      summary["alpha"] = cm_opts.alpha;
      summary["sigma"] = res.sigma;
      summary["points_total"] = scene.size();
      summary["points_considered"] = res.points_considered;
      summary["selected_count"] = res.selected.size();
      summary["iterations"] = res.solution.iterations;
      io::write_text(p + ".summary.json", summary.dump(2) + "\n");
      m.output(p + ".idx");
      m.output(p + ".summary.json");
      finish(m, cm_c, timer, p + ".manifest.json");
    } else if (budget->parsed()) {
      Manifest m("budget", b_c.seed);
      const auto plan = plan_budget(b_bytes, b_n, b_m, b_k, b_overhead);
      m.config("bytes", real(b_bytes));
      m.config("n", std::to_string(b_n));
      m.config("M", std::to_string(b_m));
      m.config("K", std::to_string(b_k));
      m.config("overhead", real(b_overhead));
      json j;
      j["budget_bytes"] = plan.budget_bytes;
      j["overhead_bytes"] = plan.overhead_bytes;
      j["code_budget_bytes"] = plan.code_budget_bytes;
      j["full_code_bytes"] = plan.full_code_bytes;
      j["M"] = plan.M;
      j["K"] = plan.K;
      j["descriptor_count"] = plan.descriptor_count;
      j["alpha"] = plan.alpha;
      j["selected_count"] = plan.selected_count;
      const std::string text = j.dump(2) + "\n";
      std::cout << text;
      io::write_text(b_c.out, text);
      m.output(b_c.out);
      finish(m, b_c, timer, b_c.out + ".manifest.json");
    } else if (ev->parsed()) {
      set_max_threads(ev_c.threads);
      Manifest m("eval", ev_c.seed);
      m.input(ev_in);
      m.input(ev_cb);
      m.config("noise", real(ev_noise));
      m.config("triplets", std::to_string(ev_triplets));
      const auto set = load_descriptors(ev_in);
      const auto cb = load_codebook(ev_cb);
      std::string table = results_table_header();
      table += results_table_row(raw_bench(set, ev_noise, ev_c.seed, ev_triplets));
      table += results_table_row(asymmetric_bench(set, ev_noise, cb, nullptr, ev_c.seed, ev_triplets));
      if (!ev_dec.empty()) {
        m.input(ev_dec);
        const auto dec = load_decoder(ev_dec);
        table += results_table_row(asymmetric_bench(set, ev_noise, cb, &dec, ev_c.seed, ev_triplets));
        table += results_table_row(symmetric_bench(set, ev_noise, cb, &dec, ev_c.seed, ev_triplets));
      }
      std::cout << table;
      io::write_text(ev_c.out, table);
      m.output(ev_c.out);
      finish(m, ev_c, timer, ev_c.out + ".manifest.json");
    }
  } catch (const Error& e) {
    const int code = exit_code_for(e.kind());
    report_error(to_string(e.kind()), code, e.what());
    return code;
  } catch (const std::exception& e) {
    report_error("internal", kInternal, e.what());
    return kInternal;
  }
  return kOk;
}

}  // namespace dpq::cli

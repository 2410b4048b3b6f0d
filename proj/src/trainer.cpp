#include "dpq/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dpq/adam.hpp"
#include "dpq/dpq_encoder.hpp"
#include "dpq/error.hpp"
#include "dpq/evalbench.hpp"
#include "dpq/rng.hpp"

namespace dpq {
namespace {

constexpr std::uint64_t kSplitTag = 0x51;
constexpr std::uint64_t kShuffleTag = 0x52;
constexpr std::uint64_t kDecoderInitTag = 0x53;
constexpr std::uint64_t kLoraInitTag = 0x54;
constexpr std::uint64_t kCodebookTag = 0x55;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') fail(ErrorKind::Config, key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || !std::isfinite(x)) fail(ErrorKind::Config, key + ": expected a real number, got '" + v + "'");
  return x;
}

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  fail(ErrorKind::Config, key + ": expected a boolean, got '" + v + "'");
}

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool finite(const Matrix& m) { return m.all_finite(); }

void check_finite(bool ok, const char* what, std::size_t epoch, std::size_t batch) {
  if (!ok) {
    fail(ErrorKind::Training, std::string("diverged: non-finite ") + what + " at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch));
  }
}

struct Optimizers {
  std::vector<AdamState> centroids;
  AdamState w1, w2;
  AdamState a1, b1, a2, b2;
};

Optimizers make_optimizers(const Codebook& cb, const DecoderWeights& dec, const TrainConfig& cfg) {
  Optimizers o;
  AdamConfig cb_cfg;
  cb_cfg.lr = cfg.lr * cfg.lr_codebook_scale;
  AdamConfig dec_cfg;
  dec_cfg.lr = cfg.lr * cfg.lr_decoder_scale;
  for (const auto& c : cb.centroids) o.centroids.push_back(AdamState::for_shape(c.rows(), c.cols(), cb_cfg));
  o.w1 = AdamState::for_shape(dec.D, dec.H, dec_cfg);
  o.w2 = AdamState::for_shape(dec.H, dec.D, dec_cfg);
  if (dec.lora) {
    const auto& l = *dec.lora;
    o.a1 = AdamState::for_shape(l.A1.rows(), l.A1.cols(), dec_cfg);
    o.b1 = AdamState::for_shape(l.B1.rows(), l.B1.cols(), dec_cfg);
    o.a2 = AdamState::for_shape(l.A2.rows(), l.A2.cols(), dec_cfg);
    o.b2 = AdamState::for_shape(l.B2.rows(), l.B2.cols(), dec_cfg);
  }
  return o;
}

// Shared loop for full training and LoRA finetuning.
TrainReport run_epochs(const DataSplit& split, Codebook& cb, DecoderWeights& dec, const TrainConfig& cfg,
                       const EpochCallback& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  const bool lora = cfg.lora_mode;
  const LossConfig loss_cfg = cfg.loss();
  const Temperature tau(cfg.tau);
  Optimizers opt = make_optimizers(cb, dec, cfg);

  TrainReport report;
  {
    const Matrix hard = reconstruct(split.validation.descriptors, cb, nullptr);
    report.initial_pq_recon_err = mean(reconstruction_errors(split.validation.descriptors, hard));
  }
  report.initial = validate(split.validation, cb, dec, cfg);

  const std::size_t n_train = split.train.size();
  const std::size_t batches = n_train / cfg.batch_size;
  Rng shuffle_rng = Rng::derive(cfg.seed, kShuffleTag);
  const bool grouped = !split.train.groups.empty();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = permutation(n_train, shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::span<const std::size_t> rows(order.data() + b * cfg.batch_size, cfg.batch_size);
      const Matrix x = gather_rows(split.train.descriptors, rows);
      std::vector<std::uint64_t> groups;
      if (grouped)
        for (auto r : rows) groups.push_back(split.train.groups[r]);

      const EncoderForward enc = encode_forward(x, cb, tau);
      std::optional<DecoderCache> cache = decoder_forward_cached(enc.output, dec);
      const LossResult loss = compute_loss(x, cache->output, loss_cfg, groups);
      check_finite(std::isfinite(loss.loss) && finite(loss.grad), "loss", epoch, b);

      const DecoderGrads dg = decoder_backward(cache, dec, loss.grad);
      if (lora) {
        check_finite(finite(*dg.A1) && finite(*dg.B1) && finite(*dg.A2) && finite(*dg.B2), "gradient", epoch, b);
        adam_update(opt.a1, dec.lora->A1, *dg.A1);
        adam_update(opt.b1, dec.lora->B1, *dg.B1);
        adam_update(opt.a2, dec.lora->A2, *dg.A2);
        adam_update(opt.b2, dec.lora->B2, *dg.B2);
      } else {
        const EncoderGrads eg = encode_backward(enc, dg.input);
        bool ok = finite(*dg.W1) && finite(*dg.W2);
        for (const auto& g : eg.centroids) ok = ok && finite(g);
        check_finite(ok, "gradient", epoch, b);
        for (std::size_t m = 0; m < cb.M; ++m) adam_update(opt.centroids[m], cb.centroids[m], eg.centroids[m]);
        adam_update(opt.w1, dec.W1, *dg.W1);
        adam_update(opt.w2, dec.W2, *dg.W2);
      }
      loss_sum += loss.loss;
    }

    const ValidationMetrics val = validate(split.validation, cb, dec, cfg);
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    st.val_loss = val.loss;
    st.recon_err = val.recon_mean;
    st.recon_median = val.recon_median;
    st.recall1 = val.recall1;
    check_finite(std::isfinite(st.train_loss) && std::isfinite(st.val_loss) && std::isfinite(st.recon_err),
                 "epoch metrics", epoch, batches);
    report.epochs.push_back(st);
    if (on_epoch) on_epoch(st);
  }

  report.codebook_hash = io::to_hex(io::sha256(encode_codebook(cb)));
  report.decoder_hash = io::to_hex(io::sha256(encode_decoder(dec)));
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) fail(ErrorKind::Config, "batch_size must be >= 2");
  if (!(lr >= 0.0)) fail(ErrorKind::Config, "lr must be >= 0");
  if (!(margin >= 0.0)) fail(ErrorKind::Config, "margin must be >= 0");
  if (!(tau > 0.0)) fail(ErrorKind::Config, "tau must be > 0");
  if (!(lambda_d >= 0.0)) fail(ErrorKind::Config, "lambda_d must be >= 0");
  if (M == 0 || K == 0 || hidden == 0) fail(ErrorKind::Config, "M, K and hidden must be >= 1");
  if (lora_mode && lora_rank == 0) fail(ErrorKind::Config, "lora_rank must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail(ErrorKind::Config, "val_fraction must be in (0,1)");
  if (!(lr_codebook_scale >= 0.0 && lr_decoder_scale >= 0.0)) fail(ErrorKind::Config, "lr scales must be >= 0");
  if (loss_variant == LossVariant::NPair && (npair_n < 2 || npair_n > batch_size))
    fail(ErrorKind::Config, "npair_n must be in [2, batch_size]");
}

LossConfig TrainConfig::loss() const {
  LossConfig l;
  l.margin = margin;
  l.lambda_d = lambda_d;
  l.variant = loss_variant;
  l.npair_n = npair_n;
  return l;
}

void set_train_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "epochs") cfg.epochs = parse_count(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_count(key, value);
  else if (key == "lr") cfg.lr = parse_real(key, value);
  else if (key == "margin") cfg.margin = parse_real(key, value);
  else if (key == "tau") cfg.tau = parse_real(key, value);
  else if (key == "lambda_d") cfg.lambda_d = parse_real(key, value);
  else if (key == "M") cfg.M = parse_count(key, value);
  else if (key == "K") cfg.K = parse_count(key, value);
  else if (key == "seed") cfg.seed = parse_count(key, value);
  else if (key == "lora_mode") cfg.lora_mode = parse_flag(key, value);
  else if (key == "loss_variant") cfg.loss_variant = parse_loss_variant(value);
  else if (key == "hidden") cfg.hidden = parse_count(key, value);
  else if (key == "lora_rank") cfg.lora_rank = parse_count(key, value);
  else if (key == "kmeans_iters") cfg.kmeans_iters = parse_count(key, value);
  else if (key == "npair_n") cfg.npair_n = parse_count(key, value);
  else if (key == "val_fraction") cfg.val_fraction = parse_real(key, value);
  else if (key == "lr_codebook_scale") cfg.lr_codebook_scale = parse_real(key, value);
  else if (key == "lr_decoder_scale") cfg.lr_decoder_scale = parse_real(key, value);
  else fail(ErrorKind::Config, "unknown config key '" + key + "'");
}

TrainConfig parse_train_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Config, "config line " + std::to_string(lineno) + ": expected key=value");
    set_train_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

TrainConfig load_train_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), std::move(base));
}

std::string to_config_text(const TrainConfig& c) {
  std::ostringstream o;
  o << "epochs=" << c.epochs << "\n"
    << "batch_size=" << c.batch_size << "\n"
    << "lr=" << fmt_real(c.lr) << "\n"
    << "margin=" << fmt_real(c.margin) << "\n"
    << "tau=" << fmt_real(c.tau) << "\n"
    << "lambda_d=" << fmt_real(c.lambda_d) << "\n"
    << "M=" << c.M << "\n"
    << "K=" << c.K << "\n"
    << "seed=" << c.seed << "\n"
    << "lora_mode=" << (c.lora_mode ? 1 : 0) << "\n"
    << "loss_variant=" << to_string(c.loss_variant) << "\n"
    << "hidden=" << c.hidden << "\n"
    << "lora_rank=" << c.lora_rank << "\n"
    << "kmeans_iters=" << c.kmeans_iters << "\n"
    << "npair_n=" << c.npair_n << "\n"
    << "val_fraction=" << fmt_real(c.val_fraction) << "\n"
    << "lr_codebook_scale=" << fmt_real(c.lr_codebook_scale) << "\n"
    << "lr_decoder_scale=" << fmt_real(c.lr_decoder_scale) << "\n";
  return o.str();
}

std::string TrainReport::to_text() const {
  std::string out;
  char buf[192];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu %.9g %.9g %.9g %.9g\n", e.epoch, e.train_loss, e.val_loss, e.recon_err,
                  e.recall1);
    out += buf;
  }
  return out;
}

DataSplit split_train_validation(const DescriptorSet& set, double val_fraction, std::uint64_t seed) {
  set.validate();
  Rng rng = Rng::derive(seed, kSplitTag);
  const auto order = permutation(set.size(), rng);
  const auto n_val = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(set.size()))));
  if (n_val >= set.size()) fail(ErrorKind::Input, "descriptor set too small to split");
  DataSplit s;
  s.validation = subset(set, std::span(order).first(n_val));
  s.train = subset(set, std::span(order).subspan(n_val));
  return s;
}

ValidationMetrics validate(const DescriptorSet& set, const Codebook& codebook, const DecoderWeights& decoder,
                           const TrainConfig& cfg) {
  ValidationMetrics v;
  const Matrix x_hat = reconstruct(set.descriptors, codebook, &decoder);
  const auto err = reconstruction_errors(set.descriptors, x_hat);
  v.recon_mean = mean(err);
  v.recon_median = median(err);

  DescriptorSet db;
  db.descriptors = x_hat;
  db.ids = set.ids;
  v.recall1 = recall_at_k(set, db, set.ids, 1);

  // Loss over batch-sized chunks, weighted by chunk size.
  const LossConfig lc = cfg.loss();
  const std::size_t n = set.size();
  const std::size_t chunk = std::max<std::size_t>(cfg.batch_size, 2);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t b = 0; b < n; b += chunk) {
    const std::size_t e = std::min(n, b + chunk);
    const std::size_t min_rows = lc.variant == LossVariant::NPair ? lc.npair_n : 2;
    if (e - b < min_rows) break;
    std::vector<std::size_t> rows(e - b);
    for (std::size_t i = b; i < e; ++i) rows[i - b] = i;
    std::vector<std::uint64_t> groups;
    if (!set.groups.empty())
      for (auto r : rows) groups.push_back(set.groups[r]);
    const auto r = compute_loss(gather_rows(set.descriptors, rows), gather_rows(x_hat, rows), lc, groups);
    total += r.loss * static_cast<double>(rows.size());
    counted += rows.size();
  }
  v.loss = counted ? total / static_cast<double>(counted) : 0.0;
  return v;
}

TrainResult train(const DescriptorSet& set, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (cfg.lora_mode) fail(ErrorKind::Config, "train: lora_mode is for finetune_lora");
  if (set.dim() % cfg.M != 0)
    fail(ErrorKind::Config, "train: D=" + std::to_string(set.dim()) + " not divisible by M=" + std::to_string(cfg.M));
  const DataSplit split = split_train_validation(set, cfg.val_fraction, cfg.seed);
  if (split.train.size() < cfg.batch_size) {
    fail(ErrorKind::Input, "train: " + std::to_string(split.train.size()) +
                               " training rows cannot fill one batch of " + std::to_string(cfg.batch_size));
  }

  TrainResult res;
  res.codebook = fit_codebook(split.train, cfg.M, cfg.K, cfg.kmeans_iters, Rng::derive(cfg.seed, kCodebookTag).next(),
                              true);
  res.decoder = init_decoder(set.dim(), cfg.hidden, Rng::derive(cfg.seed, kDecoderInitTag).next());
  res.report = run_epochs(split, res.codebook, res.decoder, cfg, on_epoch);
  return res;
}

TrainResult finetune_lora(const DescriptorSet& set, const Codebook& codebook, const DecoderWeights& base,
                          const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (!cfg.lora_mode) fail(ErrorKind::Config, "finetune_lora: lora_mode must be set");
  base.validate();
  codebook.validate();
  if (set.dim() != codebook.dim() || set.dim() != base.D) fail(ErrorKind::Dimension, "finetune_lora: dims disagree");
  const DataSplit split = split_train_validation(set, cfg.val_fraction, cfg.seed);
  if (split.train.size() < cfg.batch_size) fail(ErrorKind::Input, "finetune_lora: not enough rows for one batch");

  TrainResult res;
  res.codebook = codebook;
  res.decoder = base.lora ? base : init_lora(base, cfg.lora_rank, Rng::derive(cfg.seed, kLoraInitTag).next());
  res.report = run_epochs(split, res.codebook, res.decoder, cfg, on_epoch);
  return res;
}

}  // namespace dpq

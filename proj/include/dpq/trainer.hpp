#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dpq/codebook.hpp"
#include "dpq/decoder.hpp"
#include "dpq/descriptor_store.hpp"
#include "dpq/losses.hpp"

namespace dpq {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 1000;
  double lr = 0.001;
  double margin = 0.9;
  double tau = 0.05;
  double lambda_d = 1.0;
  std::size_t M = 4;
  std::size_t K = 256;
  std::uint64_t seed = 0;
  bool lora_mode = false;
  LossVariant loss_variant = LossVariant::TripletCombined;

  std::size_t hidden = 256;
  std::size_t lora_rank = 2;
  std::size_t kmeans_iters = 25;
  std::size_t npair_n = 10;
  double val_fraction = 0.1;
  // Per-group learning-rate multipliers.
  double lr_codebook_scale = 1.0;
  double lr_decoder_scale = 1.0;

  void validate() const;
  LossConfig loss() const;
};

// Flat key=value text, '#' starts a comment. Keys are the field names above;
// unknown keys are a config error. Values not present keep `base`'s value.
TrainConfig parse_train_config(const std::string& text, TrainConfig base = {});
TrainConfig load_train_config(const std::string& path, TrainConfig base = {});
// Applies one key=value pair.
void set_train_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
// Canonical text form, one key per line, stable order.
std::string to_config_text(const TrainConfig& cfg);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double recon_err = 0.0;
  double recon_median = 0.0;
  double recall1 = 0.0;
};

struct ValidationMetrics {
  double loss = 0.0;
  double recon_mean = 0.0;
  double recon_median = 0.0;
  double recall1 = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  // Hard-PQ reconstruction error of the initial codebook on the validation split.
  double initial_pq_recon_err = 0.0;
  ValidationMetrics initial;
  double wall_time_s = 0.0;
  std::string codebook_hash;
  std::string decoder_hash;

  // "epoch train_loss val_loss recon_err recall1" per line.
  std::string to_text() const;
};

struct TrainResult {
  Codebook codebook;
  DecoderWeights decoder;
  TrainReport report;
};

struct DataSplit {
  DescriptorSet train;
  DescriptorSet validation;
};

// Seeded shuffle, then the first val_fraction of rows (at least 2) validate.
DataSplit split_train_validation(const DescriptorSet& set, double val_fraction, std::uint64_t seed);

using EpochCallback = std::function<void(const EpochStats&)>;

TrainResult train(const DescriptorSet& set, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Freezes the codebook and W1/W2; only LoRA factors move.
TrainResult finetune_lora(const DescriptorSet& set, const Codebook& codebook, const DecoderWeights& base,
                          const TrainConfig& cfg, const EpochCallback& on_epoch = {});

ValidationMetrics validate(const DescriptorSet& set, const Codebook& codebook, const DecoderWeights& decoder,
                           const TrainConfig& cfg);

}  // namespace dpq

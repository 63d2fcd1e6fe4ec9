#pragma once

#include "mcg/config.hpp"
#include "mcg/dataset.hpp"
#include "mcg/harness.hpp"
#include "mcg/model.hpp"
#include "mcg/training.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace mcg::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitCheckpointMismatch = 3;

/// Parses `args` (without the program name) and runs one subcommand.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct DataSplits {
  Dataset train;
  Dataset test;
};
DataSplits make_datasets(const ExperimentConfig& config);

Network make_network(const ExperimentConfig& config, const Dataset& train);

struct TrainOutcome {
  Network net;
  std::vector<EpochMetrics> metrics;
  double final_train_loss = 0.0;
  double noisy_psnr = 0.0; // denoising only: PSNR of the unprocessed test inputs
};
TrainOutcome run_training(const ExperimentConfig& config, const DataSplits& data);

/// First-layer mGE over `mge.seeds` seeds: a fresh layer, image batch and
/// probe transforms per seed.
struct MgeStudy {
  std::vector<std::uint64_t> seeds;
  std::vector<MgeResult> results;
};
MgeStudy run_mge_study(const ExperimentConfig& config);

/// Writes the basis rasters as CSV grids: one row per grid row, a blank line
/// between basis functions.
void write_basis_csv(const std::filesystem::path& path, const FilterBasis& basis,
                     const TransformParams& t);

/// Output directory `<out>/<config hash>`, created with a config.txt copy.
std::filesystem::path prepare_run_dir(const std::filesystem::path& out, const ExperimentConfig& config);

} // namespace mcg::cli

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "deepproposal/io.hpp"
#include "deepproposal/synth.hpp"

namespace dp {

// End-to-end batch steps shared by the command-line tool and the benchmark
// harness. Every step is deterministic given its inputs and seeds.

struct SelectWindowsOptions {
  int k = 50;
  int z_max = 20;
  std::vector<double> scales{227.0, 300.0, 400.0, 600.0};
  std::vector<double> alphas;           // defaults to 0.50..0.95 step 0.05
  std::optional<double> stride;         // defaults to the layer-5 stride on file
};

WindowCatalog run_select_windows(const DatasetManifest& manifest,
                                 const SelectWindowsOptions& opts);

struct TrainOptions {
  TrainConfig train;
  std::vector<double> scales{227.0, 300.0, 400.0, 600.0};
};

ModelBundle run_train(const DatasetManifest& manifest, const WindowCatalog& catalog,
                      const TrainOptions& opts);

struct ProposeOptions {
  CascadeConfig cascade;
  int num_proposals = 1000;  // per image, capped by the cascade budget
  int threads = 1;
  std::filesystem::path external_edge_dir;  // optional contour provider
};

struct ProposeSummary {
  std::size_t images = 0;
  std::size_t total_boxes = 0;
  std::map<int, std::size_t> stage_output_counts;  // stage -> summed outputs
  std::map<int, double> stage_wall_seconds;        // stage -> summed wall time
  std::size_t stage2_dropped = 0;
  std::size_t stage3_flagged = 0;
};

// Writes proposals.jsonl and run_manifest.json under out_dir.
ProposeSummary run_propose(const DatasetManifest& manifest, const ModelBundle& bundle,
                           const ProposeOptions& opts,
                           const std::filesystem::path& out_dir);

// Builds the metric report from a proposal file and writes CSVs + summary.json.
EvalReport run_evaluate(const DatasetManifest& manifest,
                        const std::filesystem::path& proposals_path,
                        const EvalConfig& cfg, const std::filesystem::path& out_dir);

// Worker count: explicit argument wins, otherwise the DEEPPROPOSAL_THREADS
// environment variable, otherwise 1.
int resolve_thread_count(int requested);

// Deterministic parallel map: fn(i) runs for i in [0, n) on `threads` workers;
// results are consumed in index order regardless of scheduling.
void parallel_for_ordered(std::size_t n, int threads,
                          const std::function<void(std::size_t)>& fn);

}  // namespace dp

#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "deepproposal/errors.hpp"
#include "deepproposal/pipeline.hpp"

namespace {

int run_synth(const dp::SynthConfig& cfg, const std::string& out_dir) {
  dp::generate_synthetic(cfg, out_dir);
  std::cout << "wrote " << cfg.images << " " << cfg.split << " images under "
            << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeepProposal: coarse-to-fine object proposal cascade over "
               "precomputed convolutional feature maps"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark dataset");
  dp::SynthConfig synth_cfg;
  std::string synth_out;
  int synth_train = 200, synth_test = 100;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_cfg.seed, "master seed");
  synth->add_option("--train", synth_train, "number of training images");
  synth->add_option("--test", synth_test, "number of test images");
  synth->add_option("--noise", synth_cfg.noise_level, "background noise level");
  synth->add_option("--min-objects", synth_cfg.min_objects, "min objects per image");
  synth->add_option("--max-objects", synth_cfg.max_objects, "max objects per image");
  synth->add_option("--canvas-width", synth_cfg.canvas_width, "canvas width, px");
  synth->add_option("--canvas-height", synth_cfg.canvas_height, "canvas height, px");
  synth->add_option("--scales", synth_cfg.scales, "min-side scale targets");

  // select-windows
  auto* select = app.add_subcommand("select-windows",
                                    "greedily pick sliding-window shapes from gt");
  std::string select_manifest, select_out;
  dp::SelectWindowsOptions select_opts;
  double select_stride = 0.0;
  select->add_option("--manifest", select_manifest, "training manifest")->required();
  select->add_option("--out", select_out, "catalog JSON path")->required();
  select->add_option("--k", select_opts.k, "number of shapes to keep");
  select->add_option("--z-max", select_opts.z_max, "max shape side, cells");
  select->add_option("--scales", select_opts.scales, "min-side scale targets");
  select->add_option("--stride", select_stride,
                     "coarse-layer stride (default: from fmap headers)");

  // train
  auto* train = app.add_subcommand("train", "train per-scale objectness models");
  std::string train_manifest, train_catalog, train_out;
  dp::TrainOptions train_opts;
  train->add_option("--manifest", train_manifest, "training manifest")->required();
  train->add_option("--catalog", train_catalog, "window catalog JSON")->required();
  train->add_option("--out", train_out, "model bundle directory")->required();
  train->add_option("--scales", train_opts.scales, "min-side scale targets");
  train->add_option("--seed", train_opts.train.seed, "training seed");
  train->add_option("--epochs", train_opts.train.epochs, "SGD epochs");
  train->add_option("--c", train_opts.train.c, "inverse regularization strength");

  // propose
  auto* propose = app.add_subcommand("propose", "run the proposal cascade");
  std::string propose_manifest, propose_models, propose_out, propose_edges;
  double propose_beta = 0.5;
  int propose_num = 1000, propose_threads = 0;
  bool no_refine = false;
  propose->add_option("--manifest", propose_manifest, "dataset manifest")->required();
  propose->add_option("--models", propose_models, "model bundle directory")->required();
  propose->add_option("--out", propose_out, "output directory")->required();
  propose->add_option("--beta", propose_beta, "target overlap: 0.5 or 0.7")
      ->check(CLI::IsMember({0.5, 0.7}));
  propose->add_option("--num", propose_num, "proposals per image");
  propose->add_option("--threads", propose_threads,
                      "worker threads (default: DEEPPROPOSAL_THREADS or 1)");
  propose->add_option("--external-edges", propose_edges,
                      "directory of <image>_s<scale>.fmap contour planes");
  propose->add_flag("--no-refine", no_refine, "skip the contour refinement stage");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "compute the metric suite");
  std::string eval_manifest, eval_proposals, eval_out;
  dp::EvalConfig eval_cfg;
  evaluate->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  evaluate->add_option("--proposals", eval_proposals, "proposal JSONL file")->required();
  evaluate->add_option("--out", eval_out, "report directory")->required();
  evaluate->add_option("--iou", eval_cfg.beta, "overlap threshold for recall-vs-N");
  evaluate->add_option("--budget", eval_cfg.budget, "budget for recall-vs-IoU and AUC");
  evaluate->add_option("--max-boxes", eval_cfg.max_boxes, "cap on the N grid");

  // edge-map
  auto* edge = app.add_subcommand("edge-map",
                                  "contour magnitudes from a feature map (FMAP in/out)");
  std::string edge_in, edge_out;
  edge->add_option("--in", edge_in, "input fmap")->required();
  edge->add_option("--out", edge_out, "output single-channel fmap")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or a usage diagnostic
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      dp::SynthConfig train_cfg = synth_cfg;
      train_cfg.images = synth_train;
      train_cfg.split = "train";
      dp::SynthConfig test_cfg = synth_cfg;
      test_cfg.images = synth_test;
      test_cfg.split = "test";
      int rc = run_synth(train_cfg, synth_out + "/train");
      if (rc == 0 && synth_test > 0) rc = run_synth(test_cfg, synth_out + "/test");
      return rc;
    }
    if (select->parsed()) {
      const dp::DatasetManifest manifest = dp::read_manifest(select_manifest);
      dp::validate_manifest(manifest);
      if (select_stride > 0.0) select_opts.stride = select_stride;
      const dp::WindowCatalog catalog = dp::run_select_windows(manifest, select_opts);
      dp::write_catalog(catalog, select_out);
      std::cout << "selected " << catalog.shapes.size() << " window shapes -> "
                << select_out << "\n";
      return 0;
    }
    if (train->parsed()) {
      const dp::DatasetManifest manifest = dp::read_manifest(train_manifest);
      dp::validate_manifest(manifest);
      const dp::WindowCatalog catalog = dp::read_catalog(train_catalog);
      const dp::ModelBundle bundle = dp::run_train(manifest, catalog, train_opts);
      dp::write_model_bundle(bundle, train_out);
      std::cout << "trained " << bundle.models.size() << " models -> " << train_out
                << "\n";
      return 0;
    }
    if (propose->parsed()) {
      const dp::DatasetManifest manifest = dp::read_manifest(propose_manifest);
      const dp::ModelBundle bundle = dp::read_model_bundle(propose_models);
      dp::ProposeOptions opts;
      opts.cascade = dp::CascadeConfig::preset(propose_beta);
      opts.cascade.scales = bundle.scales;
      opts.cascade.refine_enabled = !no_refine;
      opts.num_proposals = propose_num;
      opts.threads = propose_threads;
      if (!propose_edges.empty()) opts.external_edge_dir = propose_edges;
      const dp::ProposeSummary summary = dp::run_propose(manifest, bundle, opts,
                                                         propose_out);
      std::cout << "proposed " << summary.total_boxes << " boxes over "
                << summary.images << " images -> " << propose_out << "\n";
      return 0;
    }
    if (evaluate->parsed()) {
      const dp::DatasetManifest manifest = dp::read_manifest(eval_manifest);
      const dp::EvalReport report =
          dp::run_evaluate(manifest, eval_proposals, eval_cfg, eval_out);
      std::cout << "auc " << report.auc << ", ar@1000 " << report.ar_at_1000 << " -> "
                << eval_out << "\n";
      return 0;
    }
    if (edge->parsed()) {
      const dp::FeatureMap fm = dp::read_fmap(edge_in);
      const dp::EdgeMap em = dp::edge_map_from_features(fm);
      dp::FeatureMap out;
      out.layer_id = fm.layer_id;
      out.scale_id = fm.scale_id;
      out.stride = fm.stride;
      out.channels = 1;
      out.height = em.height();
      out.width = em.width();
      out.data = em.magnitudes();
      dp::write_fmap(out, edge_out);
      std::cout << "edge map " << out.width << "x" << out.height << " -> " << edge_out
                << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

// tools/grdn_main.cpp

// Copyright 2026  The grdn authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "grdn/commands.hpp"
#include "grdn/errors.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::int64_t seed = -1;
  int threads = -1;
  std::string out_dir;
};

void add_common(CLI::App *cmd, CommonArgs &args) {
  cmd->add_option("-c,--config", args.config_path, "experiment config (JSON)");
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--threads", args.threads, "worker threads (0 = hardware)");
  cmd->add_option("--out-dir", args.out_dir, "output directory");
}

// Precedence: flag > GRDN_SEED env > config file > default.
grdn::ExperimentConfig resolve_config(const CommonArgs &args) {
  grdn::ExperimentConfig cfg = args.config_path.empty()
                                   ? grdn::default_config()
                                   : grdn::load_config_file(args.config_path);
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (args.threads >= 0) cfg.threads = args.threads;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"gradient-feature pipeline over feed-forward networks"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string checkpoint, gradnet_ckpt, grads_path, out_path, metrics_path;
  double alpha = -1.0, q = -1.0;
  std::int64_t sample = -1;
  int epochs = -1;

  CLI::App *train_base = app.add_subcommand(
      "train-base", "train the base network with accuracy-threshold snapshots");
  add_common(train_base, common);
  train_base->add_option("--epochs", epochs, "override train.epochs");

  CLI::App *extract = app.add_subcommand(
      "extract-grads", "write sparsified, normalized gradient features");
  add_common(extract, common);
  extract->add_option("--checkpoint", checkpoint, "base checkpoint")->required();
  extract->add_option("-o,--out", out_path, "output .grdf path")->required();
  extract->add_option("--q", q, "override grads.q");

  CLI::App *train_gn = app.add_subcommand(
      "train-gradnet", "train the shallow classifier on gradient features");
  add_common(train_gn, common);
  train_gn->add_option("--checkpoint", checkpoint, "base checkpoint")->required();
  train_gn->add_option("--grads", grads_path, "frozen .grdf features (optional)");
  train_gn->add_option("-o,--out", out_path, "output model path")->required();
  train_gn->add_option("--metrics", metrics_path, "metrics CSV path");
  train_gn->add_option("--epochs", epochs, "override gradnet.epochs");
  train_gn->add_option("--q", q, "override grads.q");

  CLI::App *eval = app.add_subcommand(
      "eval", "report base vs classifier accuracy and relative gain");
  add_common(eval, common);
  eval->add_option("--base", checkpoint, "base checkpoint")->required();
  eval->add_option("--gradnet", gradnet_ckpt, "classifier checkpoint")->required();
  eval->add_option("-o,--out", out_path, "output prefix (.json/.csv)")->required();

  CLI::App *rbm = app.add_subcommand(
      "rbm", "train an RBM and compare hidden vs normalized tangent features");
  add_common(rbm, common);

  CLI::App *kernel_check = app.add_subcommand(
      "kernel-check", "metric symmetry, PSD and reparametrization invariance");
  add_common(kernel_check, common);
  kernel_check->add_option("-o,--out", out_path, "write the JSON report here too");

  CLI::App *gradgraph = app.add_subcommand(
      "gradgraph", "export the sparsified gradient graph of one sample as DOT");
  add_common(gradgraph, common);
  gradgraph->add_option("--checkpoint", checkpoint, "base checkpoint")->required();
  gradgraph->add_option("-o,--out", out_path, "output .dot path")->required();
  gradgraph->add_option("--alpha", alpha, "override gradgraph.alpha");
  gradgraph->add_option("--q", q, "override gradgraph.q");
  gradgraph->add_option("--sample", sample, "override gradgraph.sample");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  }

  try {
    grdn::ExperimentConfig cfg = resolve_config(common);
    if (epochs > 0) {
      cfg.train.epochs = epochs;
      cfg.gradnet.epochs = epochs;
    }
    if (q >= 0.0) {
      cfg.grads.q = q;
      cfg.gradgraph.q = q;
    }
    if (alpha > 0.0) cfg.gradgraph.alpha = alpha;
    if (sample >= 0) cfg.gradgraph.sample = static_cast<std::size_t>(sample);

    if (train_base->parsed()) {
      const grdn::TrainBaseResult r = grdn::run_train_base(cfg);
      std::cerr << "final accuracy " << r.final_accuracy << ", "
                << r.snapshot_paths.size() << " snapshot(s), final checkpoint "
                << r.final_path << "\n";
    } else if (extract->parsed()) {
      const grdn::ExtractResult r = grdn::run_extract(cfg, checkpoint, out_path);
      std::cerr << "wrote " << r.count << " features to " << r.path << "\n";
    } else if (train_gn->parsed()) {
      const grdn::TrainGradnetResult r =
          grdn::run_train_gradnet(cfg, checkpoint, grads_path, out_path, metrics_path);
      std::cerr << "wrote " << r.model_path << "\n";
    } else if (eval->parsed()) {
      grdn::run_eval(cfg, checkpoint, gradnet_ckpt, out_path);
    } else if (rbm->parsed()) {
      grdn::run_rbm(cfg);
    } else if (kernel_check->parsed()) {
      const grdn::KernelCheckResult r = grdn::run_kernel_check(cfg, out_path);
      if (!r.pass) return 4;
    } else if (gradgraph->parsed()) {
      const grdn::GradGraphResult r = grdn::run_gradgraph(cfg, checkpoint, out_path);
      std::cerr << "wrote " << r.dot_path << " (" << r.graph.edges.size()
                << " edges)\n";
    }
  } catch (const grdn::ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const grdn::UsageError &e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const grdn::ParseError &e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 3;
  } catch (const grdn::DataError &e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const grdn::NumericError &e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
